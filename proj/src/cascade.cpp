#include "sppnet/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sppnet/errors.hpp"

namespace sppnet::cascade {
namespace {

using nn::Activation;
using nn::DenseLayer;

void expect_shape(const DenseLayer& layer, std::string_view name, std::size_t fan_in, std::size_t fan_out,
                  Activation act) {
  if (layer.fan_in() != fan_in || layer.fan_out() != fan_out) {
    throw DomainError("block " + std::string(name) + " is " + std::to_string(layer.fan_out()) + "x" +
                      std::to_string(layer.fan_in()) + ", expected " + std::to_string(fan_out) + "x" +
                      std::to_string(fan_in));
  }
  if (layer.activation() != act) {
    throw DomainError("block " + std::string(name) + " must use " + std::string(nn::to_string(act)));
  }
  if (layer.weights().size() != fan_in * fan_out || layer.bias().size() != fan_out) {
    throw DomainError("block " + std::string(name) + " has inconsistent storage");
  }
}

FrontBlock blank_front() {
  return {DenseLayer(kInputDim, kParamDim, Activation::logsig), DenseLayer(kInputDim, kHiddenA, Activation::tansig),
          DenseLayer(kHiddenA, kStage1Dim, Activation::logsig)};
}

BackBlock blank_back() {
  return {DenseLayer(kStage2InputDim, kHiddenB, Activation::tansig),
          DenseLayer(kHiddenB, kStage2Dim, Activation::tansig),
          DenseLayer(kMergedDim, kOutputDim, Activation::purelin)};
}

void require_finite(std::span<const double> v, std::string_view where) {
  for (double d : v) {
    if (!std::isfinite(d)) throw DomainError("non-finite activation in " + std::string(where));
  }
}

template <std::size_t N>
std::array<double, N> to_array(const std::vector<double>& v) {
  std::array<double, N> out{};
  std::copy_n(v.begin(), N, out.begin());
  return out;
}

template <std::size_t N>
double max_abs(const std::array<double, N>& v) {
  double m = 0.0;
  for (double d : v) m = std::max(m, std::abs(d));
  return m;
}

// d(1/2 ||t - y||^2)/dy
std::vector<double> loss_grad(std::span<const double> target, std::span<const double> y) {
  std::vector<double> g(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) g[k] = -(target[k] - y[k]);
  return g;
}

std::vector<double> merged_input(const StageOutput& s) {
  std::vector<double> in(kMergedDim, 0.0);
  std::copy(s.stage1.begin(), s.stage1.end(), in.begin());
  if (s.stage2) std::copy(s.stage2->begin(), s.stage2->end(), in.begin() + kStage1Dim);
  return in;
}

void check_well_formed(const StageOutput& s) {
  if (s.validated != s.stage2.has_value()) {
    throw ContractError("stage output: y^IVb must be present exactly when validated");
  }
}

}  // namespace

std::string_view block_name(Block b) {
  switch (b) {
    case Block::II:
      return "II";
    case Block::IIIa:
      return "IIIa";
    case Block::IVa:
      return "IVa";
    case Block::IIIb:
      return "IIIb";
    case Block::IVb:
      return "IVb";
    case Block::VI:
      return "VI";
  }
  return "?";
}

CascadeNet::CascadeNet(FrontBlock front, BackBlock back, omega::WindowLimits limits)
    : front_(std::move(front)), back_(std::move(back)), limits_(limits) {
  expect_shape(front_.params, "II", kInputDim, kParamDim, Activation::logsig);
  expect_shape(front_.hidden, "IIIa", kInputDim, kHiddenA, Activation::tansig);
  expect_shape(front_.output, "IVa", kHiddenA, kStage1Dim, Activation::logsig);
  expect_shape(back_.hidden, "IIIb", kStage2InputDim, kHiddenB, Activation::tansig);
  expect_shape(back_.output, "IVb", kHiddenB, kStage2Dim, Activation::tansig);
  expect_shape(back_.merge, "VI", kMergedDim, kOutputDim, Activation::purelin);
  limits_.validate();
  if (limits_.component >= kStage1Dim) {
    throw DomainError("validation component must be < " + std::to_string(kStage1Dim));
  }
}

CascadeNet CascadeNet::create(std::uint64_t seed, double init_scale, omega::WindowLimits limits) {
  if (!(init_scale > 0.0)) throw DomainError("init_scale must be positive");
  Engine engine(seed);
  auto front = blank_front();
  auto back = blank_back();
  for (DenseLayer* l : {&front.params, &front.hidden, &front.output, &back.hidden, &back.output, &back.merge}) {
    l->initialize(engine, init_scale);
  }
  return CascadeNet(std::move(front), std::move(back), limits);
}

CascadeNet CascadeNet::zeros(omega::WindowLimits limits) { return CascadeNet(blank_front(), blank_back(), limits); }

const nn::DenseLayer& CascadeNet::layer(Block b) const {
  switch (b) {
    case Block::II:
      return front_.params;
    case Block::IIIa:
      return front_.hidden;
    case Block::IVa:
      return front_.output;
    case Block::IIIb:
      return back_.hidden;
    case Block::IVb:
      return back_.output;
    case Block::VI:
      return back_.merge;
  }
  throw DomainError("unknown block");
}

std::vector<double> CascadeNet::flatten() const {
  std::vector<double> out;
  for (Block b : kAllBlocks) {
    const auto& l = layer(b);
    out.insert(out.end(), l.weights().begin(), l.weights().end());
    out.insert(out.end(), l.bias().begin(), l.bias().end());
  }
  return out;
}

bool CascadeNet::all_finite() const {
  return std::all_of(kAllBlocks.begin(), kAllBlocks.end(), [this](Block b) { return layer(b).all_finite(); });
}

Stage1Vector Stage1Result::y() const { return to_array<kStage1Dim>(output.output); }
Stage2Vector Stage2Result::y() const { return to_array<kStage2Dim>(output.output); }

Input input_of(const data::Sample& s) { return {s.lambda0_nm, s.t_nm}; }

Targets encode_targets(const data::Sample& s, const ParamVector& param_targets) {
  Targets t;
  t.params = param_targets;
  t.stage1.fill(0.5 + 0.4 * s.lambda_spp_nm);
  t.stage2.fill(0.8 * s.L_spp_nm);
  t.output = {s.lambda_spp_nm, s.L_spp_nm};
  return t;
}

Stage1Result stage1_forward(const CascadeNet& net, std::span<const double> x) {
  if (x.size() != kInputDim) throw DomainError("stage1_forward expects a 2-vector");
  require_finite(x, "input layer I");
  Stage1Result r;
  r.params = nn::forward(net.front().params, x);
  r.hidden = nn::forward(net.front().hidden, x);  // x^IIIa = x^I
  r.output = nn::forward(net.front().output, r.hidden.output);
  require_finite(r.params.output, "layer II");
  require_finite(r.output.output, "layer IVa");

  const auto& lim = net.limits();
  const auto& p = r.params.output;
  r.anchor = p[0];
  const double span = static_cast<double>(lim.max_delta_tau - lim.min_delta_tau);
  r.window.delta_tau = lim.min_delta_tau + static_cast<std::size_t>(std::lround(p[1] * span));
  r.window.sigma = std::clamp(lim.min_sigma + (1.0 - lim.min_sigma) * p[2], lim.min_sigma, 1.0);
  r.window.tau = 0;
  return r;
}

Stage2Result stage2_forward(const CascadeNet& net, std::span<const double> x, std::span<const double> y_stage1,
                            bool validated) {
  if (!validated) throw ContractError("stage2_forward called on a sample that did not pass validation");
  if (x.size() != kInputDim || y_stage1.size() != kStage1Dim) throw DomainError("stage2_forward: bad input sizes");
  std::vector<double> in(x.begin(), x.end());
  in.insert(in.end(), y_stage1.begin(), y_stage1.end());
  Stage2Result r;
  r.hidden = nn::forward(net.back().hidden, in);
  r.output = nn::forward(net.back().output, r.hidden.output);
  require_finite(r.output.output, "layer IVb");
  return r;
}

OutputVector merge_and_output(const nn::DenseLayer& merge, const StageOutput& s) {
  check_well_formed(s);
  const auto in = merged_input(s);
  const auto c = nn::forward(merge, in);
  OutputVector y{c.output[0], c.output[1]};
  if (!s.validated) y[1] = std::numeric_limits<double>::quiet_NaN();
  return y;
}

double ErrorSignals::local_a() const { return max_abs(stage1); }

std::optional<double> ErrorSignals::local_b() const {
  if (!stage2) return std::nullopt;
  return max_abs(*stage2);
}

double ErrorSignals::global() const { return std::max(local_a(), local_b().value_or(0.0)); }

double ErrorSignals::output_error() const {
  double e = std::abs(output[0]);
  if (stage2) e = std::max(e, std::abs(output[1]));
  return e;
}

void phase_a_update(FrontBlock& front, const Stage1Result& s1, const Targets& targets, double eta, WriteAudit* audit) {
  const auto g_params = loss_grad(targets.params, s1.params.output);
  const DenseLayer* param_chain[] = {&front.params};
  const nn::ForwardCache param_caches[] = {s1.params};
  const auto gp = nn::backprop_chain(param_chain, param_caches, g_params);

  const auto g_out = loss_grad(targets.stage1, s1.output.output);
  const DenseLayer* chain[] = {&front.hidden, &front.output};
  const nn::ForwardCache caches[] = {s1.hidden, s1.output};
  const auto g = nn::backprop_chain(chain, caches, g_out);

  // All gradients are computed before the first write, so a non-finite
  // gradient leaves the whole block untouched.
  for (const auto* grads : {&gp, &g}) {
    for (const auto& lg : *grads) {
      for (double v : lg.weights) {
        if (!std::isfinite(v)) throw DomainError("non-finite gradient in Phase A");
      }
      for (double v : lg.bias) {
        if (!std::isfinite(v)) throw DomainError("non-finite gradient in Phase A");
      }
    }
  }
  nn::gd_update(front.params, gp[0], eta);
  nn::gd_update(front.hidden, g[0], eta);
  nn::gd_update(front.output, g[1], eta);
  if (audit) {
    audit->record(Block::II, WriteAudit::kPhaseA);
    audit->record(Block::IIIa, WriteAudit::kPhaseA);
    audit->record(Block::IVa, WriteAudit::kPhaseA);
  }
}

PhaseBResult phase_b_update(CascadeNet& net, std::span<const double> x, const Stage1Vector& y_stage1,
                            const Targets& targets, bool validated, double eta, WriteAudit* audit) {
  if (!(eta > 0.0)) throw DomainError("learning rate must be positive");
  auto& back = net.back();
  PhaseBResult r;
  r.merged.stage1 = y_stage1;
  r.merged.validated = validated;

  std::optional<Stage2Result> s2;
  if (validated) {
    s2 = stage2_forward(net, x, y_stage1, true);
    r.merged.stage2 = s2->y();
    Stage2Vector e{};
    for (std::size_t k = 0; k < kStage2Dim; ++k) e[k] = targets.stage2[k] - s2->output.output[k];
    r.stage2_error = e;
  }

  const auto vi_cache = nn::forward(back.merge, merged_input(r.merged));
  r.output = {vi_cache.output[0], vi_cache.output[1]};
  r.output_error = {targets.output[0] - r.output[0], targets.output[1] - r.output[1]};
  if (!std::isfinite(r.output[0]) || (validated && !std::isfinite(r.output[1]))) {
    throw DomainError("non-finite activation in layer VI");
  }

  if (validated) {
    const auto g_b = loss_grad(targets.stage2, s2->output.output);
    const DenseLayer* chain[] = {&back.hidden, &back.output};
    const nn::ForwardCache caches[] = {s2->hidden, s2->output};
    const auto g = nn::backprop_chain(chain, caches, g_b);

    const auto g_vi = loss_grad(targets.output, vi_cache.output);
    const DenseLayer* vi_chain[] = {&back.merge};
    const nn::ForwardCache vi_caches[] = {vi_cache};
    const auto gv = nn::backprop_chain(vi_chain, vi_caches, g_vi);

    for (const auto* grads : {&g, &gv}) {
      for (const auto& lg : *grads) {
        for (double v : lg.weights) {
          if (!std::isfinite(v)) throw DomainError("non-finite gradient in Phase B");
        }
      }
    }
    nn::gd_update(back.hidden, g[0], eta);
    nn::gd_update(back.output, g[1], eta);
    nn::gd_update(back.merge, gv[0], eta);
    if (audit) {
      audit->record(Block::IIIb, WriteAudit::kPhaseB);
      audit->record(Block::IVb, WriteAudit::kPhaseB);
      audit->record(Block::VI, WriteAudit::kPhaseB);
    }
  } else {
    r.output[1] = std::numeric_limits<double>::quiet_NaN();
    r.output_error[1] = std::numeric_limits<double>::quiet_NaN();
    // Only neuron 1 of VI learns; its IVb inputs are the zero padding.
    const double delta = -r.output_error[0];
    const auto& in = vi_cache.input;
    for (std::size_t c = 0; c < kMergedDim; ++c) {
      if (!std::isfinite(delta * in[c])) throw DomainError("non-finite gradient in Phase B");
    }
    for (std::size_t c = 0; c < kMergedDim; ++c) back.merge.weight(0, c) -= eta * delta * in[c];
    back.merge.bias()[0] -= eta * delta;
    if (audit) audit->record(Block::VI, WriteAudit::kPhaseB);
  }
  return r;
}

ErrorSignals train_step(CascadeNet& net, const data::Sample& normalized, const ParamVector& param_targets,
                        double eta, bool validated) {
  if (!(eta > 0.0)) throw DomainError("learning rate must be positive");
  const auto x = input_of(normalized);
  const auto targets = encode_targets(normalized, param_targets);
  const auto s1 = stage1_forward(net, x);

  ErrorSignals e;
  for (std::size_t k = 0; k < kStage1Dim; ++k) e.stage1[k] = targets.stage1[k] - s1.output.output[k];

  phase_a_update(net.front(), s1, targets, eta);
  const auto b = phase_b_update(net, x, s1.y(), targets, validated, eta);
  e.stage2 = b.stage2_error;
  e.output = b.output_error;
  return e;
}

}  // namespace sppnet::cascade
