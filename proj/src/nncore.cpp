#include "sppnet/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "csv.hpp"
#include "sppnet/errors.hpp"

namespace sppnet::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tansig:
      return "tansig";
    case Activation::logsig:
      return "logsig";
    case Activation::purelin:
      return "purelin";
  }
  return "purelin";
}

Activation parse_activation(std::string_view name) {
  if (name == "tansig") return Activation::tansig;
  if (name == "logsig") return Activation::logsig;
  if (name == "purelin") return Activation::purelin;
  throw DataError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::tansig:
      return std::tanh(x);
    case Activation::logsig:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::purelin:
      return x;
  }
  return x;
}

double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::tansig:
      return 1.0 - y * y;
    case Activation::logsig:
      return y * (1.0 - y);
    case Activation::purelin:
      return 1.0;
  }
  return 1.0;
}

std::vector<double> activation(Activation a, std::span<const double> x) {
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [a](double v) { return activate(a, v); });
  return y;
}

DenseLayer::DenseLayer(std::size_t fan_in, std::size_t fan_out, Activation act)
    : fan_in_(fan_in), fan_out_(fan_out), act_(act), weights_(fan_in * fan_out, 0.0), bias_(fan_out, 0.0) {
  if (fan_in == 0 || fan_out == 0) throw DomainError("layer dimensions must be positive");
}

void DenseLayer::initialize(Engine& engine, double init_scale) {
  const double scale = init_scale / std::sqrt(static_cast<double>(fan_in_));
  for (auto& w : weights_) w = uniform(engine, -scale, scale);
  for (auto& b : bias_) b = uniform(engine, -scale, scale);
}

bool DenseLayer::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(weights_.begin(), weights_.end(), finite) && std::all_of(bias_.begin(), bias_.end(), finite);
}

ForwardCache forward(const DenseLayer& layer, std::span<const double> x) {
  if (x.size() != layer.fan_in()) {
    throw DomainError("forward: input has " + std::to_string(x.size()) + " entries, layer expects " +
                      std::to_string(layer.fan_in()));
  }
  ForwardCache cache;
  cache.input.assign(x.begin(), x.end());
  cache.pre_activation.resize(layer.fan_out());
  cache.output.resize(layer.fan_out());
  for (std::size_t r = 0; r < layer.fan_out(); ++r) {
    double z = layer.bias()[r];
    for (std::size_t c = 0; c < layer.fan_in(); ++c) z += layer.weight(r, c) * x[c];
    cache.pre_activation[r] = z;
    cache.output[r] = activate(layer.activation(), z);
  }
  return cache;
}

bool LayerGradient::all_zero() const {
  auto zero = [](double v) { return v == 0.0; };
  return std::all_of(weights.begin(), weights.end(), zero) && std::all_of(bias.begin(), bias.end(), zero);
}

std::vector<LayerGradient> backprop_chain(std::span<const DenseLayer* const> layers,
                                          std::span<const ForwardCache> caches, std::span<const double> output_grad,
                                          std::vector<double>* input_grad) {
  if (layers.empty() || layers.size() != caches.size()) throw DomainError("backprop: layer/cache count mismatch");
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l]->fan_out() != layers[l + 1]->fan_in()) throw DomainError("backprop: inconsistent layer chain");
  }
  if (output_grad.size() != layers.back()->fan_out()) throw DomainError("backprop: output gradient size mismatch");

  std::vector<LayerGradient> grads(layers.size());
  std::vector<double> upstream(output_grad.begin(), output_grad.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = *layers[l];
    const auto& cache = caches[l];
    std::vector<double> delta(layer.fan_out());
    for (std::size_t r = 0; r < layer.fan_out(); ++r) {
      delta[r] = upstream[r] * activation_slope(layer.activation(), cache.output[r]);
    }
    auto& g = grads[l];
    g.weights.resize(layer.fan_out() * layer.fan_in());
    for (std::size_t r = 0; r < layer.fan_out(); ++r) {
      for (std::size_t c = 0; c < layer.fan_in(); ++c) g.weights[r * layer.fan_in() + c] = delta[r] * cache.input[c];
    }
    g.bias = delta;

    if (l > 0 || input_grad) {
      std::vector<double> down(layer.fan_in(), 0.0);
      for (std::size_t r = 0; r < layer.fan_out(); ++r) {
        for (std::size_t c = 0; c < layer.fan_in(); ++c) down[c] += layer.weight(r, c) * delta[r];
      }
      upstream = std::move(down);
    }
  }
  if (input_grad) *input_grad = std::move(upstream);
  return grads;
}

std::vector<LayerGradient> backprop(std::span<const DenseLayer> layers, std::span<const double> x,
                                    std::span<const double> target) {
  if (layers.empty()) throw DomainError("backprop: empty layer chain");
  std::vector<ForwardCache> caches;
  std::vector<const DenseLayer*> chain;
  std::span<const double> input = x;
  for (const auto& layer : layers) {
    caches.push_back(forward(layer, input));
    chain.push_back(&layer);
    input = caches.back().output;
  }
  const auto& y = caches.back().output;
  if (target.size() != y.size()) throw DomainError("backprop: target size mismatch");
  // d(1/2 ||t - y||^2)/dy = -(t - y)
  std::vector<double> grad(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) grad[k] = -(target[k] - y[k]);
  return backprop_chain(chain, caches, grad);
}

void gd_update(DenseLayer& layer, const LayerGradient& grad, double eta) {
  if (!(eta > 0.0)) throw DomainError("learning rate must be positive");
  if (grad.weights.size() != layer.weights().size() || grad.bias.size() != layer.bias().size()) {
    throw DomainError("gd_update: gradient shape mismatch");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(grad.weights.begin(), grad.weights.end(), finite) ||
      !std::all_of(grad.bias.begin(), grad.bias.end(), finite)) {
    throw DomainError("gd_update: non-finite gradient");
  }
  auto& w = layer.weights();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * grad.weights[i];
  auto& b = layer.bias();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] -= eta * grad.bias[i];
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw DomainError("mse of an empty vector");
  if (predictions.size() != targets.size()) throw DomainError("mse: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return sum / static_cast<double>(predictions.size());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (max_epochs < 1) throw DomainError("max_epochs must be >= 1");
  if (!(init_scale > 0.0)) throw DomainError("init_scale must be positive");
}

void write_layer(std::ostream& out, std::string_view name, const DenseLayer& layer) {
  out << "layer " << name << ' ' << layer.fan_out() << ' ' << layer.fan_in() << ' ' << to_string(layer.activation())
      << '\n';
  for (std::size_t r = 0; r < layer.fan_out(); ++r) {
    for (std::size_t c = 0; c < layer.fan_in(); ++c) out << (c ? " " : "") << detail::format_double(layer.weight(r, c));
    out << '\n';
  }
  out << "bias";
  for (double b : layer.bias()) out << ' ' << detail::format_double(b);
  out << '\n';
}

namespace {

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

std::string next_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (!t.empty() && t.front() != '#') return std::string(t);
  }
  throw DataError("unexpected end of model data");
}

}  // namespace

DenseLayer read_layer(std::istream& in, std::string_view name) {
  const auto head = tokens_of(next_line(in));
  if (head.size() != 5 || head[0] != "layer" || head[1] != name) {
    throw DataError("expected 'layer " + std::string(name) + " <out> <in> <activation>'");
  }
  const auto fan_out = static_cast<std::size_t>(std::stoul(head[2]));
  const auto fan_in = static_cast<std::size_t>(std::stoul(head[3]));
  DenseLayer layer(fan_in, fan_out, parse_activation(head[4]));
  for (std::size_t r = 0; r < fan_out; ++r) {
    const auto row = tokens_of(next_line(in));
    if (row.size() != fan_in) throw DataError("layer " + std::string(name) + ": weight row has wrong length");
    for (std::size_t c = 0; c < fan_in; ++c) layer.weight(r, c) = detail::parse_double(row[c], 0);
  }
  const auto bias = tokens_of(next_line(in));
  if (bias.size() != fan_out + 1 || bias[0] != "bias") throw DataError("layer " + std::string(name) + ": bad bias line");
  for (std::size_t r = 0; r < fan_out; ++r) layer.bias()[r] = detail::parse_double(bias[r + 1], 0);
  return layer;
}

}  // namespace sppnet::nn
