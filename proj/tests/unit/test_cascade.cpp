#include <gtest/gtest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "sppnet/cascade.hpp"
#include "sppnet/errors.hpp"

using namespace sppnet;
using namespace sppnet::cascade;
using nn::Activation;
using nn::DenseLayer;

namespace {

// y = act(W x + b) by explicit dot products.
std::vector<double> dense(const DenseLayer& L, const std::vector<double>& x) {
  std::vector<double> out;
  for (std::size_t r = 0; r < L.fan_out(); ++r) {
    double s = L.bias()[r];
    for (std::size_t c = 0; c < L.fan_in(); ++c) s += L.weight(r, c) * x[c];
    out.push_back(static_cast<double>(oracle::act_ld(L.activation(), s)));
  }
  return out;
}

std::vector<double> concat(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

template <std::size_t N>
std::vector<double> vec(const std::array<double, N>& a) {
  return {a.begin(), a.end()};
}

data::Sample sample(double l0, double t, double ls, double L) { return {l0, t, ls, L}; }

double half_sq(std::span<const double> t, std::span<const double> y) {
  double s = 0;
  for (std::size_t k = 0; k < y.size(); ++k) s += 0.5 * (t[k] - y[k]) * (t[k] - y[k]);
  return s;
}

}  // namespace

TEST(Stage1, ZeroNetGivesHalves) {
  const auto net = CascadeNet::zeros();
  const std::vector<double> x = {0.3, -0.8};
  const auto r = stage1_forward(net, x);
  for (double v : r.y()) EXPECT_EQ(v, 0.5);
  EXPECT_EQ(r.anchor, 0.5);
  EXPECT_EQ(r.window.delta_tau, 4u + 30u);  // lround(0.5 * 60)
}

TEST(Stage1, WindowParametersAlwaysInRange) {
  Engine e(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto net = CascadeNet::create(static_cast<std::uint64_t>(trial), 50.0);
    const std::vector<double> x = {uniform(e, -1, 1), uniform(e, -1, 1)};
    const auto r = stage1_forward(net, x);
    EXPECT_GE(r.window.delta_tau, net.limits().min_delta_tau);
    EXPECT_LE(r.window.delta_tau, net.limits().max_delta_tau);
    EXPECT_GT(r.window.sigma, 0.0);
    EXPECT_LE(r.window.sigma, 1.0);
    EXPECT_GE(r.anchor, 0.0);
    EXPECT_LE(r.anchor, 1.0);
  }
}

TEST(Stage1, MatchesMatrixOracle) {
  const auto net = CascadeNet::create(2024);
  const std::vector<double> x = {0.2, -0.5};
  const auto r = stage1_forward(net, x);
  const auto ref = dense(net.front().output, dense(net.front().hidden, x));
  for (std::size_t k = 0; k < kStage1Dim; ++k) EXPECT_NEAR(r.y()[k], ref[k], 1e-15);
  const auto p = dense(net.front().params, x);
  EXPECT_NEAR(r.anchor, p[0], 1e-15);
  EXPECT_NEAR(r.window.sigma, 0.05 + 0.95 * p[2], 1e-15);
  EXPECT_EQ(r.window.delta_tau, 4u + static_cast<std::size_t>(std::lround(p[1] * 60)));
}

TEST(Stage1, NonFiniteInputIsRejected) {
  const auto net = CascadeNet::create(1);
  EXPECT_THROW(stage1_forward(net, std::vector<double>{NAN, 0.0}), DomainError);
  EXPECT_THROW(stage1_forward(net, std::vector<double>{0.0}), DomainError);
}

TEST(Stage1, IndependentOfStage2Weights) {
  auto a = CascadeNet::create(3);
  auto b = a;
  b.back() = CascadeNet::create(99).back();
  const std::vector<double> x = {-0.1, 0.4};
  EXPECT_EQ(stage1_forward(a, x).y(), stage1_forward(b, x).y());
}

TEST(Stage2, ZeroNetAndContract) {
  const auto net = CascadeNet::zeros();
  const std::vector<double> x = {0.1, 0.2};
  const std::vector<double> y1(kStage1Dim, 0.5);
  for (double v : stage2_forward(net, x, y1, true).y()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(stage2_forward(net, x, y1, false), ContractError);
}

TEST(Stage2, MatchesOracleAndIsOrderSensitive) {
  const auto net = CascadeNet::create(17);
  const std::vector<double> x = {0.2, -0.5};
  const auto y1 = vec(stage1_forward(net, x).y());
  const auto r = stage2_forward(net, x, y1, true);
  const auto ref = dense(net.back().output, dense(net.back().hidden, concat(x, y1)));
  for (std::size_t k = 0; k < kStage2Dim; ++k) EXPECT_NEAR(r.y()[k], ref[k], 1e-15);

  // Feeding [y^IVa | x^I] instead gives a different answer.
  const auto swapped = dense(net.back().output, dense(net.back().hidden, concat(y1, x)));
  double diff = 0;
  for (std::size_t k = 0; k < kStage2Dim; ++k) diff += std::abs(swapped[k] - r.y()[k]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Merge, NanFlagAndAffineOracle) {
  DenseLayer vi(kMergedDim, kOutputDim, Activation::purelin);
  vi.bias() = {0.25, -0.75};
  StageOutput s;
  s.stage1.fill(0.3);
  s.stage2 = Stage2Vector{};
  s.validated = true;
  const auto y = merge_and_output(vi, s);
  EXPECT_EQ(y[0], 0.25);
  EXPECT_EQ(y[1], -0.75);

  s.stage2.reset();
  s.validated = false;
  const auto u = merge_and_output(vi, s);
  EXPECT_EQ(u[0], 0.25);
  EXPECT_TRUE(std::isnan(u[1]));

  const auto net = CascadeNet::create(5);
  StageOutput v;
  Engine e(1);
  for (auto& d : v.stage1) d = uniform(e, 0, 1);
  v.stage2 = Stage2Vector{};
  for (auto& d : *v.stage2) d = uniform(e, -1, 1);
  v.validated = true;
  const auto got = merge_and_output(net.back().merge, v);
  const auto ref = dense(net.back().merge, concat(vec(v.stage1), vec(*v.stage2)));
  EXPECT_NEAR(got[0], ref[0], 1e-15);
  EXPECT_NEAR(got[1], ref[1], 1e-15);

  StageOutput bad;
  bad.validated = true;
  EXPECT_THROW(merge_and_output(vi, bad), ContractError);
}

TEST(Targets, EncodersAreReplicated) {
  const auto t = encode_targets(sample(0.1, 0.2, -0.5, 0.25), {0.1, 0.2, 0.3});
  for (double v : t.stage1) EXPECT_DOUBLE_EQ(v, 0.3);
  for (double v : t.stage2) EXPECT_DOUBLE_EQ(v, 0.2);
  EXPECT_EQ(t.output, (OutputVector{-0.5, 0.25}));
  EXPECT_EQ(t.params, (ParamVector{0.1, 0.2, 0.3}));
}

TEST(Errors, GlobalIsComponentwiseMax) {
  ErrorSignals e;
  e.stage1 = {0.1, -0.4, 0.2, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(e.global(), 0.4);
  e.stage2 = Stage2Vector{0.0, 0.0, -0.7, 0.0, 0.1};
  EXPECT_DOUBLE_EQ(e.local_b().value(), 0.7);
  EXPECT_DOUBLE_EQ(e.global(), 0.7);
}

TEST(TrainStep, ExactTargetsChangeNothing) {
  auto net = CascadeNet::create(8);
  const auto before = net;
  const std::vector<double> x = {0.4, -0.3};
  const auto s1 = stage1_forward(net, x);
  Targets t;
  std::copy(s1.params.output.begin(), s1.params.output.end(), t.params.begin());
  t.stage1 = s1.y();
  t.stage2 = stage2_forward(net, x, vec(s1.y()), true).y();
  StageOutput so{s1.y(), t.stage2, true};
  t.output = merge_and_output(net.back().merge, so);

  phase_a_update(net.front(), s1, t, 0.5);
  const auto r = phase_b_update(net, x, s1.y(), t, true, 0.5);
  EXPECT_EQ(net, before);
  EXPECT_EQ(r.output_error, (OutputVector{0.0, 0.0}));
}

TEST(TrainStep, UnvalidatedLeavesStage2Untouched) {
  auto net = CascadeNet::create(9);
  const auto before = net;
  const auto e = train_step(net, sample(0.2, -0.5, 0.3, -0.1), {0.5, 0.5, 0.5}, 0.1, false);
  EXPECT_EQ(net.back().hidden, before.back().hidden);
  EXPECT_EQ(net.back().output, before.back().output);
  // VI neuron 2 is frozen, neuron 1 moves.
  for (std::size_t c = 0; c < kMergedDim; ++c) {
    EXPECT_EQ(net.back().merge.weight(1, c), before.back().merge.weight(1, c));
  }
  EXPECT_EQ(net.back().merge.bias()[1], before.back().merge.bias()[1]);
  EXPECT_NE(net.back().merge.bias()[0], before.back().merge.bias()[0]);
  // Padded IVb slots see zero input, so their neuron-1 weights stay put.
  for (std::size_t c = kStage1Dim; c < kMergedDim; ++c) {
    EXPECT_EQ(net.back().merge.weight(0, c), before.back().merge.weight(0, c));
  }
  EXPECT_NE(net.front(), before.front());
  EXPECT_FALSE(e.stage2.has_value());
  EXPECT_TRUE(std::isnan(e.output[1]));
}

TEST(TrainStep, ValidatedUpdatesEveryBlock) {
  auto net = CascadeNet::create(10);
  const auto before = net;
  const auto e = train_step(net, sample(0.2, -0.5, 0.3, -0.1), {0.5, 0.2, 0.8}, 0.1, true);
  for (Block b : kAllBlocks) EXPECT_NE(net.layer(b), before.layer(b)) << block_name(b);
  EXPECT_TRUE(e.stage2.has_value());
  EXPECT_DOUBLE_EQ(e.global(), std::max(e.local_a(), *e.local_b()));
}

TEST(TrainStep, PhaseWritesAreDisjoint) {
  auto net = CascadeNet::create(12);
  WriteAudit audit;
  const std::vector<double> x = {0.1, 0.1};
  const auto s1 = stage1_forward(net, x);
  const auto t = encode_targets(sample(0.1, 0.1, 0.2, 0.3), {0.5, 0.5, 0.5});
  phase_a_update(net.front(), s1, t, 0.1, &audit);
  phase_b_update(net, x, s1.y(), t, true, 0.1, &audit);
  phase_b_update(net, x, s1.y(), t, false, 0.1, &audit);
  for (Block b : {Block::II, Block::IIIa, Block::IVa}) EXPECT_EQ(audit.writers(b), WriteAudit::kPhaseA);
  for (Block b : {Block::IIIb, Block::IVb, Block::VI}) EXPECT_EQ(audit.writers(b), WriteAudit::kPhaseB);
  EXPECT_EQ(audit.count(Block::IIIb), 1u);
  EXPECT_EQ(audit.count(Block::VI), 2u);
}

TEST(TrainStep, SmallStepReducesErrorOnToySet) {
  const data::Sample toy[] = {sample(-0.6, 0.3, 0.4, -0.2), sample(0.7, -0.9, -0.3, 0.5)};
  auto net = CascadeNet::create(33);
  for (const auto& s : toy) {
    const auto t = encode_targets(s, {0.4, 0.5, 0.6});
    const auto x = input_of(s);
    auto measure = [&](const CascadeNet& n) {
      const auto s1 = stage1_forward(n, x);
      const auto y2 = stage2_forward(n, x, vec(s1.y()), true).y();
      ErrorSignals e;
      for (std::size_t k = 0; k < kStage1Dim; ++k) e.stage1[k] = t.stage1[k] - s1.y()[k];
      Stage2Vector eb{};
      for (std::size_t k = 0; k < kStage2Dim; ++k) eb[k] = t.stage2[k] - y2[k];
      e.stage2 = eb;
      return std::pair{e.global(), half_sq(t.stage1, s1.y()) + half_sq(t.stage2, y2)};
    };
    const auto [g0, l0] = measure(net);
    train_step(net, s, t.params, 1e-3, true);
    const auto [g1, l1] = measure(net);
    EXPECT_LT(g1, g0);
    EXPECT_LT(l1, l0);
  }
}

TEST(TrainStep, RejectsBadLearningRate) {
  auto net = CascadeNet::create(1);
  EXPECT_THROW(train_step(net, sample(0, 0, 0, 0), {}, 0.0, true), DomainError);
}

TEST(Construction, ValidationComponentMustIndexStage1) {
  omega::WindowLimits lim;
  lim.component = kStage1Dim - 1;
  EXPECT_NO_THROW(CascadeNet::create(1, 0.5, lim));
  lim.component = kStage1Dim;
  EXPECT_THROW(CascadeNet::create(1, 0.5, lim), DomainError);
}

TEST(Construction, DimensionAudit) {
  auto good = CascadeNet::create(1);
  auto front = good.front();
  front.hidden = DenseLayer(3, kHiddenA, Activation::tansig);
  EXPECT_THROW(CascadeNet(front, good.back()), DomainError);

  auto back = good.back();
  back.hidden = DenseLayer(kStage1Dim, kHiddenB, Activation::tansig);  // forgot x^I
  EXPECT_THROW(CascadeNet(good.front(), back), DomainError);

  back = good.back();
  back.merge = DenseLayer(kMergedDim, kOutputDim, Activation::tansig);
  EXPECT_THROW(CascadeNet(good.front(), back), DomainError);

  omega::WindowLimits lim;
  lim.min_delta_tau = 2;
  EXPECT_THROW(CascadeNet::zeros(lim), DomainError);
}

TEST(Construction, SeedDeterminismAndFlatten) {
  EXPECT_EQ(CascadeNet::create(4), CascadeNet::create(4));
  EXPECT_NE(CascadeNet::create(4), CascadeNet::create(5));
  const auto net = CascadeNet::create(4);
  std::size_t n = 0;
  for (Block b : kAllBlocks) n += net.layer(b).weights().size() + net.layer(b).bias().size();
  EXPECT_EQ(net.flatten().size(), n);
  EXPECT_EQ(block_name(Block::IIIb), "IIIb");
}
