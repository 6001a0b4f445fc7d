#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "sppnet/errors.hpp"
#include "sppnet/pipeline.hpp"

using namespace sppnet;
using namespace sppnet::pipeline;
using cascade::Block;
using cascade::CascadeNet;

namespace {

const data::Dataset& small_set() {
  static const data::Dataset ds = [] {
    data::GridSpec spec;
    spec.thicknesses_nm = {36, 60, 128};
    spec.n_lambda = 15;
    return data::normalize(data::generate_grid(spec, physics::PhysicsConfig{}).dataset);
  }();
  return ds;
}

PipelineConfig config(int epochs) {
  PipelineConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = 0.05;
  cfg.record_events = true;
  cfg.record_snapshots = true;
  cfg.record_timeline = true;
  return cfg;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

SampleEvent event(int epoch, std::uint64_t tau, double ea, std::optional<double> eb, bool accepted) {
  SampleEvent e;
  e.epoch = epoch;
  e.tau = tau;
  e.ea = ea;
  e.eb = eb;
  e.e_star = std::max(ea, eb.value_or(0.0));
  e.accepted = accepted;
  e.stage2_updated = accepted;
  return e;
}

}  // namespace

TEST(LayerII, TargetsAreInRangeAndCyclic) {
  const auto& ds = small_set();
  const omega::WindowLimits lim;
  const auto t = layer_ii_targets(ds, lim);
  ASSERT_EQ(t.size(), ds.size());
  const std::size_t n = ds.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = (i + 32 * n - 31) % n;
    EXPECT_DOUBLE_EQ(t[i][0], static_cast<double>(start) / static_cast<double>(n));
    EXPECT_DOUBLE_EQ(t[i][1], 28.0 / 60.0);
    EXPECT_GE(t[i][2], 0.0);
    EXPECT_LE(t[i][2], 1.0);
  }
}

TEST(Sequential, ZeroEpochsLeavesNetUnchanged) {
  const auto net = CascadeNet::create(1);
  const auto r = run_sequential(small_set(), net, config(0));
  EXPECT_EQ(r.net, net);
  EXPECT_TRUE(r.metrics.epochs.empty());
  EXPECT_EQ(r.patterns_processed, 0u);
  EXPECT_TRUE(std::isnan(r.metrics.final_mse));
  const auto p = run_parallel(small_set(), net, config(0));
  EXPECT_EQ(p.net, net);
}

TEST(Sequential, DeterministicForSameSeed) {
  const auto a = run_sequential(small_set(), CascadeNet::create(7), config(5));
  const auto b = run_sequential(small_set(), CascadeNet::create(7), config(5));
  EXPECT_EQ(a.net.flatten(), b.net.flatten());
  EXPECT_EQ(a.metrics.epochs.size(), 5u);
}

TEST(Parallel, MatchesSequentialAtEveryEpoch) {
  for (std::size_t cap : {1u, 3u, 64u}) {
    auto cfg = config(12);
    cfg.queue_capacity = cap;
    const auto s = run_sequential(small_set(), CascadeNet::create(3), cfg);
    const auto p = run_parallel(small_set(), CascadeNet::create(3), cfg);
    ASSERT_EQ(s.snapshots.size(), p.snapshots.size());
    for (std::size_t e = 0; e < s.snapshots.size(); ++e) {
      EXPECT_LE(max_diff(s.snapshots[e], p.snapshots[e]), 1e-12) << "epoch " << e + 1 << " cap " << cap;
    }
    EXPECT_LE(max_diff(s.net.flatten(), p.net.flatten()), 1e-12);
    EXPECT_EQ(s.metrics.total_accepted, p.metrics.total_accepted);
    EXPECT_EQ(s.region.theta_M(), p.region.theta_M());
    EXPECT_EQ(s.patterns_processed, p.patterns_processed);
  }
}

TEST(Parallel, SequenceAccountingIsComplete) {
  const auto r = run_parallel(small_set(), CascadeNet::create(4), config(6));
  const std::size_t n = small_set().size();
  ASSERT_EQ(r.events.size(), 6 * n);
  for (std::size_t i = 0; i < r.events.size(); ++i) {
    EXPECT_EQ(r.events[i].tau, i);
    EXPECT_EQ(r.events[i].index, i % n);
    EXPECT_EQ(r.events[i].epoch, static_cast<int>(i / n) + 1);
  }
  EXPECT_EQ(r.patterns_processed, 6 * n);
  EXPECT_EQ(r.timeline.size(), 4 * 6 * n);
}

TEST(Parallel, GoalStopsBothModesAtTheSameEpoch) {
  auto cfg = config(200);
  cfg.mse_goal = 0.02;
  const auto s = run_sequential(small_set(), CascadeNet::create(5), cfg);
  const auto p = run_parallel(small_set(), CascadeNet::create(5), cfg);
  EXPECT_TRUE(s.metrics.goal_reached);
  EXPECT_LT(s.metrics.epochs.size(), 200u);
  EXPECT_EQ(s.metrics.epochs.size(), p.metrics.epochs.size());
  EXPECT_EQ(p.patterns_processed, p.metrics.epochs.size() * small_set().size());
  EXPECT_LE(max_diff(s.net.flatten(), p.net.flatten()), 1e-12);
}

TEST(Parallel, WriteAuditKeepsPhasesDisjoint) {
  for (bool parallel : {false, true}) {
    const auto r = parallel ? run_parallel(small_set(), CascadeNet::create(6), config(4))
                            : run_sequential(small_set(), CascadeNet::create(6), config(4));
    for (Block b : {Block::II, Block::IIIa, Block::IVa}) {
      EXPECT_EQ(r.writers[static_cast<std::size_t>(b)], cascade::WriteAudit::kPhaseA);
      EXPECT_EQ(r.write_counts[static_cast<std::size_t>(b)], r.patterns_processed);
    }
    for (Block b : {Block::IIIb, Block::IVb, Block::VI}) {
      EXPECT_EQ(r.writers[static_cast<std::size_t>(b)], cascade::WriteAudit::kPhaseB);
    }
    EXPECT_EQ(r.write_counts[static_cast<std::size_t>(Block::VI)], r.patterns_processed);
    EXPECT_EQ(r.write_counts[static_cast<std::size_t>(Block::IIIb)], r.metrics.total_stage2_updates);
    EXPECT_EQ(r.metrics.total_stage2_updates, r.metrics.total_accepted);
  }
}

TEST(Parallel, PassRateMatchesTraceRecount) {
  auto cfg = config(8);
  cfg.percentile = 0.5;
  const auto r = run_parallel(small_set(), CascadeNet::create(8), cfg);
  const std::size_t n = small_set().size();
  ASSERT_EQ(r.trace.size(), 8 * n);
  for (const auto& m : r.metrics.epochs) {
    std::size_t accepted = 0;
    for (const auto& rec : r.trace) {
      if (rec.epoch == m.epoch && rec.ready && validate(rec.stats, r.region)) ++accepted;
    }
    if (m.epoch == 1) {
      EXPECT_EQ(m.pass_rate, 1.0);  // warm-up accepts everything
    } else {
      EXPECT_EQ(m.accepted, accepted) << m.epoch;
      EXPECT_DOUBLE_EQ(m.pass_rate, static_cast<double>(accepted) / static_cast<double>(n));
    }
  }
}

TEST(Parallel, StalledWorkerAbortsWithDiagnostic) {
  auto cfg = config(3);
  cfg.stall_timeout = std::chrono::milliseconds(50);
  cfg.hook = [](Stage s, std::uint64_t tau) {
    if (s == Stage::phase_b && tau == 5) std::this_thread::sleep_for(std::chrono::milliseconds(400));
  };
  EXPECT_THROW(run_parallel(small_set(), CascadeNet::create(1), cfg), PipelineError);
}

TEST(Parallel, WorkerErrorIsRethrown) {
  auto cfg = config(3);
  cfg.hook = [](Stage s, std::uint64_t tau) {
    if (s == Stage::validation && tau == 7) throw std::logic_error("injected");
  };
  EXPECT_THROW(run_parallel(small_set(), CascadeNet::create(1), cfg), std::logic_error);
}

TEST(Parallel, DivergenceCarriesSampleContext) {
  auto net = CascadeNet::create(1);
  net.front().hidden.weight(0, 0) = NAN;
  try {
    run_parallel(small_set(), net, config(2));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
    EXPECT_EQ(e.sample(), 0u);
  }
  EXPECT_THROW(run_sequential(small_set(), net, config(2)), DivergenceError);
}

TEST(Pipeline, RejectsBadInputs) {
  auto raw = small_set();
  raw.normalization.reset();
  EXPECT_THROW(run_sequential(raw, CascadeNet::create(1), config(1)), DataError);
  auto cfg = config(1);
  cfg.queue_capacity = 0;
  EXPECT_THROW(run_parallel(small_set(), CascadeNet::create(1), cfg), DomainError);
  cfg = config(1);
  cfg.learning_rate = -1;
  EXPECT_THROW(run_sequential(small_set(), CascadeNet::create(1), cfg), DomainError);
}

TEST(Metrics, DegenerateStreams) {
  std::vector<SampleEvent> rejected = {event(1, 0, 0.3, std::nullopt, false), event(1, 1, 0.1, std::nullopt, false)};
  const auto m = epoch_metrics(rejected, 2);
  EXPECT_EQ(m.pass_rate, 0.0);
  EXPECT_FALSE(m.eb_mean.has_value());
  EXPECT_DOUBLE_EQ(m.mse, (0.09 + 0.01) / 2);

  std::vector<SampleEvent> zeros = {event(1, 0, 0, 0.0, true), event(1, 1, 0, 0.0, true)};
  EXPECT_EQ(epoch_metrics(zeros, 2).mse, 0.0);
  EXPECT_EQ(epoch_metrics(zeros, 2).pass_rate, 1.0);

  std::vector<SampleEvent> two = {event(1, 0, 0.2, 0.4, true), event(1, 1, 0.2, std::nullopt, false),
                                  event(2, 2, 0.1, 0.1, true), event(2, 3, 0.1, 0.1, true)};
  const auto t = record_metrics(two, 2);
  ASSERT_EQ(t.epochs.size(), 2u);
  EXPECT_DOUBLE_EQ(t.epochs[0].mse, (0.16 + 0.04) / 2);
  EXPECT_DOUBLE_EQ(t.epochs[0].pass_rate, 0.5);
  EXPECT_EQ(t.total_accepted, 3u);
}

TEST(Metrics, IncompleteEpochIsAnError) {
  std::vector<SampleEvent> ev = {event(1, 0, 0.1, std::nullopt, false), event(1, 1, 0.1, std::nullopt, false),
                                 event(2, 2, 0.1, std::nullopt, false)};
  EXPECT_THROW(record_metrics(ev, 2), DataError);
  EXPECT_THROW(record_metrics(std::vector<SampleEvent>{}, 2), DataError);
}

TEST(Metrics, RecordedStreamMatchesRunMetrics) {
  const auto r = run_sequential(small_set(), CascadeNet::create(2), config(3));
  const auto t = record_metrics(r.events, small_set().size());
  ASSERT_EQ(t.epochs.size(), r.metrics.epochs.size());
  for (std::size_t e = 0; e < t.epochs.size(); ++e) {
    EXPECT_EQ(t.epochs[e].mse, r.metrics.epochs[e].mse);
    EXPECT_EQ(t.epochs[e].pass_rate, r.metrics.epochs[e].pass_rate);
  }
}

TEST(Evaluate, FinalMseAndNanFlags) {
  const auto r = run_sequential(small_set(), CascadeNet::create(2), config(10));
  const auto ev = evaluate(r.net, r.region, small_set());
  EXPECT_EQ(ev.mse, r.metrics.final_mse);
  ASSERT_EQ(ev.predictions.size(), small_set().size());
  std::size_t rejected = 0;
  for (const auto& p : ev.predictions) {
    EXPECT_EQ(p.rejected, std::isnan(p.output[1]));
    EXPECT_TRUE(std::isfinite(p.output[0]));
    rejected += p.rejected;
  }
  EXPECT_EQ(rejected, ev.rejected);
  EXPECT_GE(rejected, 1u);  // the delay line starts empty
  EXPECT_THROW(evaluate(r.net, omega::AcceptanceRegion{}, small_set()), ContractError);
}

TEST(Evaluate, ValidationComponentIsHonoured) {
  const auto& ds = small_set();
  omega::WindowLimits lim;
  lim.component = 4;
  auto cfg = config(4);
  cfg.percentile = 0.3;
  const auto base = run_sequential(ds, CascadeNet::create(3), cfg);
  const auto alt = run_sequential(ds, CascadeNet::create(3, 0.5, lim), cfg);
  EXPECT_NE(base.net, alt.net);
  ASSERT_EQ(base.trace.size(), alt.trace.size());
  bool differs = false;
  for (std::size_t i = 0; i < base.trace.size(); ++i) {
    if (base.trace[i].ready && base.trace[i].stats.M != alt.trace[i].stats.M) differs = true;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(run_parallel(ds, CascadeNet::create(3, 0.5, lim), cfg).net, alt.net);
  EXPECT_DOUBLE_EQ(evaluate(alt.net, alt.region, ds).mse, alt.metrics.final_mse);
}

TEST(Csv, HeadersMatchTheDocumentedSchemas) {
  const auto r = run_sequential(small_set(), CascadeNet::create(2), config(2));
  std::ostringstream m, t, v;
  write_metrics_csv(r.metrics, m);
  write_timeline_csv(r.timeline, t);
  write_trace_csv(r.trace, v);
  EXPECT_EQ(m.str().substr(0, m.str().find('\n')), "epoch,mse,ea_mean,eb_mean,pass_rate,wall_ms,overlap_ratio");
  EXPECT_EQ(t.str().substr(0, t.str().find('\n')), "tau,stage,start_ns,end_ns");
  EXPECT_EQ(v.str().substr(0, v.str().find('\n')), "epoch,tau,delta_tau,sigma,M,m,accepted");
  const std::string trace = v.str();
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), static_cast<long>(r.trace.size() + 1));
}
