#include "sppnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "sppnet/errors.hpp"
#include "sppnet/spsc_queue.hpp"

namespace sppnet::pipeline {
namespace {

using cascade::Block;
using cascade::CascadeNet;
using cascade::ParamVector;
using cascade::WriteAudit;
using Clock = std::chrono::steady_clock;

// Stage-1 result of one sample; shared read-only by Phase A, validation and Phase B.
struct Pattern {
  int epoch = 0;
  std::uint64_t tau = 0;
  std::size_t index = 0;
  cascade::Input x{};
  cascade::Targets targets;
  cascade::Stage1Result stage1;
  cascade::Stage1Vector ea{};
  TimeSpan span;
};
using PatternPtr = std::shared_ptr<const Pattern>;

enum class MessageKind { stage1_result, phase_a_done, validation_verdict, epoch_end, stop };

struct WorkMessage {
  MessageKind kind = MessageKind::stop;
  std::uint64_t sequence = 0;  // per-channel, strictly increasing
  int epoch = 0;
  PatternPtr pattern;
  std::uint64_t tau = 0;
  std::optional<omega::Verdict> verdict;
  TimeSpan span;
  bool flag = false;
};

WorkMessage message(MessageKind kind, int epoch = 0, std::uint64_t tau = 0, PatternPtr pattern = nullptr) {
  WorkMessage m;
  m.kind = kind;
  m.epoch = epoch;
  m.tau = tau;
  m.pattern = std::move(pattern);
  return m;
}

// Sending end of a channel; stamps the per-channel sequence number.
class Sender {
public:
  explicit Sender(SpscQueue<WorkMessage>& q) : q_(q) {}
  void send(WorkMessage m) {
    m.sequence = next_++;
    q_.push(std::move(m));
  }

private:
  SpscQueue<WorkMessage>& q_;
  std::uint64_t next_ = 0;
};

// Receiving end; checks that no message was skipped or duplicated.
class Receiver {
public:
  Receiver(SpscQueue<WorkMessage>& q, const char* name) : q_(q), name_(name) {}
  WorkMessage receive() {
    auto m = q_.pop();
    if (m.sequence != next_) {
      throw PipelineError(std::string("sequence gap on channel ") + name_ + ": expected " + std::to_string(next_) +
                          ", got " + std::to_string(m.sequence));
    }
    ++next_;
    return m;
  }
  WorkMessage expect(MessageKind kind, std::uint64_t tau) {
    auto m = receive();
    if (m.kind != kind || ((kind == MessageKind::phase_a_done || kind == MessageKind::validation_verdict) &&
                           m.tau != tau)) {
      throw PipelineError(std::string("out-of-order message on channel ") + name_ + " at tau " +
                          std::to_string(tau));
    }
    return m;
  }

private:
  SpscQueue<WorkMessage>& q_;
  const char* name_;
  std::uint64_t next_ = 0;
};

template <std::size_t N>
double max_abs(const std::array<double, N>& v) {
  double m = 0.0;
  for (double d : v) m = std::max(m, std::abs(d));
  return m;
}

std::vector<double> flatten_blocks(const CascadeNet& net, std::initializer_list<Block> blocks) {
  std::vector<double> out;
  for (Block b : blocks) {
    const auto& l = net.layer(b);
    out.insert(out.end(), l.weights().begin(), l.weights().end());
    out.insert(out.end(), l.bias().begin(), l.bias().end());
  }
  return out;
}

// The per-sample kernels shared by both schedules. Each one touches a
// disjoint piece of state: simulate reads the front block, phase_a writes
// it, validate owns the validator and phase_b owns the back block.
class Kernels {
public:
  Kernels(const data::Dataset& ds, const PipelineConfig& cfg, CascadeNet& net)
      : ds_(ds),
        cfg_(cfg),
        net_(net),
        params_(layer_ii_targets(ds, net.limits())),
        validator_(omega::Validator::Options{cfg.warmup_epochs, cfg.percentile}),
        component_(net.limits().component),
        t0_(Clock::now()) {}

  std::int64_t now() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0_).count();
  }

  void hook(Stage s, std::uint64_t tau) const {
    if (cfg_.hook) cfg_.hook(s, tau);
  }

  PatternPtr simulate(int epoch, std::uint64_t tau, std::size_t index) const {
    hook(Stage::simulation, tau);
    auto p = std::make_shared<Pattern>();
    p->span.start_ns = now();
    p->epoch = epoch;
    p->tau = tau;
    p->index = index;
    const auto& s = ds_.samples[index];
    p->x = cascade::input_of(s);
    p->targets = cascade::encode_targets(s, params_[index]);
    guarded(epoch, index, [&] { p->stage1 = cascade::stage1_forward(net_, p->x); });
    for (std::size_t k = 0; k < cascade::kStage1Dim; ++k) p->ea[k] = p->targets.stage1[k] - p->stage1.output.output[k];
    p->span.end_ns = now();
    return p;
  }

  TimeSpan phase_a(const Pattern& p) {
    hook(Stage::phase_a, p.tau);
    TimeSpan span{now(), 0};
    guarded(p.epoch, p.index, [&] {
      cascade::phase_a_update(net_.front(), p.stage1, p.targets, cfg_.learning_rate, &audit);
      if (!net_.front().params.all_finite() || !net_.front().hidden.all_finite() || !net_.front().output.all_finite()) {
        throw DomainError("non-finite weights after Phase A");
      }
    });
    span.end_ns = now();
    return span;
  }

  std::pair<omega::Verdict, TimeSpan> validate(const Pattern& p) {
    hook(Stage::validation, p.tau);
    TimeSpan span{now(), 0};
    const auto v = validator_.step(p.stage1.output.output[component_], p.targets.stage1[component_], p.stage1.window,
                                   p.epoch, p.tau);
    if (cfg_.record_trace) trace.push_back({p.epoch, p.tau, v.params, v.stats, v.ready, v.accepted});
    span.end_ns = now();
    return {v, span};
  }

  void end_validation_epoch(int epoch) { validator_.end_epoch(epoch); }
  const omega::AcceptanceRegion& region() const { return validator_.region(); }

  SampleEvent phase_b(const Pattern& p, const omega::Verdict& v, TimeSpan a_span, TimeSpan v_span) {
    hook(Stage::phase_b, p.tau);
    SampleEvent ev;
    ev.spans[static_cast<int>(Stage::phase_b)].start_ns = now();
    ev.epoch = p.epoch;
    ev.tau = p.tau;
    ev.index = p.index;
    ev.accepted = v.accepted;
    ev.ea = max_abs(p.ea);
    guarded(p.epoch, p.index, [&] {
      const auto r =
          cascade::phase_b_update(net_, p.x, p.stage1.y(), p.targets, v.accepted, cfg_.learning_rate, &audit);
      const auto& back = net_.back();
      if (!back.hidden.all_finite() || !back.output.all_finite() || !back.merge.all_finite()) {
        throw DomainError("non-finite weights after Phase B");
      }
      ev.stage2_updated = r.stage2_error.has_value();
      if (r.stage2_error) ev.eb = max_abs(*r.stage2_error);
      ev.output_error = std::abs(r.output_error[0]);
      if (v.accepted) ev.output_error = std::max(ev.output_error, std::abs(r.output_error[1]));
    });
    ev.e_star = std::max(ev.ea, ev.eb.value_or(0.0));
    ev.spans[static_cast<int>(Stage::simulation)] = p.span;
    ev.spans[static_cast<int>(Stage::phase_a)] = a_span;
    ev.spans[static_cast<int>(Stage::validation)] = v_span;
    ev.spans[static_cast<int>(Stage::phase_b)].end_ns = now();
    return ev;
  }

  std::size_t size() const { return ds_.size(); }

  WriteAudit audit;
  std::vector<ValidationRecord> trace;

private:
  template <typename F>
  static void guarded(int epoch, std::size_t index, F&& f) {
    try {
      f();
    } catch (const DomainError& e) {
      throw DivergenceError(e.what(), epoch, index);
    }
  }

  const data::Dataset& ds_;
  const PipelineConfig& cfg_;
  CascadeNet& net_;
  std::vector<ParamVector> params_;
  omega::Validator validator_;
  const std::size_t component_;
  Clock::time_point t0_;
};

// Phase-B side bookkeeping: epoch aggregation, timeline and event log.
class Recorder {
public:
  Recorder(const PipelineConfig& cfg, std::size_t n) : cfg_(cfg), n_(n) {}

  void add(const SampleEvent& ev) {
    current_.push_back(ev);
    if (cfg_.record_timeline) {
      for (std::size_t s = 0; s < kStageCount; ++s) timeline.push_back({ev.tau, static_cast<Stage>(s), ev.spans[s]});
    }
    if (cfg_.record_events) events.push_back(ev);
  }

  // Returns true when the epoch reached the MSE goal.
  bool end_epoch() {
    const auto m = epoch_metrics(current_, n_);
    current_.clear();
    metrics.epochs.push_back(m);
    metrics.total_accepted += m.accepted;
    metrics.total_stage2_updates += m.stage2_updates;
    const bool reached = cfg_.mse_goal > 0.0 && m.mse <= cfg_.mse_goal;
    if (reached) metrics.goal_reached = true;
    return reached;
  }

  TrainingMetrics metrics;
  std::vector<TimelineEntry> timeline;
  std::vector<SampleEvent> events;

private:
  const PipelineConfig& cfg_;
  std::size_t n_;
  std::vector<SampleEvent> current_;
};

void check_inputs(const data::Dataset& ds, const PipelineConfig& cfg) {
  cfg.validate();
  if (!ds.normalized()) throw DataError("training needs a normalized dataset");
  if (ds.empty()) throw DataError("training needs at least one sample");
}

void finish(RunResult& r, Kernels& k, Recorder& rec, const data::Dataset& ds) {
  r.region = k.region();
  r.metrics = std::move(rec.metrics);
  r.timeline = std::move(rec.timeline);
  r.events = std::move(rec.events);
  r.trace = std::move(k.trace);
  for (Block b : cascade::kAllBlocks) {
    r.writers[static_cast<std::size_t>(b)] = k.audit.writers(b);
    r.write_counts[static_cast<std::size_t>(b)] = k.audit.count(b);
  }
  r.metrics.final_mse =
      r.region.calibrated() ? evaluate(r.net, r.region, ds).mse : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::simulation:
      return "simulation";
    case Stage::phase_a:
      return "phase_a";
    case Stage::validation:
      return "validation";
    case Stage::phase_b:
      return "phase_b";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (queue_capacity < 1) throw DomainError("queue capacity must be >= 1");
  if (epochs < 0) throw DomainError("epochs must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be positive");
  if (warmup_epochs < 1) throw DomainError("warm-up epochs must be >= 1");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw DomainError("percentile must be in (0, 1]");
  if (!(mse_goal >= 0.0)) throw DomainError("mse goal must be >= 0");
  if (stall_timeout.count() <= 0) throw DomainError("stall timeout must be positive");
}

std::vector<ParamVector> layer_ii_targets(const data::Dataset& ds, const omega::WindowLimits& limits) {
  limits.validate();
  const std::size_t n = ds.size();
  const std::size_t w = limits.target_delta_tau;
  const double span = static_cast<double>(limits.max_delta_tau - limits.min_delta_tau);
  const double len_target = span > 0.0 ? static_cast<double>(w - limits.min_delta_tau) / span : 0.0;

  std::vector<double> signal(n);
  for (std::size_t i = 0; i < n; ++i) signal[i] = 0.5 + 0.4 * ds.samples[i].lambda_spp_nm;

  std::vector<ParamVector> out(n);
  std::vector<double> window(w);
  for (std::size_t i = 0; i < n; ++i) {
    // Window of length w ending at i, wrapping around the epoch order.
    const std::size_t start = (i + w * n - (w - 1)) % n;
    for (std::size_t j = 0; j < w; ++j) window[j] = signal[(start + j) % n];
    const double sigma = omega::dominant_peak_width(window);
    const double sigma_target = std::clamp((sigma - limits.min_sigma) / (1.0 - limits.min_sigma), 0.0, 1.0);
    out[i] = {static_cast<double>(start) / static_cast<double>(n), len_target, sigma_target};
  }
  return out;
}

EpochMetrics epoch_metrics(std::span<const SampleEvent> events, std::size_t samples_per_epoch) {
  if (samples_per_epoch == 0) throw DataError("samples per epoch must be positive");
  if (events.size() != samples_per_epoch) {
    throw DataError("incomplete epoch: " + std::to_string(events.size()) + " of " +
                    std::to_string(samples_per_epoch) + " samples");
  }
  EpochMetrics m;
  m.epoch = events.front().epoch;
  m.samples = events.size();
  double sq = 0.0, ea = 0.0, eb = 0.0;
  std::size_t nb = 0, overlap = 0, bounded = 0;
  std::int64_t first = std::numeric_limits<std::int64_t>::max();
  std::int64_t last = std::numeric_limits<std::int64_t>::min();
  for (const auto& e : events) {
    if (e.epoch != m.epoch) throw DataError("event stream mixes epochs");
    sq += e.e_star * e.e_star;
    ea += e.ea;
    if (e.eb) {
      eb += *e.eb;
      ++nb;
    }
    if (e.accepted) ++m.accepted;
    if (e.stage2_updated) ++m.stage2_updates;
    if (e.e_star >= e.output_error) ++bounded;
    const auto& a = e.spans[static_cast<int>(Stage::phase_a)];
    const auto& v = e.spans[static_cast<int>(Stage::validation)];
    if (std::max(a.start_ns, v.start_ns) < std::min(a.end_ns, v.end_ns)) ++overlap;
    for (const auto& s : e.spans) {
      if (s.end_ns < s.start_ns) throw DataError("negative stage span");
      first = std::min(first, s.start_ns);
      last = std::max(last, s.end_ns);
    }
  }
  const auto n = static_cast<double>(events.size());
  m.mse = sq / n;
  m.ea_mean = ea / n;
  if (nb > 0) m.eb_mean = eb / static_cast<double>(nb);
  m.pass_rate = static_cast<double>(m.accepted) / n;
  m.overlap_ratio = static_cast<double>(overlap) / n;
  m.bound_fraction = static_cast<double>(bounded) / n;
  m.wall_ms = static_cast<double>(last - first) * 1e-6;
  return m;
}

TrainingMetrics record_metrics(std::span<const SampleEvent> events, std::size_t samples_per_epoch) {
  if (events.empty()) throw DataError("no events to aggregate");
  TrainingMetrics t;
  std::size_t begin = 0;
  while (begin < events.size()) {
    std::size_t end = begin;
    while (end < events.size() && events[end].epoch == events[begin].epoch) ++end;
    const auto m = epoch_metrics(events.subspan(begin, end - begin), samples_per_epoch);
    t.total_accepted += m.accepted;
    t.total_stage2_updates += m.stage2_updates;
    t.epochs.push_back(m);
    begin = end;
  }
  t.final_mse = t.epochs.back().mse;
  return t;
}

RunResult run_sequential(const data::Dataset& ds, CascadeNet net, const PipelineConfig& cfg) {
  check_inputs(ds, cfg);
  RunResult r;
  r.net = std::move(net);
  Kernels k(ds, cfg, r.net);
  Recorder rec(cfg, ds.size());
  const std::size_t n = ds.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t tau = static_cast<std::uint64_t>(epoch - 1) * n + i;
      const auto p = k.simulate(epoch, tau, i);
      const auto a_span = k.phase_a(*p);
      const auto [verdict, v_span] = k.validate(*p);
      rec.add(k.phase_b(*p, verdict, a_span, v_span));
      ++r.patterns_processed;
    }
    k.end_validation_epoch(epoch);
    const bool reached = rec.end_epoch();
    if (cfg.record_snapshots) r.snapshots.push_back(r.net.flatten());
    if (reached) break;
  }
  finish(r, k, rec, ds);
  return r;
}

RunResult run_parallel(const data::Dataset& ds, CascadeNet net, const PipelineConfig& cfg) {
  check_inputs(ds, cfg);
  RunResult r;
  r.net = std::move(net);
  Kernels k(ds, cfg, r.net);
  Recorder rec(cfg, ds.size());
  const std::size_t n = ds.size();
  const std::size_t cap = cfg.queue_capacity;

  std::atomic<bool> abort{false};
  std::atomic<std::uint64_t> progress{0};
  std::array<std::atomic<std::uint64_t>, kStageCount> last_tau{};
  std::atomic<int> finished{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  SpscQueue<WorkMessage> sim_to_a(cap, &abort), sim_to_v(cap, &abort), sim_to_b(cap, &abort);
  SpscQueue<WorkMessage> a_to_sim(cap, &abort), a_to_b(cap, &abort), v_to_b(cap, &abort), b_to_sim(cap, &abort);

  std::vector<std::vector<double>> front_snaps, back_snaps;
  std::uint64_t processed = 0;

  auto run_worker = [&](auto&& body) {
    return [&, body]() mutable {
      try {
        body();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error && !abort.load()) first_error = std::current_exception();
        abort.store(true);
      }
      finished.fetch_add(1);
    };
  };
  auto tick = [&](Stage s, std::uint64_t tau) {
    last_tau[static_cast<int>(s)].store(tau);
    progress.fetch_add(1);
  };

  // NN Simulation: produces stage-1 results and fans them out.
  auto simulation = [&] {
    Sender to_a(sim_to_a), to_v(sim_to_v), to_b(sim_to_b);
    Receiver from_a(a_to_sim, "A->SIM"), from_b(b_to_sim, "B->SIM");
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t tau = static_cast<std::uint64_t>(epoch - 1) * n + i;
        // The front block is only read once Phase A has finished the previous pattern.
        if (tau > 0) from_a.expect(MessageKind::phase_a_done, tau - 1);
        const auto p = k.simulate(epoch, tau, i);
        tick(Stage::simulation, tau);
        auto m = message(MessageKind::stage1_result, epoch, tau, p);
        to_a.send(m);
        to_v.send(m);
        to_b.send(std::move(m));
      }
      const auto end = message(MessageKind::epoch_end, epoch);
      to_a.send(end);
      to_v.send(end);
      to_b.send(end);
      if (cfg.mse_goal > 0.0 && from_b.expect(MessageKind::epoch_end, 0).flag) break;
    }
    const auto stop = message(MessageKind::stop);
    to_a.send(stop);
    to_v.send(stop);
    to_b.send(stop);
  };

  // Phase A: updates the front block, then releases the simulation.
  auto phase_a = [&] {
    Receiver in(sim_to_a, "SIM->A");
    Sender to_sim(a_to_sim), to_b(a_to_b);
    while (true) {
      auto m = in.receive();
      if (m.kind == MessageKind::stage1_result) {
        const auto span = k.phase_a(*m.pattern);
        tick(Stage::phase_a, m.tau);
        auto done = message(MessageKind::phase_a_done, m.epoch, m.tau);
        done.span = span;
        to_sim.send(done);
        to_b.send(std::move(done));
      } else if (m.kind == MessageKind::epoch_end) {
        if (cfg.record_snapshots) {
          front_snaps.push_back(flatten_blocks(r.net, {Block::II, Block::IIIa, Block::IVa}));
        }
        to_b.send(message(MessageKind::epoch_end, m.epoch));
      } else {
        to_b.send(message(MessageKind::stop));
        return;
      }
    }
  };

  // omega-validation: runs concurrently with Phase A on the same pattern.
  auto validation = [&] {
    Receiver in(sim_to_v, "SIM->V");
    Sender to_b(v_to_b);
    while (true) {
      auto m = in.receive();
      if (m.kind == MessageKind::stage1_result) {
        auto [verdict, span] = k.validate(*m.pattern);
        tick(Stage::validation, m.tau);
        auto out = message(MessageKind::validation_verdict, m.epoch, m.tau);
        out.verdict = verdict;
        out.span = span;
        to_b.send(std::move(out));
      } else if (m.kind == MessageKind::epoch_end) {
        k.end_validation_epoch(m.epoch);
        to_b.send(message(MessageKind::epoch_end, m.epoch));
      } else {
        to_b.send(message(MessageKind::stop));
        return;
      }
    }
  };

  // Phase B: joins the pattern, Phase A's completion and the verdict by tau.
  auto phase_b = [&] {
    Receiver from_sim(sim_to_b, "SIM->B"), from_a(a_to_b, "A->B"), from_v(v_to_b, "V->B");
    Sender to_sim(b_to_sim);
    while (true) {
      auto m = from_sim.receive();
      if (m.kind == MessageKind::stage1_result) {
        const auto v = from_v.expect(MessageKind::validation_verdict, m.tau);
        const auto a = from_a.expect(MessageKind::phase_a_done, m.tau);
        rec.add(k.phase_b(*m.pattern, *v.verdict, a.span, v.span));
        tick(Stage::phase_b, m.tau);
        ++processed;
      } else if (m.kind == MessageKind::epoch_end) {
        from_v.expect(MessageKind::epoch_end, 0);
        from_a.expect(MessageKind::epoch_end, 0);
        const bool reached = rec.end_epoch();
        if (cfg.record_snapshots) back_snaps.push_back(flatten_blocks(r.net, {Block::IIIb, Block::IVb, Block::VI}));
        if (cfg.mse_goal > 0.0) {
          auto ack = message(MessageKind::epoch_end, m.epoch);
          ack.flag = reached;
          to_sim.send(ack);
        }
      } else {
        from_v.expect(MessageKind::stop, 0);
        from_a.expect(MessageKind::stop, 0);
        return;
      }
    }
  };

  std::array<std::thread, kStageCount> workers = {std::thread(run_worker(simulation)), std::thread(run_worker(phase_a)),
                                                  std::thread(run_worker(validation)),
                                                  std::thread(run_worker(phase_b))};

  // Watchdog: abort when no stage makes progress within the stall timeout.
  std::string stall;
  std::uint64_t seen = progress.load();
  auto last_change = Clock::now();
  while (finished.load() < static_cast<int>(kStageCount)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    const auto p = progress.load();
    if (p != seen) {
      seen = p;
      last_change = Clock::now();
    } else if (!abort.load() && Clock::now() - last_change > cfg.stall_timeout) {
      std::ostringstream msg;
      msg << "pipeline stalled for " << cfg.stall_timeout.count() << " ms; last tau per stage:";
      for (std::size_t s = 0; s < kStageCount; ++s) {
        msg << ' ' << to_string(static_cast<Stage>(s)) << '=' << last_tau[s].load();
      }
      stall = msg.str();
      abort.store(true);
    }
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
  if (!stall.empty()) throw PipelineError(stall);

  r.patterns_processed = processed;
  if (cfg.record_snapshots) {
    for (std::size_t e = 0; e < std::min(front_snaps.size(), back_snaps.size()); ++e) {
      auto snap = front_snaps[e];
      snap.insert(snap.end(), back_snaps[e].begin(), back_snaps[e].end());
      r.snapshots.push_back(std::move(snap));
    }
  }
  finish(r, k, rec, ds);
  return r;
}

Evaluation evaluate(const CascadeNet& net, const omega::AcceptanceRegion& region, const data::Dataset& ds) {
  if (!region.calibrated()) throw ContractError("evaluation needs a calibrated acceptance region");
  if (!ds.normalized()) throw DataError("evaluation needs a normalized dataset");
  if (ds.empty()) throw DataError("evaluation needs at least one sample");
  omega::Validator validator(region);
  Evaluation out;
  double sq = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto x = cascade::input_of(s);
    const auto t = cascade::encode_targets(s, {});
    const auto s1 = cascade::stage1_forward(net, x);
    const std::size_t c = net.limits().component;
    const auto v = validator.step(s1.output.output[c], t.stage1[c], s1.window, 0, i);

    cascade::StageOutput so;
    so.stage1 = s1.y();
    so.validated = v.accepted;
    double ea = 0.0;
    for (std::size_t j = 0; j < cascade::kStage1Dim; ++j) ea = std::max(ea, std::abs(t.stage1[j] - so.stage1[j]));
    double eb = 0.0;
    if (v.accepted) {
      const auto s2 = cascade::stage2_forward(net, x, s1.output.output, true);
      so.stage2 = s2.y();
      for (std::size_t j = 0; j < cascade::kStage2Dim; ++j) eb = std::max(eb, std::abs(t.stage2[j] - (*so.stage2)[j]));
    }
    Prediction p;
    p.index = i;
    p.output = cascade::merge_and_output(net.back().merge, so);
    p.rejected = !v.accepted;
    p.e_star = std::max(ea, eb);
    sq += p.e_star * p.e_star;
    if (p.rejected) ++out.rejected;
    out.predictions.push_back(p);
  }
  out.mse = sq / static_cast<double>(ds.size());
  return out;
}

void write_metrics_csv(const TrainingMetrics& metrics, std::ostream& out) {
  using detail::format_double;
  out << "epoch,mse,ea_mean,eb_mean,pass_rate,wall_ms,overlap_ratio\n";
  for (const auto& m : metrics.epochs) {
    out << m.epoch << ',' << format_double(m.mse) << ',' << format_double(m.ea_mean) << ','
        << format_double(m.eb_mean.value_or(std::numeric_limits<double>::quiet_NaN())) << ','
        << format_double(m.pass_rate) << ',' << format_double(m.wall_ms) << ',' << format_double(m.overlap_ratio)
        << '\n';
  }
}

void write_timeline_csv(std::span<const TimelineEntry> timeline, std::ostream& out) {
  out << "tau,stage,start_ns,end_ns\n";
  for (const auto& e : timeline) {
    out << e.tau << ',' << to_string(e.stage) << ',' << e.span.start_ns << ',' << e.span.end_ns << '\n';
  }
}

void write_trace_csv(std::span<const ValidationRecord> trace, std::ostream& out) {
  using detail::format_double;
  out << "epoch,tau,delta_tau,sigma,M,m,accepted\n";
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.params.tau << ',' << r.params.delta_tau << ','
        << format_double(r.params.sigma) << ',' << format_double(r.stats.M) << ',' << format_double(r.stats.m) << ','
        << (r.accepted ? 1 : 0) << '\n';
  }
}

}  // namespace sppnet::pipeline
