#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sppnet/cascade.hpp"
#include "sppnet/dataset.hpp"
#include "sppnet/omegaval.hpp"

namespace sppnet::pipeline {

/// The four training activities, in per-sample dependency order.
enum class Stage : int { simulation = 0, phase_a = 1, validation = 2, phase_b = 3 };
inline constexpr std::size_t kStageCount = 4;
std::string_view to_string(Stage s);

/// Called at the start of every stage of every sample (test instrumentation).
using StageHook = std::function<void(Stage, std::uint64_t tau)>;

struct PipelineConfig {
  std::size_t queue_capacity = 64;
  int epochs = 50;
  double learning_rate = 0.01;
  int warmup_epochs = 1;
  /// Quantile of warm-up (M, m) values that becomes the acceptance region.
  double percentile = 0.9;
  /// Stop after the first epoch whose MSE is at or below this (0 disables).
  double mse_goal = 0.0;
  std::uint64_t seed = 1;
  /// Parallel runs abort with PipelineError after this long without progress.
  std::chrono::milliseconds stall_timeout{10000};
  bool record_timeline = false;
  bool record_trace = true;
  bool record_events = false;
  /// Keep a flattened weight snapshot at every epoch boundary.
  bool record_snapshots = false;
  StageHook hook;

  void validate() const;
};

struct TimeSpan {
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

struct TimelineEntry {
  std::uint64_t tau = 0;
  Stage stage = Stage::simulation;
  TimeSpan span;
};

/// Everything logged about one processed sample.
struct SampleEvent {
  int epoch = 0;
  std::uint64_t tau = 0;      // global sequence number
  std::size_t index = 0;      // position in the dataset
  double ea = 0.0;            // max_k |e^a_k|
  std::optional<double> eb;   // max_k |e^b_k|, only for validated samples
  double e_star = 0.0;        // max(e^a, e^b)
  double output_error = 0.0;  // |target - y^VI| over the meaningful outputs
  bool accepted = false;
  bool stage2_updated = false;
  std::array<TimeSpan, kStageCount> spans{};
};

/// One line of the validation trace.
struct ValidationRecord {
  int epoch = 0;
  std::uint64_t sequence = 0;
  omega::ValidationParams params;
  omega::ValidationStats stats;
  bool ready = false;
  bool accepted = false;
};

struct EpochMetrics {
  int epoch = 0;
  std::size_t samples = 0;
  double mse = 0.0;  // mean of e*^2
  double ea_mean = 0.0;
  std::optional<double> eb_mean;
  double pass_rate = 0.0;
  double wall_ms = 0.0;
  double overlap_ratio = 0.0;
  std::size_t accepted = 0;
  std::size_t stage2_updates = 0;
  /// Fraction of samples with e* >= |VI error| (monitored, not asserted).
  double bound_fraction = 0.0;
};

struct TrainingMetrics {
  std::vector<EpochMetrics> epochs;
  std::size_t total_accepted = 0;
  std::size_t total_stage2_updates = 0;
  /// MSE of the final net on the training set, as evaluate() reports it.
  double final_mse = 0.0;
  bool goal_reached = false;
};

/// Aggregates one epoch; throws DataError when `events` is not exactly
/// `samples_per_epoch` events of a single epoch.
EpochMetrics epoch_metrics(std::span<const SampleEvent> events, std::size_t samples_per_epoch);

/// Pure aggregation of a complete event stream, grouped by epoch.
TrainingMetrics record_metrics(std::span<const SampleEvent> events, std::size_t samples_per_epoch);

struct RunResult {
  cascade::CascadeNet net = cascade::CascadeNet::zeros();
  omega::AcceptanceRegion region;
  TrainingMetrics metrics;
  std::vector<ValidationRecord> trace;
  std::vector<TimelineEntry> timeline;
  std::vector<SampleEvent> events;
  std::vector<std::vector<double>> snapshots;
  /// Writer bitmask per block, see cascade::WriteAudit.
  std::array<unsigned, cascade::kBlockCount> writers{};
  /// Updates applied per block, counted where the weights are written.
  std::array<std::uint64_t, cascade::kBlockCount> write_counts{};
  std::uint64_t patterns_processed = 0;
};

/// Layer II regression targets per dataset position: window anchor, window
/// length and the half-power width of the stage-1 training signal over the
/// window ending at the sample (cyclic over the dataset order).
std::vector<cascade::ParamVector> layer_ii_targets(const data::Dataset& normalized, const omega::WindowLimits& limits);

/// Reference trainer: simulation, Phase A, validation and Phase B strictly in
/// order for every sample.
RunResult run_sequential(const data::Dataset& normalized, cascade::CascadeNet net, const PipelineConfig& config);

/// Four concurrent workers joined by bounded queues. Produces the same
/// weights as run_sequential for the same inputs.
RunResult run_parallel(const data::Dataset& normalized, cascade::CascadeNet net, const PipelineConfig& config);

struct Prediction {
  std::size_t index = 0;
  cascade::OutputVector output{};  // normalized; second entry NaN when rejected
  bool rejected = false;
  double e_star = 0.0;
};

struct Evaluation {
  std::vector<Prediction> predictions;
  double mse = 0.0;  // mean e*^2
  std::size_t rejected = 0;
};

/// Inference with a fixed acceptance region and a fresh delay line.
Evaluation evaluate(const cascade::CascadeNet& net, const omega::AcceptanceRegion& region,
                    const data::Dataset& normalized);

void write_metrics_csv(const TrainingMetrics& metrics, std::ostream& out);
void write_timeline_csv(std::span<const TimelineEntry> timeline, std::ostream& out);
void write_trace_csv(std::span<const ValidationRecord> trace, std::ostream& out);

}  // namespace sppnet::pipeline
