#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "sppnet/dataset.hpp"
#include "sppnet/nncore.hpp"
#include "sppnet/omegaval.hpp"

namespace sppnet::cascade {

inline constexpr std::size_t kInputDim = 2;    // x^I = [lambda0, t]
inline constexpr std::size_t kParamDim = 3;    // layer II regression neurons
inline constexpr std::size_t kHiddenA = 10;    // IIIa, tansig
inline constexpr std::size_t kStage1Dim = 7;   // IVa, logsig
inline constexpr std::size_t kHiddenB = 8;     // IIIb, tansig
inline constexpr std::size_t kStage2Dim = 5;   // IVb, tansig
inline constexpr std::size_t kOutputDim = 2;   // VI, purelin
inline constexpr std::size_t kStage2InputDim = kInputDim + kStage1Dim;  // [x^I | y^IVa]
inline constexpr std::size_t kMergedDim = kStage1Dim + kStage2Dim;      // [y^IVa | y^IVb]

using Input = std::array<double, kInputDim>;
using Stage1Vector = std::array<double, kStage1Dim>;
using Stage2Vector = std::array<double, kStage2Dim>;
using OutputVector = std::array<double, kOutputDim>;
using ParamVector = std::array<double, kParamDim>;

enum class Block : std::size_t { II = 0, IIIa, IVa, IIIb, IVb, VI };
inline constexpr std::size_t kBlockCount = 6;
inline constexpr std::array<Block, kBlockCount> kAllBlocks = {Block::II,   Block::IIIa, Block::IVa,
                                                              Block::IIIb, Block::IVb,  Block::VI};
std::string_view block_name(Block b);

/// Weights written by Phase A: parameter layer II and the first FFNN.
/// Layer II's purelin passthrough neuron is an identity map (x^IIIa = x^I)
/// and carries no trainable weights.
struct FrontBlock {
  nn::DenseLayer params;  // II
  nn::DenseLayer hidden;  // IIIa
  nn::DenseLayer output;  // IVa
  friend bool operator==(const FrontBlock&, const FrontBlock&) = default;
};

/// Weights written by Phase B: the second FFNN and the output layer.
struct BackBlock {
  nn::DenseLayer hidden;  // IIIb
  nn::DenseLayer output;  // IVb
  nn::DenseLayer merge;   // VI
  friend bool operator==(const BackBlock&, const BackBlock&) = default;
};

class CascadeNet {
public:
  /// Throws DomainError on any fan-in/fan-out or activation inconsistency.
  CascadeNet(FrontBlock front, BackBlock back, omega::WindowLimits limits = {});

  /// Seeded uniform initialization of every block.
  static CascadeNet create(std::uint64_t seed, double init_scale = 0.5, omega::WindowLimits limits = {});
  /// All weights and biases zero.
  static CascadeNet zeros(omega::WindowLimits limits = {});

  FrontBlock& front() { return front_; }
  const FrontBlock& front() const { return front_; }
  BackBlock& back() { return back_; }
  const BackBlock& back() const { return back_; }
  const omega::WindowLimits& limits() const { return limits_; }

  const nn::DenseLayer& layer(Block b) const;
  /// Every weight then bias of every block, in manifest order.
  std::vector<double> flatten() const;
  bool all_finite() const;

  friend bool operator==(const CascadeNet& a, const CascadeNet& b) {
    return a.front_ == b.front_ && a.back_ == b.back_;
  }

private:
  FrontBlock front_;
  BackBlock back_;
  omega::WindowLimits limits_;
};

struct Stage1Result {
  nn::ForwardCache params;  // II
  nn::ForwardCache hidden;  // IIIa
  nn::ForwardCache output;  // IVa
  /// Decoded window parameters; tau is assigned by the validator.
  omega::ValidationParams window;
  /// Layer II anchor neuron, the learned window position in [0, 1].
  double anchor = 0.0;

  Stage1Vector y() const;
};

struct Stage2Result {
  nn::ForwardCache hidden;  // IIIb
  nn::ForwardCache output;  // IVb
  Stage2Vector y() const;
};

/// y^IVb is present iff the sample was validated.
struct StageOutput {
  Stage1Vector stage1{};
  std::optional<Stage2Vector> stage2;
  bool validated = false;
};

/// Training signals for every trained block of one sample.
struct Targets {
  ParamVector params{};   // layer II, logsig range
  Stage1Vector stage1{};  // IVa, encodes lambda_spp
  Stage2Vector stage2{};  // IVb, encodes L_spp
  OutputVector output{};  // VI, (lambda_spp, L_spp) normalized
};

/// IVa target: 0.5 + 0.4 * lambda_spp, IVb target: 0.8 * L_spp, replicated
/// over the layer width; inputs are normalized to [-1, 1].
Targets encode_targets(const data::Sample& normalized, const ParamVector& param_targets);

Input input_of(const data::Sample& normalized);

/// Layer II then IIIa -> IVa. Window parameters are decoded from layer II
/// through its logsig range, so they always satisfy the window limits.
Stage1Result stage1_forward(const CascadeNet& net, std::span<const double> x);

/// IIIb -> IVb on [x^I | y^IVa]. Throws ContractError when `validated` is false.
Stage2Result stage2_forward(const CascadeNet& net, std::span<const double> x, std::span<const double> y_stage1,
                            bool validated);

/// Merge controller Vb plus layer VI. Unvalidated samples feed zeros in the
/// IVb slots and report NaN as the second output.
OutputVector merge_and_output(const nn::DenseLayer& merge, const StageOutput& s);

/// Per-sample errors, e = target - output.
struct ErrorSignals {
  Stage1Vector stage1{};                // e^a
  std::optional<Stage2Vector> stage2;   // e^b, absent when not validated
  OutputVector output{};                // VI error, second entry NaN when not validated

  double local_a() const;                  // max_k |e^a_k|
  std::optional<double> local_b() const;   // max_k |e^b_k|
  double global() const;                   // e* = max{e^a, e^b}
  /// |target - y| of the meaningful VI outputs.
  double output_error() const;
};

/// Records which writer touched which block.
class WriteAudit {
public:
  enum Writer : unsigned { kPhaseA = 1u, kPhaseB = 2u };

  void record(Block b, Writer w) {
    const auto i = static_cast<std::size_t>(b);
    masks_[i].fetch_or(w, std::memory_order_relaxed);
    counts_[i].fetch_add(1, std::memory_order_relaxed);
  }
  unsigned writers(Block b) const { return masks_[static_cast<std::size_t>(b)].load(std::memory_order_relaxed); }
  /// Number of updates applied to the block.
  std::uint64_t count(Block b) const { return counts_[static_cast<std::size_t>(b)].load(std::memory_order_relaxed); }

private:
  std::array<std::atomic<unsigned>, kBlockCount> masks_{};
  std::array<std::atomic<std::uint64_t>, kBlockCount> counts_{};
};

/// Phase A: gradient step on layer II (towards the window-parameter targets)
/// and on IIIa/IVa (from e^a). Writes only the front block.
void phase_a_update(FrontBlock& front, const Stage1Result& s1, const Targets& targets, double eta,
                    WriteAudit* audit = nullptr);

struct PhaseBResult {
  StageOutput merged;
  OutputVector output{};
  std::optional<Stage2Vector> stage2_error;
  OutputVector output_error{};
};

/// Phase B: with validation, stage-2 forward and gradient steps on IIIb/IVb
/// (from e^b) and on all of VI (from the VI error); without, only VI
/// neuron 1's incoming weights and bias. Writes only the back block.
PhaseBResult phase_b_update(CascadeNet& net, std::span<const double> x, const Stage1Vector& y_stage1,
                            const Targets& targets, bool validated, double eta, WriteAudit* audit = nullptr);

/// Full sequential step: stage-1 forward, Phase A, Phase B.
ErrorSignals train_step(CascadeNet& net, const data::Sample& normalized, const ParamVector& param_targets,
                        double eta, bool validated);

}  // namespace sppnet::cascade
