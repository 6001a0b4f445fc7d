#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sppnet/errors.hpp"

namespace sppnet::omega {

using Complex = std::complex<double>;

/// Growable ring buffer of the most recent entries, oldest first.
///
/// Pushing into a full buffer overwrites the oldest entry. Growing the
/// capacity keeps every stored entry and its order; capacity never shrinks.
template <typename T>
class DelayLine {
public:
  explicit DelayLine(std::size_t capacity = 0) : slots_(capacity) {}

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  bool ready(std::size_t n) const { return size_ >= n; }

  void push(const T& value) {
    if (slots_.empty()) ensure_capacity(1);
    const std::size_t tail = (head_ + size_) % slots_.size();
    slots_[tail] = value;
    if (size_ < slots_.size()) {
      ++size_;
    } else {
      head_ = (head_ + 1) % slots_.size();
    }
  }

  void ensure_capacity(std::size_t n) {
    if (n <= slots_.size()) return;
    std::vector<T> grown(n);
    for (std::size_t i = 0; i < size_; ++i) grown[i] = (*this)[i];
    slots_ = std::move(grown);
    head_ = 0;
  }

  /// i = 0 is the oldest stored entry.
  const T& operator[](std::size_t i) const { return slots_[(head_ + i) % slots_.size()]; }

  /// The latest n entries, oldest first; nullopt while fewer are buffered.
  std::optional<std::vector<T>> window(std::size_t n) const {
    if (!ready(n)) return std::nullopt;
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i = size_ - n; i < size_; ++i) out.push_back((*this)[i]);
    return out;
  }

private:
  std::vector<T> slots_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

/// w[n] = exp(-1/2 ((n - (N-1)/2) / (sigma (N-1)/2))^2); sigma is a fraction
/// of the half-window.
std::vector<double> gaussian_window(std::size_t n, double sigma);

/// In-place iterative radix-2 FFT, X_k = sum_n x_n exp(-2 pi i k n / N).
void fft_radix2(std::vector<Complex>& data);

/// DFT(w .* segment): radix-2 FFT for power-of-two lengths, direct O(N^2)
/// sum otherwise.
std::vector<Complex> windowed_fft(std::span<const double> segment, double sigma);

struct ValidationStats {
  double M = 0.0;
  double m = 0.0;
};

/// Max and min over frequency bins of |F_sigma[training] - F_sigma[predicted]|.
ValidationStats compute_Mm(std::span<const double> predicted, std::span<const double> training, double sigma);

/// Axis-aligned rectangle [0, theta_M] x [0, theta_m] of the (M, m) plane.
class AcceptanceRegion {
public:
  AcceptanceRegion() = default;
  AcceptanceRegion(double theta_M, double theta_m);

  bool calibrated() const { return calibrated_; }
  double theta_M() const { return theta_M_; }
  double theta_m() const { return theta_m_; }

private:
  double theta_M_ = 0.0;
  double theta_m_ = 0.0;
  bool calibrated_ = false;
};

/// True iff M <= theta_M and m <= theta_m. Throws ContractError when the
/// region has not been calibrated.
bool validate(const ValidationStats& stats, const AcceptanceRegion& region);

/// Nearest-rank p-quantiles of the observed M and m values, 0 < p <= 1.
AcceptanceRegion calibrate_region(std::span<const ValidationStats> history, double p);

/// Half-power width of the dominant spectral peak of a mean-removed signal,
/// as a fraction of the Nyquist bin count, clamped to (0, 1].
double dominant_peak_width(std::span<const double> signal);

/// Bounds used when decoding layer II outputs into window parameters.
struct WindowLimits {
  std::size_t min_delta_tau = 4;
  std::size_t max_delta_tau = 64;
  /// Window length layer II is trained towards.
  std::size_t target_delta_tau = 32;
  double min_sigma = 0.05;
  /// Which stage-1 output is compared against its training signal.
  std::size_t component = 0;

  void validate() const;
};

struct ValidationParams {
  std::size_t tau = 0;        // window start (sample sequence index)
  std::size_t delta_tau = 4;  // window length in samples
  double sigma = 1.0;         // Gaussian width, fraction of the half-window
};

struct Verdict {
  bool accepted = false;
  /// False when the delay line held fewer than delta_tau entries.
  bool ready = false;
  ValidationStats stats;
  ValidationParams params;
};

/// Single-consumer validation state machine: buffers (predicted, training)
/// pairs, computes (M, m) over the current window and applies the region.
/// During warm-up epochs every sample is accepted and ready (M, m) pairs are
/// collected; the region is calibrated when the last warm-up epoch ends.
class Validator {
public:
  struct Options {
    int warmup_epochs = 1;
    double percentile = 0.9;
  };

  explicit Validator(Options options);
  /// Evaluation mode: fixed region, no warm-up.
  explicit Validator(AcceptanceRegion region);

  /// `params.tau` is ignored on input; the verdict reports the actual window start.
  Verdict step(double predicted, double training, ValidationParams params, int epoch, std::size_t sequence);
  void end_epoch(int epoch);

  const AcceptanceRegion& region() const { return region_; }
  const DelayLine<std::pair<double, double>>& delay_line() const { return line_; }

private:
  Options options_;
  AcceptanceRegion region_;
  DelayLine<std::pair<double, double>> line_;
  std::vector<ValidationStats> history_;
};

}  // namespace sppnet::omega
