#include "sppnet/omegaval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sppnet::omega {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::vector<Complex> direct_dft(std::span<const Complex> x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // Reduce k*j mod n first so the twiddle angle stays small.
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

std::size_t nearest_rank(std::size_t n, double p) {
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-12));
  return std::clamp<std::size_t>(rank, 1, n) - 1;
}

}  // namespace

std::vector<double> gaussian_window(std::size_t n, double sigma) {
  if (n < 4) throw DomainError("Gaussian window needs N >= 4");
  if (!(sigma > 0.0 && sigma <= 1.0)) throw DomainError("Gaussian window sigma must be in (0, 1]");
  const double half = 0.5 * static_cast<double>(n - 1);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) - half) / (sigma * half);
    w[i] = std::exp(-0.5 * u * u);
  }
  return w;
}

void fft_radix2(std::vector<Complex>& data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw DomainError("fft_radix2 needs a power-of-two length");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const double a = angle * static_cast<double>(k);
        const Complex tw(std::cos(a), std::sin(a));
        const Complex u = data[start + k];
        const Complex v = data[start + k + len / 2] * tw;
        data[start + k] = u + v;
        data[start + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<Complex> windowed_fft(std::span<const double> segment, double sigma) {
  const auto w = gaussian_window(segment.size(), sigma);
  std::vector<Complex> x(segment.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = w[i] * segment[i];
  if (is_power_of_two(x.size())) {
    fft_radix2(x);
    return x;
  }
  return direct_dft(x);
}

ValidationStats compute_Mm(std::span<const double> predicted, std::span<const double> training, double sigma) {
  if (predicted.size() != training.size()) throw DomainError("compute_Mm: segment length mismatch");
  // Linearity: F[train] - F[pred] = F[train - pred] on the same window.
  std::vector<double> diff(predicted.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = training[i] - predicted[i];
  const auto spectrum = windowed_fft(diff, sigma);
  ValidationStats stats{0.0, std::numeric_limits<double>::infinity()};
  for (const auto& c : spectrum) {
    const double mag = std::abs(c);
    stats.M = std::max(stats.M, mag);
    stats.m = std::min(stats.m, mag);
  }
  return stats;
}

AcceptanceRegion::AcceptanceRegion(double theta_M, double theta_m)
    : theta_M_(theta_M), theta_m_(theta_m), calibrated_(true) {
  if (!(theta_m >= 0.0 && theta_M >= theta_m)) throw DomainError("acceptance region needs theta_M >= theta_m >= 0");
}

bool validate(const ValidationStats& stats, const AcceptanceRegion& region) {
  if (!region.calibrated()) throw ContractError("acceptance region used before calibration");
  return stats.M <= region.theta_M() && stats.m <= region.theta_m();
}

AcceptanceRegion calibrate_region(std::span<const ValidationStats> history, double p) {
  if (history.empty()) throw DomainError("cannot calibrate an acceptance region from an empty history");
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("percentile must be in (0, 1]");
  std::vector<double> big(history.size());
  std::vector<double> small(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    big[i] = history[i].M;
    small[i] = history[i].m;
  }
  const std::size_t k = nearest_rank(history.size(), p);
  std::nth_element(big.begin(), big.begin() + static_cast<std::ptrdiff_t>(k), big.end());
  std::nth_element(small.begin(), small.begin() + static_cast<std::ptrdiff_t>(k), small.end());
  return {big[k], small[k]};
}

double dominant_peak_width(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 4) throw DomainError("dominant_peak_width needs at least 4 samples");
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> centred(n);
  for (std::size_t i = 0; i < n; ++i) centred[i] = signal[i] - mean;

  const auto spectrum = windowed_fft(centred, 1.0);
  const std::size_t nyquist = n / 2;
  std::vector<double> power(nyquist + 1);
  for (std::size_t k = 0; k <= nyquist; ++k) power[k] = std::norm(spectrum[k]);
  const auto peak = static_cast<std::size_t>(std::max_element(power.begin(), power.end()) - power.begin());
  if (!(power[peak] > 0.0)) return 1.0;

  const double half = 0.5 * power[peak];
  std::size_t lo = peak;
  std::size_t hi = peak;
  while (lo > 0 && power[lo - 1] >= half) --lo;
  while (hi < nyquist && power[hi + 1] >= half) ++hi;
  const double width = static_cast<double>(hi - lo + 1) / static_cast<double>(nyquist);
  return std::min(width, 1.0);
}

void WindowLimits::validate() const {
  if (min_delta_tau < 4) throw DomainError("window length must be at least 4");
  if (max_delta_tau < min_delta_tau) throw DomainError("max window length below min window length");
  if (target_delta_tau < min_delta_tau || target_delta_tau > max_delta_tau) {
    throw DomainError("target window length outside [min, max]");
  }
  if (!(min_sigma > 0.0 && min_sigma < 1.0)) throw DomainError("min_sigma must be in (0, 1)");
}

Validator::Validator(Options options) : options_(options) {
  if (options_.warmup_epochs < 1) throw DomainError("training-mode validator needs at least one warm-up epoch");
  if (!(options_.percentile > 0.0 && options_.percentile <= 1.0)) throw DomainError("percentile must be in (0, 1]");
}

Validator::Validator(AcceptanceRegion region) : options_{0, 1.0}, region_(region) {
  if (!region_.calibrated()) throw ContractError("evaluation validator needs a calibrated region");
}

Verdict Validator::step(double predicted, double training, ValidationParams params, int epoch,
                        std::size_t sequence) {
  line_.ensure_capacity(params.delta_tau);
  line_.push({predicted, training});

  Verdict v;
  v.params = params;
  v.params.tau = sequence + 1 >= params.delta_tau ? sequence + 1 - params.delta_tau : 0;
  if (const auto window = line_.window(params.delta_tau)) {
    std::vector<double> pred(window->size());
    std::vector<double> train(window->size());
    for (std::size_t i = 0; i < window->size(); ++i) {
      pred[i] = (*window)[i].first;
      train[i] = (*window)[i].second;
    }
    v.stats = compute_Mm(pred, train, params.sigma);
    v.ready = true;
  } else {
    v.stats = {std::nan(""), std::nan("")};
  }

  if (!region_.calibrated() && epoch <= options_.warmup_epochs) {
    v.accepted = true;
    if (v.ready) history_.push_back(v.stats);
  } else {
    v.accepted = v.ready && validate(v.stats, region_);
  }
  return v;
}

void Validator::end_epoch(int epoch) {
  if (region_.calibrated() || epoch != options_.warmup_epochs) return;
  if (history_.empty()) throw DataError("no complete validation window during warm-up; dataset too small");
  region_ = calibrate_region(history_, options_.percentile);
  history_.clear();
}

}  // namespace sppnet::omega
