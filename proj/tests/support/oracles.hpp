#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. They deliberately avoid the library code paths they check.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "sppnet/nncore.hpp"

namespace sppnet::oracle {

inline long double act_ld(nn::Activation a, long double x) {
  switch (a) {
    case nn::Activation::tansig: return std::tanh(x);
    case nn::Activation::logsig: return 1.0L / (1.0L + std::exp(-x));
    case nn::Activation::purelin: return x;
  }
  return x;
}

/// Forward pass of a chain in extended precision. `override_value` replaces
/// one parameter: weight (layer, row, col) or, with col == -1, bias (layer, row).
struct ParamRef {
  int layer = -1;
  int row = 0;
  int col = 0;
  long double value = 0.0L;
};

inline std::vector<long double> chain_forward_ld(const std::vector<nn::DenseLayer>& layers,
                                                 const std::vector<double>& x, const ParamRef& p = {}) {
  std::vector<long double> v(x.begin(), x.end());
  for (int l = 0; l < static_cast<int>(layers.size()); ++l) {
    const auto& L = layers[static_cast<std::size_t>(l)];
    std::vector<long double> out(L.fan_out());
    for (std::size_t r = 0; r < L.fan_out(); ++r) {
      long double b = L.bias()[r];
      if (p.layer == l && p.col < 0 && p.row == static_cast<int>(r)) b = p.value;
      long double s = b;
      for (std::size_t c = 0; c < L.fan_in(); ++c) {
        long double w = L.weight(r, c);
        if (p.layer == l && p.row == static_cast<int>(r) && p.col == static_cast<int>(c)) w = p.value;
        s += w * v[c];
      }
      out[r] = act_ld(L.activation(), s);
    }
    v = std::move(out);
  }
  return v;
}

inline long double half_sq_error_ld(const std::vector<nn::DenseLayer>& layers, const std::vector<double>& x,
                                    const std::vector<double>& target, const ParamRef& p = {}) {
  const auto y = chain_forward_ld(layers, x, p);
  long double s = 0.0L;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const long double e = static_cast<long double>(target[k]) - y[k];
    s += e * e;
  }
  return 0.5L * s;
}

/// Central difference of 1/2||t - y||^2 with respect to one parameter.
inline double central_difference(const std::vector<nn::DenseLayer>& layers, const std::vector<double>& x,
                                 const std::vector<double>& target, int layer, int row, int col, double h) {
  const auto& L = layers[static_cast<std::size_t>(layer)];
  const long double w = col < 0 ? L.bias()[static_cast<std::size_t>(row)]
                                 : L.weight(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
  const long double plus = half_sq_error_ld(layers, x, target, {layer, row, col, w + h});
  const long double minus = half_sq_error_ld(layers, x, target, {layer, row, col, w - h});
  return static_cast<double>((plus - minus) / (2.0L * h));
}

/// Relative disagreement used by the gradient checks. Entries where both
/// values are below `floor` are compared absolutely.
inline double gradient_error(double g, double fd, double floor = 1e-8) {
  const double scale = std::max(std::abs(g), std::abs(fd));
  if (scale < floor) return std::abs(g - fd);
  return std::abs(g - fd) / scale;
}

/// O(N^2) DFT of w[n] * x[n], X[k] = sum_n w[n] x[n] exp(-2 pi i k n / N).
inline std::vector<std::complex<double>> direct_dft(const std::vector<double>& x, const std::vector<double>& w) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<long double> s = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * j) % n) /
                              static_cast<long double>(n);
      s += static_cast<long double>(w[j] * x[j]) * std::complex<long double>(std::cos(ang), std::sin(ang));
    }
    out[k] = {static_cast<double>(s.real()), static_cast<double>(s.imag())};
  }
  return out;
}

}  // namespace sppnet::oracle
