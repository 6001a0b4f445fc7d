#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sppnet/rng.hpp"

namespace sppnet::nn {

enum class Activation { tansig, logsig, purelin };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// tansig = tanh, logsig = 1/(1+exp(-x)), purelin = identity.
double activate(Activation a, double x);
/// Derivative expressed through the activation output y = activate(a, x).
double activation_slope(Activation a, double y);
std::vector<double> activation(Activation a, std::span<const double> x);

/// y = act(W x + b) with W stored row-major (fan_out x fan_in).
class DenseLayer {
public:
  DenseLayer() = default;
  DenseLayer(std::size_t fan_in, std::size_t fan_out, Activation act);

  std::size_t fan_in() const { return fan_in_; }
  std::size_t fan_out() const { return fan_out_; }
  Activation activation() const { return act_; }

  double& weight(std::size_t row, std::size_t col) { return weights_[row * fan_in_ + col]; }
  double weight(std::size_t row, std::size_t col) const { return weights_[row * fan_in_ + col]; }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

  /// Uniform in [-init_scale, init_scale] divided by sqrt(fan_in).
  void initialize(Engine& engine, double init_scale);
  bool all_finite() const;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;

private:
  std::size_t fan_in_ = 0;
  std::size_t fan_out_ = 0;
  Activation act_ = Activation::purelin;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

struct ForwardCache {
  std::vector<double> input;
  std::vector<double> pre_activation;
  std::vector<double> output;
};

ForwardCache forward(const DenseLayer& layer, std::span<const double> x);

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> bias;

  bool all_zero() const;
};

/// Backpropagates dL/dy_out through a chain whose forward caches are given,
/// returning one gradient per layer. When `input_grad` is non-null it receives
/// dL/dx of the first layer.
std::vector<LayerGradient> backprop_chain(std::span<const DenseLayer* const> layers,
                                          std::span<const ForwardCache> caches, std::span<const double> output_grad,
                                          std::vector<double>* input_grad = nullptr);

/// Gradients of 1/2 ||target - y||^2 for every weight and bias of the chain.
///
/// The update rule w <- w - eta * e * de/dw is read, for a vector error e, as
/// the gradient of half the squared error norm: sum_k e_k de_k/dw.
std::vector<LayerGradient> backprop(std::span<const DenseLayer> layers, std::span<const double> x,
                                    std::span<const double> target);

/// w <- w - eta * g. A non-finite gradient throws DomainError and leaves the
/// layer untouched; callers attach epoch/sample context.
void gd_update(DenseLayer& layer, const LayerGradient& grad, double eta);

double mse(std::span<const double> predictions, std::span<const double> targets);

struct TrainConfig {
  double learning_rate = 0.01;
  int max_epochs = 100;
  double mse_goal = 0.0;
  std::uint64_t seed = 1;
  double init_scale = 0.5;

  void validate() const;
};

void write_layer(std::ostream& out, std::string_view name, const DenseLayer& layer);
/// Reads one layer written by write_layer; `name` must match.
DenseLayer read_layer(std::istream& in, std::string_view name);

}  // namespace sppnet::nn
