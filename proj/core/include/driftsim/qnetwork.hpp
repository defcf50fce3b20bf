#pragma once

// Small fully-connected value network with hand-rolled backprop.  Kept
// dependency-free on purpose: the parameter count is tiny (tens of
// thousands), so plain double vectors beat any BLAS round trip and the
// gradient stays easy to audit against finite differences.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace driftsim {

/// Multilayer perceptron: linear layers with ReLU on every hidden layer and
/// a linear output.  Weights are stored row-major, one matrix per layer.
class QNetwork {
 public:
  QNetwork() = default;

  /// He-normal initialisation of the weights, zero biases.  Deterministic
  /// given the generator state.
  static QNetwork make(int inputs, const std::vector<int>& hidden, int outputs,
                       std::mt19937_64& rng);

  int inputs() const { return sizes_.empty() ? 0 : sizes_.front(); }
  int outputs() const { return sizes_.empty() ? 0 : sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t layer_count() const { return weights_.size(); }

  std::vector<double> forward(std::span<const double> x) const;

  /// Per-layer intermediate results captured during a forward pass so the
  /// backward pass can reuse them.
  struct Trace {
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::vector<std::vector<double>> act;   // act[0] = input, act[l] post-ReLU
  };
  std::vector<double> forward(std::span<const double> x, Trace& trace) const;

  const std::vector<double>& layer_weights(std::size_t layer) const {
    return weights_[layer];
  }
  const std::vector<double>& layer_biases(std::size_t layer) const {
    return biases_[layer];
  }

  /// Flat view over every parameter (weights first, then biases, layer by
  /// layer).  Used by the optimizer and by finite-difference checks.
  std::size_t parameter_count() const;
  double parameter(std::size_t flat_index) const;
  void set_parameter(std::size_t flat_index, double value);

  std::string to_json_string() const;
  static QNetwork from_json_string(const std::string& text);

  bool same_shape(const QNetwork& other) const { return sizes_ == other.sizes_; }

 private:
  std::vector<int> sizes_;                    // [in, hidden..., out]
  std::vector<std::vector<double>> weights_;  // [layer][out*in] row-major
  std::vector<std::vector<double>> biases_;   // [layer][out]

  friend struct Gradients;
  friend class AdamOptimizer;
};

/// Gradient (or any same-shaped accumulator) for a QNetwork.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const QNetwork& net);
  void add(const Gradients& other);
  void scale(double factor);
};

/// Gradient of the half squared error 0.5 * (Q(s, action) - target)^2 with
/// respect to every parameter, for a single sample.  Returns the residual
/// Q(s, action) - target through `residual` when non-null.
Gradients backprop_gradient(const QNetwork& net, std::span<const double> input,
                            int action, double target,
                            double* residual = nullptr);

/// Adam with the usual bias-corrected moment estimates.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(double beta1, double beta2, double epsilon)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(QNetwork& net, const Gradients& grad, double learning_rate);
  void reset();
  long iterations() const { return t_; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  long t_ = 0;
  Gradients m_;
  Gradients v_;
  bool initialised_ = false;
};

}  // namespace driftsim
