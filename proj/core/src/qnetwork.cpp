#include "driftsim/qnetwork.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace driftsim {

QNetwork QNetwork::make(int inputs, const std::vector<int>& hidden, int outputs,
                        std::mt19937_64& rng) {
  if (inputs <= 0 || outputs <= 0) {
    throw std::invalid_argument("QNetwork::make: layer sizes must be positive");
  }
  for (int h : hidden) {
    if (h <= 0) {
      throw std::invalid_argument(
          "QNetwork::make: hidden layer sizes must be positive");
    }
  }
  QNetwork net;
  net.sizes_.push_back(inputs);
  net.sizes_.insert(net.sizes_.end(), hidden.begin(), hidden.end());
  net.sizes_.push_back(outputs);

  for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
    const int fan_in = net.sizes_[l];
    const int fan_out = net.sizes_[l + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
    for (double& x : w) x = dist(rng);
    net.weights_.push_back(std::move(w));
    net.biases_.emplace_back(fan_out, 0.0);
  }
  return net;
}

std::vector<double> QNetwork::forward(std::span<const double> x) const {
  Trace trace;
  return forward(x, trace);
}

std::vector<double> QNetwork::forward(std::span<const double> x,
                                      Trace& trace) const {
  if (sizes_.empty()) throw std::logic_error("QNetwork::forward: empty network");
  if (static_cast<int>(x.size()) != inputs()) {
    throw std::invalid_argument("QNetwork::forward: input size mismatch");
  }
  trace.pre.assign(weights_.size(), {});
  trace.act.assign(weights_.size() + 1, {});
  trace.act[0].assign(x.begin(), x.end());

  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    const std::vector<double>& in = trace.act[l];
    std::vector<double> z(biases_[l]);
    const double* w = weights_[l].data();
    for (int r = 0; r < n_out; ++r) {
      double acc = 0.0;
      const double* row = w + static_cast<std::size_t>(r) * n_in;
      for (int c = 0; c < n_in; ++c) acc += row[c] * in[c];
      z[r] += acc;
    }
    trace.pre[l] = z;
    const bool last = (l + 1 == weights_.size());
    if (!last) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    trace.act[l + 1] = std::move(z);
  }
  return trace.act.back();
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += weights_[l].size() + biases_[l].size();
  }
  return n;
}

double QNetwork::parameter(std::size_t flat_index) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (flat_index < weights_[l].size()) return weights_[l][flat_index];
    flat_index -= weights_[l].size();
    if (flat_index < biases_[l].size()) return biases_[l][flat_index];
    flat_index -= biases_[l].size();
  }
  throw std::out_of_range("QNetwork::parameter: index out of range");
}

void QNetwork::set_parameter(std::size_t flat_index, double value) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (flat_index < weights_[l].size()) {
      weights_[l][flat_index] = value;
      return;
    }
    flat_index -= weights_[l].size();
    if (flat_index < biases_[l].size()) {
      biases_[l][flat_index] = value;
      return;
    }
    flat_index -= biases_[l].size();
  }
  throw std::out_of_range("QNetwork::set_parameter: index out of range");
}

std::string QNetwork::to_json_string() const {
  nlohmann::json j;
  j["sizes"] = sizes_;
  j["weights"] = weights_;
  j["biases"] = biases_;
  return j.dump();
}

QNetwork QNetwork::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  QNetwork net;
  net.sizes_ = j.at("sizes").get<std::vector<int>>();
  net.weights_ = j.at("weights").get<std::vector<std::vector<double>>>();
  net.biases_ = j.at("biases").get<std::vector<std::vector<double>>>();
  if (net.sizes_.size() < 2 ||
      net.weights_.size() != net.sizes_.size() - 1 ||
      net.biases_.size() != net.sizes_.size() - 1) {
    throw std::runtime_error("QNetwork::from_json_string: malformed network");
  }
  for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
    const auto expected_w =
        static_cast<std::size_t>(net.sizes_[l]) * net.sizes_[l + 1];
    if (net.weights_[l].size() != expected_w ||
        net.biases_[l].size() != static_cast<std::size_t>(net.sizes_[l + 1])) {
      throw std::runtime_error("QNetwork::from_json_string: layer size mismatch");
    }
  }
  return net;
}

Gradients Gradients::zeros_like(const QNetwork& net) {
  Gradients g;
  g.weights.reserve(net.weights_.size());
  g.biases.reserve(net.biases_.size());
  for (std::size_t l = 0; l < net.weights_.size(); ++l) {
    g.weights.emplace_back(net.weights_[l].size(), 0.0);
    g.biases.emplace_back(net.biases_[l].size(), 0.0);
  }
  return g;
}

void Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].size(); ++i) {
      weights[l][i] += other.weights[l][i];
    }
    for (std::size_t i = 0; i < biases[l].size(); ++i) {
      biases[l][i] += other.biases[l][i];
    }
  }
}

void Gradients::scale(double factor) {
  for (auto& layer : weights) {
    for (double& x : layer) x *= factor;
  }
  for (auto& layer : biases) {
    for (double& x : layer) x *= factor;
  }
}

Gradients backprop_gradient(const QNetwork& net, std::span<const double> input,
                            int action, double target, double* residual) {
  if (action < 0 || action >= net.outputs()) {
    throw std::invalid_argument("backprop_gradient: action out of range");
  }
  QNetwork::Trace trace;
  const std::vector<double> q = net.forward(input, trace);
  const double res = q[static_cast<std::size_t>(action)] - target;
  if (residual != nullptr) *residual = res;

  Gradients grad = Gradients::zeros_like(net);
  const auto& sizes = net.layer_sizes();
  const std::size_t layers = net.layer_count();

  // delta starts at the output: d loss / d z_out is the residual on the
  // chosen action's unit, zero elsewhere (linear output layer).
  std::vector<double> delta(static_cast<std::size_t>(net.outputs()), 0.0);
  delta[static_cast<std::size_t>(action)] = res;

  for (std::size_t l = layers; l-- > 0;) {
    const int n_in = sizes[l];
    const int n_out = sizes[l + 1];
    const std::vector<double>& a_prev = trace.act[l];
    for (int r = 0; r < n_out; ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      if (d == 0.0) continue;
      double* grow = grad.weights[l].data() + static_cast<std::size_t>(r) * n_in;
      for (int c = 0; c < n_in; ++c) grow[c] += d * a_prev[c];
      grad.biases[l][static_cast<std::size_t>(r)] += d;
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(n_in), 0.0);
    const double* w = net.layer_weights(l).data();
    for (int r = 0; r < n_out; ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      if (d == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(r) * n_in;
      for (int c = 0; c < n_in; ++c) prev[c] += d * row[c];
    }
    // Gate by ReLU derivative of the previous layer's pre-activation.
    const std::vector<double>& pre_prev = trace.pre[l - 1];
    for (int c = 0; c < n_in; ++c) {
      if (pre_prev[static_cast<std::size_t>(c)] <= 0.0) {
        prev[static_cast<std::size_t>(c)] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return grad;
}

void AdamOptimizer::step(QNetwork& net, const Gradients& grad,
                         double learning_rate) {
  if (!initialised_) {
    m_ = Gradients::zeros_like(net);
    v_ = Gradients::zeros_like(net);
    initialised_ = true;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t l = 0; l < net.weights_.size(); ++l) {
    auto update = [&](std::vector<double>& params, std::vector<double>& m,
                      std::vector<double>& v, const std::vector<double>& g) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon_);
      }
    };
    update(net.weights_[l], m_.weights[l], v_.weights[l], grad.weights[l]);
    update(net.biases_[l], m_.biases[l], v_.biases[l], grad.biases[l]);
  }
}

void AdamOptimizer::reset() {
  t_ = 0;
  m_ = Gradients{};
  v_ = Gradients{};
  initialised_ = false;
}

}  // namespace driftsim
