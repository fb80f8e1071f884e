// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "eqlift/nn/autograd.hpp"

namespace eqlift::nn {

// Trainable tensor plus its Adam moments. The value/gradient live in a leaf
// node so forward passes can reference it directly.
struct Parameter {
  Var node;
  Tensor first_moment;
  Tensor second_moment;

  Parameter() = default;
  Parameter(Tensor value, std::string name)
      : node(leaf(std::move(value), std::move(name))),
        first_moment(node->value.shape(), 0.0),
        second_moment(node->value.shape(), 0.0) {}

  // Copies own a fresh node, so a copied model never aliases the original.
  Parameter(const Parameter& o)
      : node(o.node ? leaf(o.node->value, o.node->label) : nullptr),
        first_moment(o.first_moment),
        second_moment(o.second_moment) {}
  Parameter& operator=(const Parameter& o) {
    if (this != &o) *this = Parameter(o);
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  Tensor& value() { return node->value; }
  const Tensor& value() const { return node->value; }
  std::size_t size() const { return node->value.size(); }
};

// Name-ordered so iteration (and hence updates and serialization) is stable.
using ParameterSet = std::map<std::string, Parameter>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double gamma = 0.96;
  int epochs = 100;
  int batch_size = 256;
  std::uint64_t seed = 0;
  double dropout_rate = 0.2;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    if (!(learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must lie in [0, 1)");
  }
};

// Exponential decay, stepped once per epoch.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
  return cfg.learning_rate * std::pow(cfg.gamma, epoch);
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every parameter using the gradient held in
// its node. step_index counts from 1.
inline void adam_step(ParameterSet& params, long step_index, double lr, const AdamHyper& h = {}) {
  if (step_index < 1) throw InvalidArgument("adam step index must be >= 1");
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step_index));
  for (auto& [name, p] : params) {
    if (!p.node->has_grad()) continue;
    Tensor& w = p.node->value;
    const Tensor& g = p.node->grad;
    for (std::size_t i = 0; i < w.size(); ++i) {
      p.first_moment[i] = h.beta1 * p.first_moment[i] + (1.0 - h.beta1) * g[i];
      p.second_moment[i] = h.beta2 * p.second_moment[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = p.first_moment[i] / bc1;
      const double v_hat = p.second_moment[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

inline void zero_grad(ParameterSet& params) {
  for (auto& [name, p] : params) p.node->zero_grad();
}

inline std::size_t count_parameters(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p.size();
  return n;
}

}  // namespace eqlift::nn
