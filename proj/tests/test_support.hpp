// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eqlift/geometry.hpp"
#include "eqlift/nn/autograd.hpp"

namespace eqlift::testing {

inline Pose2D random_pose2(std::mt19937_64& rng, int n, double spread = 1.0) {
  std::normal_distribution<double> g(0.0, spread);
  Eigen::MatrixX2d j(n, 2);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = g(rng);
  return Pose2D(j);
}

inline Pose3D random_pose3(std::mt19937_64& rng, int n, double spread = 1.0) {
  std::normal_distribution<double> g(0.0, spread);
  Eigen::MatrixX3d j(n, 3);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = g(rng);
  return Pose3D(j);
}

inline double random_angle(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
}

inline nn::Tensor random_tensor(std::mt19937_64& rng, nn::Shape shape, double spread = 1.0) {
  nn::Tensor t(std::move(shape));
  std::normal_distribution<double> g(0.0, spread);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
};

// Central finite differences on the scalar returned by `loss` against the
// gradients backward() leaves in each leaf. `loss` must rebuild the graph
// from the leaves on every call.
inline GradCheckResult check_gradients(const std::function<nn::Var()>& loss, const std::vector<nn::Var>& leaves,
                                       double h = 1e-5) {
  for (const auto& l : leaves) l->zero_grad();
  auto root = loss();
  nn::backward(root);
  std::vector<nn::Tensor> analytic;
  for (const auto& l : leaves) analytic.push_back(l->has_grad() ? l->grad : nn::Tensor(l->value.shape(), 0.0));

  GradCheckResult res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& v = leaves[li]->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss()->value[0];
      v[i] = orig - h;
      const double down = loss()->value[0];
      v[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = leaves[li]->label + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return res;
}

}  // namespace eqlift::testing
