// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "eqlift/nn/autograd.hpp"

namespace eqlift::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

namespace detail {

inline ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

}  // namespace detail

// y = x W^T + b for x [B, in], W [out, in], b [out] (bias may be null).
inline Var linear(const Var& x, const Var& w, const Var& b, std::string label = "linear") {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
    throw InvalidArgument(label + ": expected x [B," + std::to_string(wv.rank() == 2 ? wv.dim(1) : 0) +
                          "], got " + shape_str(xv.shape()) + " with weight " + shape_str(wv.shape()));
  }
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (b && (b->value.rank() != 1 || b->value.dim(0) != out)) {
    throw InvalidArgument(label + ": bias shape " + shape_str(b->value.shape()) + " does not match " +
                          std::to_string(out) + " outputs");
  }
  Tensor y({batch, out});
  auto ym = detail::as_matrix(y, batch, out);
  ym.noalias() = detail::as_matrix(xv, batch, in) * detail::as_matrix(wv, out, in).transpose();
  if (b) ym.rowwise() += ConstVecMap(b->value.data(), static_cast<Eigen::Index>(out)).transpose();

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(b);
  auto n = make_node(std::move(y), std::move(inputs), std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get(), wp = w.get(), bp = b.get(), batch, in, out] {
    const auto gy = detail::as_matrix(self->grad, batch, out);
    if (xp->requires_grad) {
      detail::as_matrix(xp->grad_buffer(), batch, in).noalias() +=
          gy * detail::as_matrix(wp->value, out, in);
    }
    if (wp->requires_grad) {
      detail::as_matrix(wp->grad_buffer(), out, in).noalias() +=
          gy.transpose() * detail::as_matrix(xp->value, batch, in);
    }
    if (bp && bp->requires_grad) {
      VecMap(bp->grad_buffer().data(), static_cast<Eigen::Index>(out)) += gy.colwise().sum().transpose();
    }
  };
  return n;
}

inline Var add(const Var& a, const Var& b, std::string label = "add") {
  detail::require_same_shape(a->value, b->value, "add");
  Tensor y = a->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b->value[i];
  auto n = make_node(std::move(y), {a, b}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), ap = a.get(), bp = b.get()] {
    for (Node* p : {ap, bp}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
    }
  };
  return n;
}

inline Var scale(const Var& x, double factor, std::string label = "scale") {
  Tensor y = x->value;
  for (auto& v : y.values()) v *= factor;
  auto n = make_node(std::move(y), {x}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get(), factor] {
    if (!xp->requires_grad) return;
    auto& g = xp->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self->grad[i];
  };
  return n;
}

inline Var relu(const Var& x, std::string label = "relu") {
  Tensor y = x->value;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  auto n = make_node(std::move(y), {x}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get()] {
    if (!xp->requires_grad) return;
    auto& g = xp->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xp->value[i] > 0.0) g[i] += self->grad[i];
    }
  };
  return n;
}

inline Var reshape(const Var& x, Shape shape, std::string label = "reshape") {
  auto n = make_node(x->value.reshaped(std::move(shape)), {x}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get()] {
    if (!xp->requires_grad) return;
    auto& g = xp->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
  };
  return n;
}

inline Var sum(const Var& x, std::string label = "sum") {
  double s = 0.0;
  for (double v : x->value.values()) s += v;
  auto n = make_node(Tensor({1}, s), {x}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get()] {
    if (!xp->requires_grad) return;
    auto& g = xp->grad_buffer();
    for (auto& v : g.values()) v += self->grad[0];
  };
  return n;
}

// Mean of squared differences over all elements.
inline Var mse_loss(const Var& pred, const Var& target, std::string label = "mse_loss") {
  detail::require_same_shape(pred->value, target->value, "mse_loss");
  const std::size_t count = pred->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = pred->value[i] - target->value[i];
    acc += d * d;
  }
  auto n = make_node(Tensor({1}, acc / static_cast<double>(count)), {pred, target}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), pp = pred.get(), tp = target.get(), count] {
    const double k = 2.0 * self->grad[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double d = k * (pp->value[i] - tp->value[i]);
      if (pp->requires_grad) pp->grad_buffer()[i] += d;
      if (tp->requires_grad) tp->grad_buffer()[i] -= d;
    }
  };
  return n;
}

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t features = 1)
      : running_mean({features}, 0.0), running_var({features}, 1.0) {}
};

// Per-feature normalization of x [B, F]. Training mode normalizes with the
// (biased) batch statistics and updates the running estimates with the
// unbiased variance; evaluation mode uses the running estimates.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool train,
                      std::string label = "batch_norm") {
  const Tensor& xv = x->value;
  if (xv.rank() != 2 || gamma->value.size() != xv.dim(1) || beta->value.size() != xv.dim(1) ||
      state.running_mean.size() != xv.dim(1)) {
    throw InvalidArgument(label + ": feature count mismatch for input " + shape_str(xv.shape()));
  }
  const std::size_t batch = xv.dim(0), feat = xv.dim(1);
  Tensor mean({feat}, 0.0), inv_std({feat}, 0.0);
  if (train) {
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t f = 0; f < feat; ++f) mean[f] += xv.at(i, f);
    for (std::size_t f = 0; f < feat; ++f) mean[f] /= static_cast<double>(batch);
    Tensor var({feat}, 0.0);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t f = 0; f < feat; ++f) {
        const double d = xv.at(i, f) - mean[f];
        var[f] += d * d;
      }
    for (std::size_t f = 0; f < feat; ++f) {
      const double biased = var[f] / static_cast<double>(batch);
      inv_std[f] = 1.0 / std::sqrt(biased + state.eps);
      const double unbiased = batch > 1 ? var[f] / static_cast<double>(batch - 1) : biased;
      state.running_mean[f] = (1.0 - state.momentum) * state.running_mean[f] + state.momentum * mean[f];
      state.running_var[f] = (1.0 - state.momentum) * state.running_var[f] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t f = 0; f < feat; ++f) {
      mean[f] = state.running_mean[f];
      inv_std[f] = 1.0 / std::sqrt(state.running_var[f] + state.eps);
    }
  }

  const bool keep = grad_enabled() && (x->requires_grad || gamma->requires_grad || beta->requires_grad);
  Tensor xhat = keep ? Tensor({batch, feat}) : Tensor();
  Tensor y({batch, feat});
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t f = 0; f < feat; ++f) {
      const double h = (xv.at(i, f) - mean[f]) * inv_std[f];
      if (keep) xhat.at(i, f) = h;
      y.at(i, f) = gamma->value[f] * h + beta->value[f];
    }

  auto n = make_node(std::move(y), {x, gamma, beta}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get(), gp = gamma.get(), bp = beta.get(), xhat = std::move(xhat),
                    inv_std = std::move(inv_std), train, batch, feat] {
    const Tensor& gy = self->grad;
    Tensor sum_g({feat}, 0.0), sum_gx({feat}, 0.0);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t f = 0; f < feat; ++f) {
        sum_g[f] += gy.at(i, f);
        sum_gx[f] += gy.at(i, f) * xhat.at(i, f);
      }
    if (gp->requires_grad) {
      auto& g = gp->grad_buffer();
      for (std::size_t f = 0; f < feat; ++f) g[f] += sum_gx[f];
    }
    if (bp->requires_grad) {
      auto& g = bp->grad_buffer();
      for (std::size_t f = 0; f < feat; ++f) g[f] += sum_g[f];
    }
    if (!xp->requires_grad) return;
    auto& gx = xp->grad_buffer();
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t f = 0; f < feat; ++f) {
        const double k = gp->value[f] * inv_std[f];
        if (train) {
          gx.at(i, f) += k * (gy.at(i, f) - inv_b * sum_g[f] - inv_b * xhat.at(i, f) * sum_gx[f]);
        } else {
          gx.at(i, f) += k * gy.at(i, f);
        }
      }
  };
  return n;
}

// Inverted dropout: survivors are scaled by 1/(1-rate). Identity outside training.
template <class Rng>
Var dropout(const Var& x, double rate, Rng& rng, bool train, std::string label = "dropout") {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) return x;
  Tensor mask(x->value.shape(), 0.0);
  std::bernoulli_distribution keep(1.0 - rate);
  const double k = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = keep(rng) ? k : 0.0;
  Tensor y = x->value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  auto n = make_node(std::move(y), {x}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xp = x.get(), mask = std::move(mask)] {
    if (!xp->requires_grad) return;
    auto& g = xp->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self->grad[i];
  };
  return n;
}

}  // namespace eqlift::nn
