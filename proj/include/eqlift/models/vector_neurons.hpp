// SPDX-License-Identifier: Apache-2.0
#pragma once

// Vector-neuron layers. A feature is a [B, C, D] tensor: per sample, C
// channels each holding one D-dimensional vector (D = 2 for image-plane
// features, 3 for lifted ones). Rotations act by right-multiplying every
// channel vector by R^T; all layers here commute with that action (the
// invariant features are unchanged by it).

#include "eqlift/nn/ops.hpp"

namespace eqlift::models {

using nn::Tensor;
using nn::Var;

namespace detail {
inline void require_feature(const Tensor& t, const std::string& op) {
  if (t.rank() != 3) throw InvalidArgument(op + ": expected [B, C, D] feature, got " + nn::shape_str(t.shape()));
}
}  // namespace detail

// Channel mixing: out[b] = W * V[b] for W [C_out, C_in]. No bias term.
inline Var vn_linear(const Var& v, const Var& w, std::string label = "vn_linear") {
  const Tensor& vv = v->value;
  const Tensor& wv = w->value;
  detail::require_feature(vv, label);
  if (wv.rank() != 2 || wv.dim(1) != vv.dim(1)) {
    throw InvalidArgument(label + ": weight " + nn::shape_str(wv.shape()) + " does not match feature " +
                          nn::shape_str(vv.shape()));
  }
  const std::size_t batch = vv.dim(0), cin = vv.dim(1), dim = vv.dim(2), cout = wv.dim(0);
  Tensor y({batch, cout, dim});
  const auto wm = nn::detail::as_matrix(wv, cout, cin);
  for (std::size_t b = 0; b < batch; ++b) {
    nn::MatMap(y.data() + b * cout * dim, cout, dim).noalias() =
        wm * nn::ConstMatMap(vv.data() + b * cin * dim, cin, dim);
  }
  auto n = nn::make_node(std::move(y), {v, w}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), vp = v.get(), wp = w.get(), batch, cin, cout, dim] {
    const auto wm = nn::detail::as_matrix(wp->value, cout, cin);
    for (std::size_t b = 0; b < batch; ++b) {
      const nn::ConstMatMap gy(self->grad.data() + b * cout * dim, cout, dim);
      if (vp->requires_grad) {
        nn::MatMap(vp->grad_buffer().data() + b * cin * dim, cin, dim).noalias() += wm.transpose() * gy;
      }
      if (wp->requires_grad) {
        nn::detail::as_matrix(wp->grad_buffer(), cout, cin).noalias() +=
            gy * nn::ConstMatMap(vp->value.data() + b * cin * dim, cin, dim).transpose();
      }
    }
  };
  return n;
}

inline constexpr double kVnEpsilon = 1e-8;

// Projection ReLU: per channel, keep q when <q,k> >= 0, otherwise remove the
// component of q along k.
inline Var vn_project(const Var& q, const Var& k, std::string label = "vn_project") {
  nn::detail::require_same_shape(q->value, k->value, "vn_project");
  detail::require_feature(q->value, label);
  const std::size_t dim = q->value.dim(2);
  const std::size_t vectors = q->value.size() / dim;
  Tensor y = q->value;
  for (std::size_t i = 0; i < vectors; ++i) {
    const double* qi = q->value.data() + i * dim;
    const double* ki = k->value.data() + i * dim;
    double dot = 0.0, kk = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      dot += qi[d] * ki[d];
      kk += ki[d] * ki[d];
    }
    if (dot >= 0.0) continue;
    const double s = dot / (kk + kVnEpsilon);
    for (std::size_t d = 0; d < dim; ++d) y[i * dim + d] -= s * ki[d];
  }
  auto n = nn::make_node(std::move(y), {q, k}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), qp = q.get(), kp = k.get(), dim, vectors] {
    for (std::size_t i = 0; i < vectors; ++i) {
      const double* qi = qp->value.data() + i * dim;
      const double* ki = kp->value.data() + i * dim;
      const double* gi = self->grad.data() + i * dim;
      double dot = 0.0, kk = 0.0, gk = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dot += qi[d] * ki[d];
        kk += ki[d] * ki[d];
        gk += gi[d] * ki[d];
      }
      if (dot >= 0.0) {
        if (qp->requires_grad) {
          for (std::size_t d = 0; d < dim; ++d) qp->grad_buffer()[i * dim + d] += gi[d];
        }
        continue;
      }
      // out = q - s k, s = <q,k> / n, n = |k|^2 + eps
      const double nrm = kk + kVnEpsilon;
      const double s = dot / nrm;
      if (qp->requires_grad) {
        auto& g = qp->grad_buffer();
        for (std::size_t d = 0; d < dim; ++d) g[i * dim + d] += gi[d] - gk * ki[d] / nrm;
      }
      if (kp->requires_grad) {
        auto& g = kp->grad_buffer();
        for (std::size_t d = 0; d < dim; ++d) {
          const double ds_dk = qi[d] / nrm - 2.0 * dot * ki[d] / (nrm * nrm);
          g[i * dim + d] += -s * gi[d] - gk * ds_dk;
        }
      }
    }
  };
  return n;
}

// Direction channels k = W_dir * V, then the projection ReLU.
inline Var vn_nonlinearity(const Var& v, const Var& direction_weight, std::string label = "vn_relu") {
  const auto k = vn_linear(v, direction_weight, label + ".direction");
  return vn_project(v, k, std::move(label));
}

inline std::size_t gram_size(std::size_t channels) { return channels * (channels + 1) / 2; }

// Upper triangle (row-major, diagonal included) of the per-sample Gram matrix
// V V^T: [B, C, D] -> [B, C(C+1)/2]. Invariant under the rotation action.
inline Var invariant_features(const Var& v, std::string label = "vn_invariant") {
  detail::require_feature(v->value, label);
  const std::size_t batch = v->value.dim(0), ch = v->value.dim(1), dim = v->value.dim(2);
  const std::size_t m = gram_size(ch);
  Tensor y({batch, m});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* vb = v->value.data() + b * ch * dim;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < ch; ++i)
      for (std::size_t j = i; j < ch; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) dot += vb[i * dim + d] * vb[j * dim + d];
        y.at(b, idx++) = dot;
      }
  }
  auto n = nn::make_node(std::move(y), {v}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), vp = v.get(), batch, ch, dim, m] {
    if (!vp->requires_grad) return;
    auto& g = vp->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b) {
      const double* vb = vp->value.data() + b * ch * dim;
      double* gb = g.data() + b * ch * dim;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < ch; ++i)
        for (std::size_t j = i; j < ch; ++j) {
          const double gy = self->grad[b * m + idx++];
          for (std::size_t d = 0; d < dim; ++d) {
            gb[i * dim + d] += gy * vb[j * dim + d];
            gb[j * dim + d] += gy * vb[i * dim + d];
          }
        }
    }
  };
  return n;
}

// Joins per-joint xy [B, N, 2] and depth [B, N] into [B, N, 3].
inline Var assemble_pose(const Var& xy, const Var& z, std::string label = "assemble_pose") {
  const Tensor& xyv = xy->value;
  const Tensor& zv = z->value;
  if (xyv.rank() != 3 || xyv.dim(2) != 2 || zv.rank() != 2 || zv.dim(0) != xyv.dim(0) ||
      zv.dim(1) != xyv.dim(1)) {
    throw InvalidArgument(label + ": cannot join " + nn::shape_str(xyv.shape()) + " with " +
                          nn::shape_str(zv.shape()));
  }
  const std::size_t rows = xyv.dim(0) * xyv.dim(1);
  Tensor y({xyv.dim(0), xyv.dim(1), 3});
  for (std::size_t r = 0; r < rows; ++r) {
    y[3 * r] = xyv[2 * r];
    y[3 * r + 1] = xyv[2 * r + 1];
    y[3 * r + 2] = zv[r];
  }
  auto n = nn::make_node(std::move(y), {xy, z}, std::move(label));
  if (n->requires_grad) n->backward_fn = [self = n.get(), xyp = xy.get(), zp = z.get(), rows] {
    for (std::size_t r = 0; r < rows; ++r) {
      if (xyp->requires_grad) {
        xyp->grad_buffer()[2 * r] += self->grad[3 * r];
        xyp->grad_buffer()[2 * r + 1] += self->grad[3 * r + 1];
      }
      if (zp->requires_grad) zp->grad_buffer()[r] += self->grad[3 * r + 2];
    }
  };
  return n;
}

}  // namespace eqlift::models
