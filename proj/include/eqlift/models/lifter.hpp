// SPDX-License-Identifier: Apache-2.0
#pragma once

// The three lifter families.
//
//   vanilla            residual MLP on the flattened, dataset-standardized
//                      2N input vector, predicting the flattened 3N pose.
//   fully_equivariant  vector-neuron stack on the per-pose centered input;
//                      xy from a VN head, depth from a scalar MLP over the
//                      Gram invariants of the last VN layer. Satisfies
//                      f(X R^T) = f(X) blockdiag(R^T, 1) for any weights.
//   hybrid             xy from the VN stack, depth from a residual MLP fed
//                      either the standardized input (parallel) or the
//                      flattened first VN layer (first_layer_features).
//
// Networks predict targets divided by a scalar target scale; predict()
// returns millimetres.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eqlift/geometry.hpp"
#include "eqlift/models/vector_neurons.hpp"
#include "eqlift/nn/ops.hpp"
#include "eqlift/nn/optim.hpp"

namespace eqlift::models {

enum class ModelKind { vanilla, fully_equivariant, hybrid };
enum class HybridMode { parallel, first_layer_features };
// native2d: 2D vector neurons plus an invariant depth head.
// lift3d: 3D vector neurons on the input extended by a fixed random third
// coordinate per joint, sampled once at construction.
enum class EquivariantConstruction { native2d, lift3d };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::vanilla: return "vanilla";
    case ModelKind::fully_equivariant: return "equi";
    case ModelKind::hybrid: return "hybrid";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "vanilla") return ModelKind::vanilla;
  if (s == "equi" || s == "fully_equivariant") return ModelKind::fully_equivariant;
  if (s == "hybrid") return ModelKind::hybrid;
  throw InvalidArgument("unknown model kind '" + s + "' (expected vanilla|equi|hybrid)");
}

inline std::string to_string(HybridMode m) {
  return m == HybridMode::parallel ? "parallel" : "first-layer";
}

inline HybridMode parse_hybrid_mode(const std::string& s) {
  if (s == "parallel") return HybridMode::parallel;
  if (s == "first-layer" || s == "first_layer_features") return HybridMode::first_layer_features;
  throw InvalidArgument("unknown hybrid mode '" + s + "' (expected parallel|first-layer)");
}

inline std::string to_string(EquivariantConstruction c) {
  return c == EquivariantConstruction::native2d ? "native2d" : "lift3d";
}

inline EquivariantConstruction parse_construction(const std::string& s) {
  if (s == "native2d") return EquivariantConstruction::native2d;
  if (s == "lift3d") return EquivariantConstruction::lift3d;
  throw InvalidArgument("unknown equivariant construction '" + s + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::vanilla;
  HybridMode hybrid_mode = HybridMode::parallel;
  EquivariantConstruction construction = EquivariantConstruction::native2d;
  int joints = 17;
  int width = 128;        // residual MLP width
  int blocks = 2;         // residual blocks
  int vn_channels = 32;
  int vn_layers = 3;
  int zhead_width = 112;  // invariant depth head
  double dropout_rate = 0.2;
  StandardizationMode standardization = StandardizationMode::isotropic;
  bool zero_init_output = false;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (joints < 2) throw InvalidArgument("model needs at least 2 joints");
    if (width < 1 || blocks < 0 || vn_channels < 1 || vn_layers < 1 || zhead_width < 1) {
      throw InvalidArgument("model sizes must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
    if (kind != ModelKind::vanilla && standardization != StandardizationMode::isotropic) {
      throw InvalidArgument("per-coordinate standardization is only available for the vanilla model");
    }
  }
};

// Desk-scale presets with parameter counts matched to within 20%.
inline ModelConfig preset(ModelKind kind, int joints = 17) {
  ModelConfig c;
  c.kind = kind;
  c.joints = joints;
  return c;
}

inline ModelConfig lift3d_preset(int joints = 17) {
  ModelConfig c = preset(ModelKind::fully_equivariant, joints);
  c.construction = EquivariantConstruction::lift3d;
  c.vn_channels = 128;
  return c;
}

// Input/output scaling fitted on the training split.
struct Normalization {
  StandardizationStats input;   // vanilla branch
  double centered_scale = 1.0;  // RMS of per-pose centered input, VN branch
  double target_scale = 1.0;    // mm per network output unit
};

enum class Mode { train, eval };

class LifterModel {
public:
  explicit LifterModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.init_seed);
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  int joints() const { return cfg_.joints; }

  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  std::map<std::string, nn::BatchNormState>& batch_norms() { return bn_; }
  const std::map<std::string, nn::BatchNormState>& batch_norms() const { return bn_; }
  Normalization& normalization() { return norm_; }
  const Normalization& normalization() const { return norm_; }
  std::vector<double>& third_coordinate() { return third_coord_; }
  const std::vector<double>& third_coordinate() const { return third_coord_; }

  std::size_t parameter_count() const { return nn::count_parameters(params_); }

  // Forward pass on raw inputs [B, N, 2] (same units as the dataset). Returns
  // normalized predictions [B, N, 3]. `rng` drives dropout in train mode.
  Var forward(const Tensor& input, Mode mode, std::mt19937_64* rng = nullptr) {
    check_input(input);
    if (mode == Mode::train && !rng && cfg_.dropout_rate > 0.0 && cfg_.kind != ModelKind::fully_equivariant) {
      throw InvalidArgument("training-mode forward needs an rng for dropout");
    }
    Pass pass{mode == Mode::train, rng};
    const std::size_t batch = input.dim(0), n = static_cast<std::size_t>(cfg_.joints);
    switch (cfg_.kind) {
      case ModelKind::vanilla: {
        auto out = residual_mlp("vanilla", nn::constant(standardized_flat(input)), pass);
        return nn::reshape(out, {batch, n, 3}, "vanilla.reshape");
      }
      case ModelKind::fully_equivariant: {
        if (cfg_.construction == EquivariantConstruction::lift3d) {
          auto layers = vn_stack(nn::constant(lifted_input(input)));
          return vn_linear(layers.back(), p("equi.head.weight"), "equi.head");
        }
        auto layers = vn_stack(nn::constant(centered_input(input)));
        auto xy = vn_linear(layers.back(), p("equi.head.weight"), "equi.head");
        auto h = invariant_features(layers.back(), "equi.invariants");
        h = nn::relu(nn::linear(h, p("zhead.l0.weight"), p("zhead.l0.bias"), "zhead.l0"));
        h = nn::relu(nn::linear(h, p("zhead.l1.weight"), p("zhead.l1.bias"), "zhead.l1"));
        auto z = nn::linear(h, p("zhead.out.weight"), p("zhead.out.bias"), "zhead.out");
        return assemble_pose(xy, z);
      }
      case ModelKind::hybrid: {
        auto layers = vn_stack(nn::constant(centered_input(input)));
        auto xy = vn_linear(layers.back(), p("equi.head.weight"), "equi.head");
        Var z_in = cfg_.hybrid_mode == HybridMode::parallel
                       ? nn::constant(standardized_flat(input))
                       : nn::reshape(layers.front(), {batch, layers.front()->value.dim(1) * 2}, "hybrid.flatten");
        auto z = residual_mlp("vanilla", z_in, pass);
        return assemble_pose(xy, z);
      }
    }
    throw InvalidArgument("unreachable model kind");
  }

  std::vector<Pose3D> predict_batch(std::span<const Pose2D> poses) {
    nn::NoGradGuard no_grad;
    std::vector<Pose3D> out;
    out.reserve(poses.size());
    constexpr std::size_t chunk = 1024;
    for (std::size_t start = 0; start < poses.size(); start += chunk) {
      const std::size_t count = std::min(chunk, poses.size() - start);
      const auto y = forward(pack_inputs(poses.subspan(start, count)), Mode::eval);
      const std::size_t n = static_cast<std::size_t>(cfg_.joints);
      for (std::size_t b = 0; b < count; ++b) {
        Eigen::MatrixX3d j(n, 3);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < 3; ++c) j(r, c) = y->value[(b * n + r) * 3 + c] * norm_.target_scale;
        out.emplace_back(std::move(j));
      }
    }
    return out;
  }

  Pose3D predict(const Pose2D& pose) { return predict_batch(std::span<const Pose2D>(&pose, 1)).front(); }

  // Stacks poses into a [B, N, 2] tensor, validating joint counts.
  Tensor pack_inputs(std::span<const Pose2D> poses) const {
    const std::size_t n = static_cast<std::size_t>(cfg_.joints);
    if (poses.empty()) throw InvalidArgument("empty input batch");
    Tensor t({poses.size(), n, 2});
    for (std::size_t b = 0; b < poses.size(); ++b) {
      if (poses[b].size() != cfg_.joints) {
        throw InvalidArgument("model expects " + std::to_string(cfg_.joints) + " joints, got " +
                              std::to_string(poses[b].size()));
      }
      for (std::size_t r = 0; r < n; ++r) {
        t[(b * n + r) * 2] = poses[b].joints(r, 0);
        t[(b * n + r) * 2 + 1] = poses[b].joints(r, 1);
      }
    }
    return t;
  }

private:
  struct Pass {
    bool train;
    std::mt19937_64* rng;
  };

  const Var& p(const std::string& name) const { return params_.at(name).node; }

  void check_input(const Tensor& input) const {
    if (input.rank() != 3 || input.dim(1) != static_cast<std::size_t>(cfg_.joints) || input.dim(2) != 2) {
      throw InvalidArgument("model expects input [B, " + std::to_string(cfg_.joints) + ", 2], got " +
                            nn::shape_str(input.shape()));
    }
  }

  void add_weight(const std::string& name, std::size_t out, std::size_t in, double gain, std::mt19937_64& rng,
                  bool zero = false) {
    // Kaiming-uniform on fan-in: bound = gain * sqrt(3 / fan_in).
    Tensor w({out, in}, 0.0);
    if (!zero) {
      const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : w.values()) v = u(rng);
    }
    params_.emplace(name, nn::Parameter(std::move(w), name));
  }

  void add_vector(const std::string& name, std::size_t size, double fill) {
    params_.emplace(name, nn::Parameter(Tensor({size}, fill), name));
  }

  void add_linear(const std::string& name, std::size_t out, std::size_t in, double gain, std::mt19937_64& rng,
                  bool zero = false) {
    add_weight(name + ".weight", out, in, gain, rng, zero);
    add_vector(name + ".bias", out, 0.0);
  }

  void add_batch_norm(const std::string& name, std::size_t features) {
    add_vector(name + ".gamma", features, 1.0);
    add_vector(name + ".beta", features, 0.0);
    bn_.emplace(name, nn::BatchNormState(features));
  }

  void build(std::mt19937_64& rng) {
    const double relu_gain = std::sqrt(2.0);
    const std::size_t n = static_cast<std::size_t>(cfg_.joints);
    const std::size_t w = static_cast<std::size_t>(cfg_.width);
    const std::size_t c = static_cast<std::size_t>(cfg_.vn_channels);
    const bool zero_out = cfg_.zero_init_output;

    auto build_mlp = [&](std::size_t in_dim, std::size_t out_dim) {
      add_linear("vanilla.in", w, in_dim, relu_gain, rng);
      add_batch_norm("vanilla.in.bn", w);
      for (int b = 0; b < cfg_.blocks; ++b) {
        for (int l = 0; l < 2; ++l) {
          const std::string name = "vanilla.block" + std::to_string(b) + ".l" + std::to_string(l);
          add_linear(name, w, w, relu_gain, rng);
          add_batch_norm(name + ".bn", w);
        }
      }
      add_linear("vanilla.out", out_dim, w, 1.0, rng, zero_out);
    };

    auto build_vn = [&](std::size_t in_channels) {
      std::size_t prev = in_channels;
      for (int l = 0; l < cfg_.vn_layers; ++l) {
        const std::string name = "equi.vn" + std::to_string(l);
        add_weight(name + ".weight", c, prev, 1.0, rng);
        add_weight(name + ".direction", c, c, 1.0, rng);
        prev = c;
      }
      add_weight("equi.head.weight", n, c, 1.0, rng, zero_out);
    };

    switch (cfg_.kind) {
      case ModelKind::vanilla:
        build_mlp(2 * n, 3 * n);
        break;
      case ModelKind::fully_equivariant:
        build_vn(n);
        if (cfg_.construction == EquivariantConstruction::lift3d) {
          std::normal_distribution<double> g(0.0, 1.0);
          third_coord_.resize(n);
          for (auto& v : third_coord_) v = g(rng);
        } else {
          const std::size_t zw = static_cast<std::size_t>(cfg_.zhead_width);
          add_linear("zhead.l0", zw, gram_size(c), relu_gain, rng);
          add_linear("zhead.l1", zw, zw, relu_gain, rng);
          add_linear("zhead.out", n, zw, 1.0, rng, zero_out);
        }
        break;
      case ModelKind::hybrid:
        build_vn(n);
        build_mlp(cfg_.hybrid_mode == HybridMode::parallel ? 2 * n : 2 * c, n);
        break;
    }
  }

  // linear -> batch-norm -> relu -> dropout
  Var dense_unit(const std::string& name, const Var& x, const Pass& pass) {
    auto h = nn::linear(x, p(name + ".weight"), p(name + ".bias"), name);
    h = nn::batch_norm(h, p(name + ".bn.gamma"), p(name + ".bn.beta"), bn_.at(name + ".bn"), pass.train, name + ".bn");
    h = nn::relu(h, name + ".relu");
    if (pass.train && cfg_.dropout_rate > 0.0) h = nn::dropout(h, cfg_.dropout_rate, *pass.rng, true, name + ".dropout");
    return h;
  }

  Var residual_mlp(const std::string& prefix, const Var& x, const Pass& pass) {
    auto h = dense_unit(prefix + ".in", x, pass);
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string name = prefix + ".block" + std::to_string(b);
      auto y = dense_unit(name + ".l0", h, pass);
      y = dense_unit(name + ".l1", y, pass);
      h = nn::add(h, y, name + ".residual");
    }
    return nn::linear(h, p(prefix + ".out.weight"), p(prefix + ".out.bias"), prefix + ".out");
  }

  std::vector<Var> vn_stack(const Var& x) {
    std::vector<Var> outs;
    Var h = x;
    for (int l = 0; l < cfg_.vn_layers; ++l) {
      const std::string name = "equi.vn" + std::to_string(l);
      h = vn_linear(h, p(name + ".weight"), name);
      h = vn_nonlinearity(h, p(name + ".direction"), name + ".relu");
      outs.push_back(h);
    }
    return outs;
  }

  Tensor standardized_flat(const Tensor& input) const {
    const std::size_t batch = input.dim(0), n = input.dim(1);
    Tensor t({batch, 2 * n});
    const auto& s = norm_.input;
    for (std::size_t i = 0; i < batch * n; ++i) {
      t[2 * i] = (input[2 * i] - s.center.x()) / s.scale.x();
      t[2 * i + 1] = (input[2 * i + 1] - s.center.y()) / s.scale.y();
    }
    return t;
  }

  // Per-pose centering and isotropic scaling; commutes with rotations.
  Tensor centered_input(const Tensor& input) const {
    const std::size_t batch = input.dim(0), n = input.dim(1);
    Tensor t = input;
    for (std::size_t b = 0; b < batch; ++b) {
      double mx = 0.0, my = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        mx += input[(b * n + r) * 2];
        my += input[(b * n + r) * 2 + 1];
      }
      mx /= static_cast<double>(n);
      my /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        t[(b * n + r) * 2] = (input[(b * n + r) * 2] - mx) / norm_.centered_scale;
        t[(b * n + r) * 2 + 1] = (input[(b * n + r) * 2 + 1] - my) / norm_.centered_scale;
      }
    }
    return t;
  }

  Tensor lifted_input(const Tensor& input) const {
    const Tensor c = centered_input(input);
    const std::size_t batch = input.dim(0), n = input.dim(1);
    Tensor t({batch, n, 3});
    for (std::size_t i = 0; i < batch * n; ++i) {
      t[3 * i] = c[2 * i];
      t[3 * i + 1] = c[2 * i + 1];
      t[3 * i + 2] = third_coord_[i % n];
    }
    return t;
  }

  ModelConfig cfg_;
  nn::ParameterSet params_;
  std::map<std::string, nn::BatchNormState> bn_;
  Normalization norm_;
  std::vector<double> third_coord_;
};

inline std::size_t count_parameters(const LifterModel& model) { return model.parameter_count(); }

// Fits input/target scaling on training pairs.
inline Normalization fit_normalization(std::span<const Pose2D> inputs, std::span<const Pose3D> targets,
                                       StandardizationMode mode) {
  if (inputs.empty() || targets.size() != inputs.size()) {
    throw InvalidArgument("normalization needs matching, non-empty input/target lists");
  }
  Normalization norm;
  norm.input = compute_stats(inputs, mode);
  double sq = 0.0, count = 0.0;
  for (const auto& x : inputs) {
    const Eigen::RowVector2d mean = x.joints.colwise().mean();
    sq += (x.joints.rowwise() - mean).squaredNorm();
    count += 2.0 * static_cast<double>(x.size());
  }
  norm.centered_scale = std::sqrt(sq / count);
  double tsq = 0.0, tcount = 0.0;
  for (const auto& y : targets) {
    tsq += y.joints.squaredNorm();
    tcount += 3.0 * static_cast<double>(y.size());
  }
  norm.target_scale = std::sqrt(tsq / tcount);
  if (!(norm.centered_scale > 0.0) || !(norm.target_scale > 0.0)) {
    throw DegenerateData("zero variance in training poses");
  }
  return norm;
}

}  // namespace eqlift::models
