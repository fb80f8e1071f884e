// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eqlift/data/dataset.hpp"
#include "eqlift/geometry.hpp"
#include "eqlift/models/lifter.hpp"

namespace eqlift::metrics {

// Mean per-joint Euclidean distance (Protocol 1).
inline double mpjpe(const Pose3D& gt, const Pose3D& pred) {
  if (gt.size() != pred.size()) {
    throw InvalidArgument("mpjpe: joint count mismatch (" + std::to_string(gt.size()) + " vs " +
                          std::to_string(pred.size()) + ")");
  }
  if (gt.size() == 0) throw InvalidArgument("mpjpe: empty pose");
  return (gt.joints - pred.joints).rowwise().norm().mean();
}

namespace detail {

// Optimal similarity fit of a collapsed (collinear or single-point) prediction:
// s R maps its one direction to any vector c, so the fit is least squares in c.
inline Pose3D align_collinear(const Pose3D& pred, const Pose3D& gt) {
  const Eigen::RowVector3d mu_p = pred.joints.colwise().mean();
  const Eigen::RowVector3d mu_t = gt.joints.colwise().mean();
  const Eigen::MatrixX3d a = pred.joints.rowwise() - mu_p;
  const Eigen::MatrixX3d b = gt.joints.rowwise() - mu_t;
  Eigen::MatrixX3d out = Eigen::MatrixX3d(gt.size(), 3).rowwise() = mu_t;
  if (a.squaredNorm() > 0.0) {
    const Eigen::JacobiSVD<Eigen::MatrixX3d> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd u = a * svd.matrixV().col(0);
    const Eigen::RowVector3d c = (b.transpose() * u).transpose() / u.squaredNorm();
    out += u * c;
  }
  return Pose3D(std::move(out));
}

}  // namespace detail

// MPJPE after similarity alignment of pred onto gt (Protocol 2).
inline double pa_mpjpe(const Pose3D& gt, const Pose3D& pred) {
  try {
    return mpjpe(gt, procrustes_align(pred, gt).aligned);
  } catch (const DegenerateData&) {
    return mpjpe(gt, detail::align_collinear(pred, gt));
  }
}

enum class ColumnMask { all, xy, z };

// Per-joint error restricted to the chosen output columns.
inline double masked_mpjpe(const Pose3D& a, const Pose3D& b, ColumnMask mask) {
  switch (mask) {
    case ColumnMask::all: return mpjpe(a, b);
    case ColumnMask::xy:
      if (a.size() != b.size()) throw InvalidArgument("joint count mismatch");
      return (a.joints.leftCols<2>() - b.joints.leftCols<2>()).rowwise().norm().mean();
    case ColumnMask::z:
      if (a.size() != b.size()) throw InvalidArgument("joint count mismatch");
      return (a.joints.col(2) - b.joints.col(2)).cwiseAbs().mean();
  }
  return 0.0;
}

inline double rms(const Pose3D& p) {
  return std::sqrt(p.joints.squaredNorm() / static_cast<double>(p.joints.size()));
}

// mpjpe( f(X R^T), f(X) blockdiag(R^T, 1) ), i.e. the violation of geometric
// consistency at one input and angle. `f` maps Pose2D -> Pose3D.
template <class Lifter>
double equivariance_error(Lifter&& f, const Pose2D& x, double theta, ColumnMask mask = ColumnMask::all) {
  const auto r = rotation2_from_angle(theta);
  const Pose3D rotated_out = f(apply_rotation2(x, r));
  const Pose3D expected = apply_rotation3(f(x), embed_so2_in_so3(r));
  return masked_mpjpe(rotated_out, expected, mask);
}

inline double equivariance_error(models::LifterModel& model, const Pose2D& x, double theta,
                                 ColumnMask mask = ColumnMask::all) {
  return equivariance_error([&](const Pose2D& p) { return model.predict(p); }, x, theta, mask);
}

struct MetricReport {
  std::string split;
  std::size_t sample_count = 0;
  double protocol1_mean = 0.0;
  double protocol2_mean = 0.0;
  std::optional<double> equivariance_error_mean;
  // Filled by aggregate(): one entry per seed, std only for >= 2 seeds.
  std::vector<double> per_seed_protocol1;
  std::vector<double> per_seed_protocol2;
  std::vector<double> per_seed_equivariance;
  std::optional<double> protocol1_std;
  std::optional<double> protocol2_std;
  std::optional<double> equivariance_error_std;
};

struct EvalOptions {
  bool protocol2 = true;
  bool equivariance = false;
  std::uint64_t equivariance_seed = 0;
};

inline Pose3D root_aligned(const Pose3D& p) { return root_align(p, 0); }

// Predictions are root-aligned before both protocols.
inline MetricReport evaluate(models::LifterModel& model, const data::Dataset& ds, const EvalOptions& opt = {}) {
  if (ds.samples.empty()) throw InvalidArgument("cannot evaluate on an empty dataset");
  if (ds.meta.joints != model.joints()) {
    throw ValidationError("model expects " + std::to_string(model.joints()) + " joints, dataset '" + ds.meta.split +
                          "' has " + std::to_string(ds.meta.joints));
  }
  const auto inputs = ds.inputs();
  const auto preds = model.predict_batch(inputs);
  MetricReport rep;
  rep.split = ds.meta.split;
  rep.sample_count = ds.samples.size();
  double p1 = 0.0, p2 = 0.0, eq = 0.0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Pose3D pred = root_aligned(preds[i]);
    const Pose3D& gt = ds.samples[i].target3d;
    p1 += mpjpe(gt, pred);
    if (opt.protocol2) p2 += pa_mpjpe(gt, pred);
    if (opt.equivariance) {
      auto rng = data::stream_rng(opt.equivariance_seed, data::kRotateStream, i);
      const double theta = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      eq += equivariance_error(model, inputs[i], theta);
    }
  }
  const double n = static_cast<double>(ds.samples.size());
  rep.protocol1_mean = p1 / n;
  rep.protocol2_mean = opt.protocol2 ? p2 / n : 0.0;
  if (opt.equivariance) rep.equivariance_error_mean = eq / n;
  return rep;
}

struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;
};

// Mean and sample (n-1) standard deviation; std is absent for fewer than 2 values.
inline MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean_std of an empty list");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

// Combines per-seed reports on the same split.
inline MetricReport aggregate(std::span<const MetricReport> reports) {
  if (reports.empty()) throw InvalidArgument("aggregate needs at least one report");
  MetricReport out;
  out.split = reports.front().split;
  out.sample_count = reports.front().sample_count;
  bool all_eq = true;
  for (const auto& r : reports) {
    out.per_seed_protocol1.push_back(r.protocol1_mean);
    out.per_seed_protocol2.push_back(r.protocol2_mean);
    if (r.equivariance_error_mean) {
      out.per_seed_equivariance.push_back(*r.equivariance_error_mean);
    } else {
      all_eq = false;
    }
  }
  const auto p1 = mean_std(out.per_seed_protocol1);
  const auto p2 = mean_std(out.per_seed_protocol2);
  out.protocol1_mean = p1.mean;
  out.protocol1_std = p1.std;
  out.protocol2_mean = p2.mean;
  out.protocol2_std = p2.std;
  if (all_eq) {
    const auto eq = mean_std(out.per_seed_equivariance);
    out.equivariance_error_mean = eq.mean;
    out.equivariance_error_std = eq.std;
  } else {
    out.per_seed_equivariance.clear();
  }
  return out;
}

}  // namespace eqlift::metrics
