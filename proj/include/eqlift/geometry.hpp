// SPDX-License-Identifier: Apache-2.0
#pragma once

// Rotation groups, pose containers, standardization and Procrustes alignment.
//
// Convention: poses are stored one joint per row, and a rotation R acts on a
// pose by right-multiplication with R^T (p' = p R^T). Every module uses this.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "eqlift/errors.hpp"

namespace eqlift {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

class Rotation2 {
public:
  Rotation2() = default;

  static Rotation2 from_angle(double theta) {
    if (!std::isfinite(theta)) {
      throw InvalidArgument("rotation angle must be finite");
    }
    return Rotation2(std::cos(theta), std::sin(theta));
  }

  double cos_theta() const { return c_; }
  double sin_theta() const { return s_; }
  double angle() const { return std::atan2(s_, c_); }

  Mat2 matrix() const {
    Mat2 m;
    m << c_, -s_, s_, c_;
    return m;
  }

  Rotation2 inverse() const { return Rotation2(c_, -s_); }

  friend Rotation2 operator*(const Rotation2& a, const Rotation2& b) {
    return Rotation2(a.c_ * b.c_ - a.s_ * b.s_, a.s_ * b.c_ + a.c_ * b.s_);
  }

private:
  Rotation2(double c, double s) : c_(c), s_(s) {}

  double c_ = 1.0;
  double s_ = 0.0;
};

inline Rotation2 rotation2_from_angle(double theta) { return Rotation2::from_angle(theta); }

class Rotation3 {
public:
  Rotation3() : m_(Mat3::Identity()) {}

  // Checked constructor: rejects matrices that are not proper rotations.
  static Rotation3 from_matrix(const Mat3& m, double tol = 1e-9) {
    if (!m.allFinite()) throw InvalidArgument("rotation matrix must be finite");
    if ((m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
        std::abs(m.determinant() - 1.0) > tol) {
      throw InvalidArgument("matrix is not a proper rotation");
    }
    Rotation3 r;
    r.m_ = m;
    return r;
  }

  const Mat3& matrix() const { return m_; }

  friend Rotation3 operator*(const Rotation3& a, const Rotation3& b) {
    Rotation3 r;
    r.m_ = a.m_ * b.m_;
    return r;
  }

private:
  Mat3 m_;
};

// blockdiag(R, 1): rotation about the optical (z) axis, depth untouched.
inline Rotation3 embed_so2_in_so3(const Rotation2& r) {
  Mat3 m = Mat3::Identity();
  m.topLeftCorner<2, 2>() = r.matrix();
  return Rotation3::from_matrix(m);
}

struct Pose2D {
  Eigen::MatrixX2d joints;

  Pose2D() = default;
  explicit Pose2D(Eigen::MatrixX2d j) : joints(std::move(j)) {}

  Eigen::Index size() const { return joints.rows(); }
  bool valid() const { return joints.rows() >= 2 && joints.allFinite(); }
};

struct Pose3D {
  Eigen::MatrixX3d joints;

  Pose3D() = default;
  explicit Pose3D(Eigen::MatrixX3d j) : joints(std::move(j)) {}

  Eigen::Index size() const { return joints.rows(); }
  bool valid() const { return joints.allFinite(); }
};

inline void require_valid(const Pose2D& pose) {
  if (!pose.valid()) throw InvalidArgument("2D pose needs >= 2 finite joints");
}

inline Pose2D apply_rotation2(const Pose2D& pose, const Rotation2& r) {
  require_valid(pose);
  return Pose2D(pose.joints * r.matrix().transpose());
}

inline Pose3D apply_rotation3(const Pose3D& pose, const Rotation3& r) {
  if (!pose.valid()) throw InvalidArgument("3D pose must be finite");
  return Pose3D(pose.joints * r.matrix().transpose());
}

inline Pose3D root_align(const Pose3D& pose, Eigen::Index root_index) {
  if (root_index < 0 || root_index >= pose.size()) {
    throw InvalidArgument("root index " + std::to_string(root_index) + " out of range");
  }
  const Eigen::RowVector3d root = pose.joints.row(root_index);
  Pose3D out(pose.joints.rowwise() - root);
  out.joints.row(root_index).setZero();
  return out;
}

enum class StandardizationMode { isotropic, per_coordinate };

struct StandardizationStats {
  Vec2 center = Vec2::Zero();
  // Isotropic mode uses scale.x() == scale.y().
  Vec2 scale = Vec2::Ones();
  StandardizationMode mode = StandardizationMode::isotropic;

  double isotropic_scale() const { return scale.x(); }
};

inline StandardizationStats compute_stats(std::span<const Pose2D> poses,
                                          StandardizationMode mode = StandardizationMode::isotropic) {
  if (poses.empty()) throw InvalidArgument("cannot compute statistics of an empty pose list");
  Vec2 sum = Vec2::Zero();
  double count = 0.0;
  for (const auto& p : poses) {
    require_valid(p);
    sum += p.joints.colwise().sum().transpose();
    count += static_cast<double>(p.size());
  }
  StandardizationStats stats;
  stats.mode = mode;
  stats.center = sum / count;

  Vec2 sq = Vec2::Zero();
  for (const auto& p : poses) {
    const Eigen::MatrixX2d centered = p.joints.rowwise() - stats.center.transpose();
    sq += centered.array().square().colwise().sum().matrix().transpose();
  }
  if (mode == StandardizationMode::isotropic) {
    // RMS distance of centered joints from the center.
    const double s = std::sqrt((sq.x() + sq.y()) / count);
    if (!(s > 0.0)) throw DegenerateData("zero variance in pose coordinates");
    stats.scale = Vec2::Constant(s);
  } else {
    const Vec2 s = (sq / count).cwiseSqrt();
    if (!(s.x() > 0.0) || !(s.y() > 0.0)) {
      throw DegenerateData("zero variance along a pose coordinate");
    }
    stats.scale = s;
  }
  return stats;
}

inline Pose2D standardize(const Pose2D& pose, const StandardizationStats& stats) {
  Eigen::MatrixX2d out = pose.joints.rowwise() - stats.center.transpose();
  out.col(0) /= stats.scale.x();
  out.col(1) /= stats.scale.y();
  return Pose2D(std::move(out));
}

inline Pose2D destandardize(const Pose2D& pose, const StandardizationStats& stats) {
  Eigen::MatrixX2d out = pose.joints;
  out.col(0) *= stats.scale.x();
  out.col(1) *= stats.scale.y();
  out.rowwise() += stats.center.transpose();
  return Pose2D(std::move(out));
}

struct ProcrustesResult {
  double scale = 1.0;
  Rotation3 rotation;
  Vec3 translation = Vec3::Zero();
  Pose3D aligned;
};

// Similarity transform minimizing sum_i |s * source_i R^T + t - target_i|^2
// (Umeyama: SVD of the cross-covariance, determinant sign folded into the
// smallest singular direction so the rotation is proper).
inline ProcrustesResult procrustes_align(const Pose3D& source, const Pose3D& target) {
  if (source.size() != target.size()) {
    throw InvalidArgument("procrustes: joint count mismatch");
  }
  if (source.size() < 3) throw InvalidArgument("procrustes needs at least 3 joints");
  if (!source.valid() || !target.valid()) throw InvalidArgument("procrustes: non-finite pose");

  const Eigen::RowVector3d mu_s = source.joints.colwise().mean();
  const Eigen::RowVector3d mu_t = target.joints.colwise().mean();
  const Eigen::MatrixX3d a = source.joints.rowwise() - mu_s;
  const Eigen::MatrixX3d b = target.joints.rowwise() - mu_t;

  const double var_s = a.squaredNorm();
  const Eigen::JacobiSVD<Eigen::MatrixX3d> rank_check(a);
  const Vec3 sv = rank_check.singularValues();
  if (!(var_s > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw DegenerateData("procrustes: source pose is degenerate (rank < 2)");
  }

  // Column convention: target_c ~ s * R * source_c, so H = sum b a^T.
  const Mat3 h = b.transpose() * a;
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 d = Vec3::Ones();
  if ((u * v.transpose()).determinant() < 0.0) d(2) = -1.0;
  const Mat3 r = u * d.asDiagonal() * v.transpose();
  const double s = svd.singularValues().dot(d) / var_s;

  ProcrustesResult res;
  res.scale = s;
  res.rotation = Rotation3::from_matrix(r, 1e-8);
  res.translation = (mu_t - s * mu_s * r.transpose()).transpose();
  Eigen::MatrixX3d aligned = s * source.joints * r.transpose();
  aligned.rowwise() += res.translation.transpose();
  res.aligned = Pose3D(std::move(aligned));
  return res;
}

}  // namespace eqlift
