// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eqlift/geometry.hpp"

namespace eqlift::data {

struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Kinematic tree. Each joint carries the bone from its parent: a rest
// direction (unit vector in the parent's frame) and a length. Joint angles are
// local XYZ Euler angles applied to that bone; the root's angles give the
// global body orientation. Camera coordinates: x right, y down, z forward.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parent;  // root = -1, parents precede children
  std::vector<double> bone_length;
  std::vector<Vec3> rest_direction;
  std::vector<std::array<AngleRange, 3>> limits;

  std::size_t joint_count() const { return parent.size(); }

  void validate() const {
    const std::size_t n = parent.size();
    if (n < 2 || names.size() != n || bone_length.size() != n || rest_direction.size() != n || limits.size() != n) {
      throw InvalidArgument("skeleton arrays must share a joint count >= 2");
    }
    if (parent[0] != -1) throw InvalidArgument("joint 0 must be the root");
    for (std::size_t i = 1; i < n; ++i) {
      if (parent[i] < 0 || parent[i] >= static_cast<int>(i)) {
        throw InvalidArgument("skeleton parents must precede children and form a single tree");
      }
      if (!(bone_length[i] > 0.0)) throw InvalidArgument("bone lengths must be positive");
      if (std::abs(rest_direction[i].norm() - 1.0) > 1e-12) throw InvalidArgument("rest directions must be unit");
    }
    for (const auto& l : limits)
      for (const auto& r : l)
        if (!(r.lo <= r.hi)) throw InvalidArgument("angle range lo must not exceed hi");
  }

  // FNV-1a over a canonical text rendering of the skeleton.
  std::string hash() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < parent.size(); ++i) {
      os << names[i] << ':' << parent[i] << ':' << bone_length[i] << ':' << rest_direction[i].transpose() << ':';
      for (const auto& r : limits[i]) os << r.lo << ',' << r.hi << ';';
    }
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : os.str()) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
  }
};

namespace detail {
inline double deg(double d) { return d * std::numbers::pi / 180.0; }
inline std::array<AngleRange, 3> range_deg(double xlo, double xhi, double ylo, double yhi, double zlo, double zhi) {
  return {AngleRange{deg(xlo), deg(xhi)}, AngleRange{deg(ylo), deg(yhi)}, AngleRange{deg(zlo), deg(zhi)}};
}
}  // namespace detail

// 17-joint layout in the usual Human3.6M order with adult bone lengths (mm).
// Root and trunk limits keep the torso (pelvis to thorax) within 15 degrees
// of vertical while allowing any heading.
inline Skeleton h36m17_skeleton() {
  using detail::range_deg;
  const Vec3 up(0, -1, 0), down(0, 1, 0), left(1, 0, 0), right(-1, 0, 0);
  Skeleton s;
  auto add = [&](std::string name, int parent, double len, Vec3 dir, std::array<AngleRange, 3> lim) {
    s.names.push_back(std::move(name));
    s.parent.push_back(parent);
    s.bone_length.push_back(len);
    s.rest_direction.push_back(dir);
    s.limits.push_back(lim);
  };
  add("pelvis", -1, 0.0, Vec3::Zero(), range_deg(-7, 7, -180, 180, -7, 7));
  add("r_hip", 0, 130.0, right, range_deg(-5, 5, -10, 10, -5, 5));
  add("r_knee", 1, 450.0, down, range_deg(-90, 30, -20, 20, -10, 40));
  add("r_ankle", 2, 440.0, down, range_deg(0, 130, -10, 10, -5, 5));
  add("l_hip", 0, 130.0, left, range_deg(-5, 5, -10, 10, -5, 5));
  add("l_knee", 4, 450.0, down, range_deg(-90, 30, -20, 20, -40, 10));
  add("l_ankle", 5, 440.0, down, range_deg(0, 130, -10, 10, -5, 5));
  add("spine", 0, 230.0, up, range_deg(-2, 2, -30, 30, -2, 2));
  add("thorax", 7, 250.0, up, range_deg(-2, 2, -20, 20, -2, 2));
  add("neck", 8, 110.0, up, range_deg(-20, 30, -40, 40, -20, 20));
  add("head", 9, 115.0, up, range_deg(-20, 20, -20, 20, -10, 10));
  add("l_shoulder", 8, 150.0, left, range_deg(-10, 10, -10, 10, -10, 10));
  add("l_elbow", 11, 280.0, down, range_deg(-150, 50, -40, 40, -120, 10));
  add("l_wrist", 12, 250.0, down, range_deg(-140, 0, -10, 10, -10, 10));
  add("r_shoulder", 8, 150.0, right, range_deg(-10, 10, -10, 10, -10, 10));
  add("r_elbow", 14, 280.0, down, range_deg(-150, 50, -40, 40, -10, 120));
  add("r_wrist", 15, 250.0, down, range_deg(-140, 0, -10, 10, -10, 10));
  s.validate();
  return s;
}

inline Skeleton skeleton_preset(const std::string& name) {
  if (name == "h36m17") return h36m17_skeleton();
  throw InvalidArgument("unknown skeleton preset '" + name + "'");
}

// Local joint rotation from (x, y, z) angles, applied as Ry * Rx * Rz so the
// y (vertical) angle acts last: at the root it is a pure yaw and the x/z
// angles bound the tilt.
inline Mat3 joint_rotation(double ax, double ay, double az) {
  return (Eigen::AngleAxisd(ay, Vec3::UnitY()) * Eigen::AngleAxisd(ax, Vec3::UnitX()) *
          Eigen::AngleAxisd(az, Vec3::UnitZ()))
      .toRotationMatrix();
}

// Forward kinematics from given local angles ([joint][axis]); root at origin.
inline Pose3D forward_kinematics(const Skeleton& s, const std::vector<std::array<double, 3>>& angles) {
  const std::size_t n = s.joint_count();
  if (angles.size() != n) throw InvalidArgument("need one angle triple per joint");
  std::vector<Mat3> global(n);
  Eigen::MatrixX3d joints(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Mat3 local = joint_rotation(angles[i][0], angles[i][1], angles[i][2]);
    if (s.parent[i] < 0) {
      global[i] = local;
      joints.row(i).setZero();
      continue;
    }
    const auto p = static_cast<std::size_t>(s.parent[i]);
    global[i] = global[p] * local;
    joints.row(i) = joints.row(p) + (global[i] * (s.bone_length[i] * s.rest_direction[i])).transpose();
  }
  return Pose3D(std::move(joints));
}

// Joint angles drawn uniformly within the skeleton's limits.
template <class Rng>
Pose3D sample_pose(const Skeleton& s, Rng& rng) {
  std::vector<std::array<double, 3>> angles(s.joint_count());
  for (std::size_t i = 0; i < angles.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      const auto& r = s.limits[i][a];
      angles[i][a] = r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    }
  return forward_kinematics(s, angles);
}

}  // namespace eqlift::data
