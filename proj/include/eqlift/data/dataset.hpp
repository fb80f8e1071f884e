// SPDX-License-Identifier: Apache-2.0
#pragma once

// Paired 2D/3D samples, camera projection, rotation augmentation and the
// JSON-lines dataset format (metadata object on line 1, one sample per line).

#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "eqlift/data/skeleton.hpp"
#include "eqlift/geometry.hpp"

namespace eqlift::data {

enum class CameraMode { orthographic, perspective };

inline std::string to_string(CameraMode m) { return m == CameraMode::orthographic ? "orthographic" : "perspective"; }

inline CameraMode parse_camera_mode(const std::string& s) {
  if (s == "orthographic") return CameraMode::orthographic;
  if (s == "perspective") return CameraMode::perspective;
  throw InvalidArgument("unknown camera mode '" + s + "'");
}

// Principal point at the origin. The subject's root sits at depth
// depth_offset on the optical axis.
struct Camera {
  CameraMode mode = CameraMode::orthographic;
  double focal = 1000.0;         // perspective only
  double depth_offset = 5000.0;  // mm
  double roll_range = 0.0;       // perspective data: camera roll drawn from [-r, r]
  double keypoint_noise = 0.0;   // isotropic Gaussian jitter on 2D keypoints (input units)

  void validate() const {
    if (!(focal > 0.0)) throw InvalidArgument("camera focal length must be positive");
    if (!(roll_range >= 0.0) || !(keypoint_noise >= 0.0)) throw InvalidArgument("camera ranges must be >= 0");
  }
  std::string units() const { return mode == CameraMode::orthographic ? "mm" : "px"; }
};

// Orthographic: (x, y). Perspective: f * (x, y) / (z + depth_offset).
inline Pose2D project(const Pose3D& pose, const Camera& cam) {
  const auto n = pose.size();
  Eigen::MatrixX2d out(n, 2);
  if (cam.mode == CameraMode::orthographic) {
    out = pose.joints.leftCols<2>();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = pose.joints(i, 2) + cam.depth_offset;
      if (!(z > 0.0)) throw InvalidGeometry("joint " + std::to_string(i) + " is not in front of the camera");
      out(i, 0) = cam.focal * pose.joints(i, 0) / z;
      out(i, 1) = cam.focal * pose.joints(i, 1) / z;
    }
  }
  return Pose2D(std::move(out));
}

struct Sample {
  std::string id;
  Pose2D input2d;
  Pose3D target3d;  // camera coordinates, root at the origin
  std::optional<double> applied_theta;
};

struct DatasetMetadata {
  int joints = 17;
  std::string units = "mm";
  std::string skeleton_hash;
  Camera camera;
  std::uint64_t seed = 0;
  std::string split = "train";
};

struct Dataset {
  DatasetMetadata meta;
  std::vector<Sample> samples;

  std::vector<Pose2D> inputs() const {
    std::vector<Pose2D> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s.input2d);
    return v;
  }
  std::vector<Pose3D> targets() const {
    std::vector<Pose3D> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s.target3d);
    return v;
  }
};

// Independent generator per (seed, stream, index) so samples can be produced
// in any order or in parallel with identical results.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint32_t { kTrainStream = 1, kTestStream = 2, kRotateStream = 3, kAugmentStream = 4 };

// Rotates the 2D input and the target's xy columns by the same angle; depth is
// left untouched.
inline Sample augment(const Sample& s, double theta) {
  const auto r = rotation2_from_angle(theta);
  Sample out = s;
  out.input2d = apply_rotation2(s.input2d, r);
  out.target3d = apply_rotation3(s.target3d, embed_so2_in_so3(r));
  out.applied_theta = s.applied_theta.value_or(0.0) + theta;
  return out;
}

// Every sample rotated by its own theta ~ U[0, 2pi). force_zero keeps all
// angles at 0 (debugging aid).
inline Dataset make_rotated_testset(const Dataset& ds, std::uint64_t seed, bool force_zero = false) {
  Dataset out;
  out.meta = ds.meta;
  out.meta.split = ds.meta.split + "-rotated";
  out.samples.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    auto rng = stream_rng(seed, kRotateStream, i);
    const double theta = force_zero ? 0.0 : std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    out.samples.push_back(augment(ds.samples[i], theta));
  }
  return out;
}

template <class Rng>
Sample make_sample(const Skeleton& skel, const Camera& cam, Rng& rng, std::string id) {
  Sample s;
  s.id = std::move(id);
  Pose3D pose = root_align(sample_pose(skel, rng), 0);
  if (cam.mode == CameraMode::perspective && cam.roll_range > 0.0) {
    const double roll = std::uniform_real_distribution<double>(-cam.roll_range, cam.roll_range)(rng);
    pose = apply_rotation3(pose, embed_so2_in_so3(rotation2_from_angle(roll)));
  }
  s.input2d = project(pose, cam);
  if (cam.keypoint_noise > 0.0) {
    std::normal_distribution<double> g(0.0, cam.keypoint_noise);
    for (Eigen::Index i = 0; i < s.input2d.joints.size(); ++i) s.input2d.joints.data()[i] += g(rng);
  }
  s.target3d = std::move(pose);
  return s;
}

inline Dataset generate_dataset(const Skeleton& skel, const Camera& cam, std::uint64_t seed, std::size_t size,
                                const std::string& split) {
  skel.validate();
  cam.validate();
  Dataset ds;
  ds.meta.joints = static_cast<int>(skel.joint_count());
  ds.meta.units = cam.units();
  ds.meta.skeleton_hash = skel.hash();
  ds.meta.camera = cam;
  ds.meta.seed = seed;
  ds.meta.split = split;
  const std::uint32_t stream = split == "train" ? kTrainStream : kTestStream;
  ds.samples.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    auto rng = stream_rng(seed, stream, i);
    std::ostringstream id;
    id << split << '-' << i;
    ds.samples.push_back(make_sample(skel, cam, rng, id.str()));
  }
  return ds;
}

namespace detail {

using nlohmann::json;

inline json metadata_to_json(const DatasetMetadata& m) {
  return json{{"format", "eqlift-dataset"},
              {"version", 1},
              {"joints", m.joints},
              {"units", m.units},
              {"skeleton_hash", m.skeleton_hash},
              {"camera",
               {{"mode", to_string(m.camera.mode)},
                {"focal", m.camera.focal},
                {"depth_offset", m.camera.depth_offset},
                {"roll_range", m.camera.roll_range},
                {"keypoint_noise", m.camera.keypoint_noise}}},
              {"seed", m.seed},
              {"split", m.split}};
}

inline DatasetMetadata metadata_from_json(const json& j) {
  if (j.at("format").get<std::string>() != "eqlift-dataset") throw InvalidArgument("not an eqlift dataset");
  DatasetMetadata m;
  m.joints = j.at("joints").get<int>();
  m.units = j.at("units").get<std::string>();
  m.skeleton_hash = j.at("skeleton_hash").get<std::string>();
  const auto& c = j.at("camera");
  m.camera.mode = parse_camera_mode(c.at("mode").get<std::string>());
  m.camera.focal = c.at("focal").get<double>();
  m.camera.depth_offset = c.at("depth_offset").get<double>();
  m.camera.roll_range = c.at("roll_range").get<double>();
  m.camera.keypoint_noise = c.at("keypoint_noise").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.split = j.at("split").get<std::string>();
  if (m.joints < 2) throw InvalidArgument("dataset joint count must be >= 2");
  return m;
}

template <class Mat>
json rows_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <int Cols>
Eigen::Matrix<double, Eigen::Dynamic, Cols> rows_from_json(const json& j) {
  Eigen::Matrix<double, Eigen::Dynamic, Cols> m(static_cast<Eigen::Index>(j.size()), Cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j.at(i);
    if (row.size() != static_cast<std::size_t>(Cols)) {
      throw InvalidArgument("expected " + std::to_string(Cols) + " coordinates per joint");
    }
    for (int k = 0; k < Cols; ++k) m(static_cast<Eigen::Index>(i), k) = row.at(k).get<double>();
  }
  return m;
}

inline json sample_to_json(const Sample& s) {
  json j{{"id", s.id}, {"input2d", rows_to_json(s.input2d.joints)}, {"target3d", rows_to_json(s.target3d.joints)}};
  j["theta"] = s.applied_theta ? json(*s.applied_theta) : json(nullptr);
  return j;
}

inline Sample sample_from_json(const json& j) {
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.input2d = Pose2D(rows_from_json<2>(j.at("input2d")));
  s.target3d = Pose3D(rows_from_json<3>(j.at("target3d")));
  const auto& t = j.at("theta");
  if (!t.is_null()) s.applied_theta = t.get<double>();
  return s;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, std::ostream& os) {
  os << detail::metadata_to_json(ds.meta).dump() << '\n';
  for (const auto& s : ds.samples) os << detail::sample_to_json(s).dump() << '\n';
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset '" + path + "'");
  write_dataset(ds, os);
  if (!os) throw IoError("failed writing dataset '" + path + "'");
}

// Parse failures name the offending (1-based) line; joint-count and id
// mismatches against the metadata raise ValidationError.
inline Dataset read_dataset(std::istream& is, const std::string& source = "<stream>") {
  Dataset ds;
  std::string line;
  long line_no = 0;
  bool have_meta = false;
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")", line_no);
    }
    try {
      if (!have_meta) {
        ds.meta = detail::metadata_from_json(j);
        have_meta = true;
        continue;
      }
      Sample s = detail::sample_from_json(j);
      if (s.input2d.size() != ds.meta.joints || s.target3d.size() != ds.meta.joints) {
        throw ValidationError(source + ":" + std::to_string(line_no) + ": sample '" + s.id + "' has " +
                              std::to_string(s.input2d.size()) + "/" + std::to_string(s.target3d.size()) +
                              " joints, metadata declares " + std::to_string(ds.meta.joints));
      }
      if (!ids.insert(s.id).second) {
        throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate sample id '" + s.id + "'");
      }
      ds.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": malformed record (" + e.what() + ")", line_no);
    } catch (const InvalidArgument& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  if (!have_meta) throw ParseError(source + ": missing metadata line", line_no + 1);
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read dataset '" + path + "'");
  return read_dataset(is, path);
}

}  // namespace eqlift::data
