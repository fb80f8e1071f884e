// SPDX-License-Identifier: Apache-2.0
#pragma once

// Versioned JSON checkpoint: model config and normalization, every parameter
// (shape, row-major values, Adam moments), batch-norm running statistics,
// training config, optimizer step, epoch counter and seed. Doubles are written
// in shortest round-trip form, so save/load is bit-exact.

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "eqlift/models/lifter.hpp"

namespace eqlift::models {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  LifterModel model;
  nn::TrainConfig train{};
  bool augment = false;
  long adam_steps = 0;
  int epoch = 0;
};

namespace detail {

using nlohmann::json;

inline json tensor_to_json(const nn::Tensor& t) { return json{{"shape", t.shape()}, {"data", t.values()}}; }

inline nn::Tensor tensor_from_json(const json& j) {
  return nn::Tensor(j.at("shape").get<nn::Shape>(), j.at("data").get<std::vector<double>>());
}

inline void assign_same_shape(nn::Tensor& dst, nn::Tensor src, const std::string& what) {
  if (src.shape() != dst.shape()) {
    throw ValidationError("checkpoint tensor '" + what + "' has shape " + nn::shape_str(src.shape()) +
                          ", model expects " + nn::shape_str(dst.shape()));
  }
  dst = std::move(src);
}

inline json config_to_json(const ModelConfig& c) {
  return json{{"kind", to_string(c.kind)},
              {"hybrid_mode", to_string(c.hybrid_mode)},
              {"construction", to_string(c.construction)},
              {"joints", c.joints},
              {"width", c.width},
              {"blocks", c.blocks},
              {"vn_channels", c.vn_channels},
              {"vn_layers", c.vn_layers},
              {"zhead_width", c.zhead_width},
              {"dropout_rate", c.dropout_rate},
              {"standardization", c.standardization == StandardizationMode::isotropic ? "isotropic" : "per-coordinate"},
              {"zero_init_output", c.zero_init_output},
              {"init_seed", c.init_seed}};
}

inline ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.hybrid_mode = parse_hybrid_mode(j.at("hybrid_mode").get<std::string>());
  c.construction = parse_construction(j.at("construction").get<std::string>());
  c.joints = j.at("joints").get<int>();
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.vn_channels = j.at("vn_channels").get<int>();
  c.vn_layers = j.at("vn_layers").get<int>();
  c.zhead_width = j.at("zhead_width").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.standardization = j.at("standardization").get<std::string>() == "isotropic"
                          ? StandardizationMode::isotropic
                          : StandardizationMode::per_coordinate;
  c.zero_init_output = j.at("zero_init_output").get<bool>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  using detail::json;
  const auto& m = ck.model;
  json params = json::object();
  for (const auto& [name, p] : m.parameters()) {
    params[name] = json{{"value", detail::tensor_to_json(p.value())},
                        {"m", detail::tensor_to_json(p.first_moment)},
                        {"v", detail::tensor_to_json(p.second_moment)}};
  }
  json bns = json::object();
  for (const auto& [name, s] : m.batch_norms()) {
    bns[name] = json{{"running_mean", detail::tensor_to_json(s.running_mean)},
                     {"running_var", detail::tensor_to_json(s.running_var)}};
  }
  const auto& nz = m.normalization();
  return json{
      {"format", "eqlift-checkpoint"},
      {"version", kCheckpointVersion},
      {"model", detail::config_to_json(m.config())},
      {"normalization",
       {{"center", {nz.input.center.x(), nz.input.center.y()}},
        {"scale", {nz.input.scale.x(), nz.input.scale.y()}},
        {"centered_scale", nz.centered_scale},
        {"target_scale", nz.target_scale}}},
      {"third_coordinate", m.third_coordinate()},
      {"parameters", params},
      {"batch_norm", bns},
      {"train",
       {{"learning_rate", ck.train.learning_rate},
        {"gamma", ck.train.gamma},
        {"epochs", ck.train.epochs},
        {"batch_size", ck.train.batch_size},
        {"seed", ck.train.seed},
        {"dropout_rate", ck.train.dropout_rate},
        {"augment", ck.augment}}},
      {"adam_steps", ck.adam_steps},
      {"epoch", ck.epoch},
  };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "eqlift-checkpoint") throw ValidationError("not an eqlift checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    Checkpoint ck{LifterModel(detail::config_from_json(j.at("model"))), {}};
    auto& m = ck.model;
    const auto& nz = j.at("normalization");
    auto& norm = m.normalization();
    norm.input.center = Vec2(nz.at("center").at(0).get<double>(), nz.at("center").at(1).get<double>());
    norm.input.scale = Vec2(nz.at("scale").at(0).get<double>(), nz.at("scale").at(1).get<double>());
    norm.input.mode = m.config().standardization;
    norm.centered_scale = nz.at("centered_scale").get<double>();
    norm.target_scale = nz.at("target_scale").get<double>();
    auto third = j.at("third_coordinate").get<std::vector<double>>();
    if (third.size() != m.third_coordinate().size()) throw ValidationError("third coordinate length mismatch");
    m.third_coordinate() = std::move(third);

    const auto& params = j.at("parameters");
    if (params.size() != m.parameters().size()) throw ValidationError("checkpoint parameter set does not match model");
    for (auto& [name, p] : m.parameters()) {
      const auto& pj = params.at(name);
      detail::assign_same_shape(p.value(), detail::tensor_from_json(pj.at("value")), name);
      detail::assign_same_shape(p.first_moment, detail::tensor_from_json(pj.at("m")), name + ".m");
      detail::assign_same_shape(p.second_moment, detail::tensor_from_json(pj.at("v")), name + ".v");
    }
    for (auto& [name, s] : m.batch_norms()) {
      const auto& bj = j.at("batch_norm").at(name);
      detail::assign_same_shape(s.running_mean, detail::tensor_from_json(bj.at("running_mean")), name);
      detail::assign_same_shape(s.running_var, detail::tensor_from_json(bj.at("running_var")), name);
    }
    const auto& t = j.at("train");
    ck.train.learning_rate = t.at("learning_rate").get<double>();
    ck.train.gamma = t.at("gamma").get<double>();
    ck.train.epochs = t.at("epochs").get<int>();
    ck.train.batch_size = t.at("batch_size").get<int>();
    ck.train.seed = t.at("seed").get<std::uint64_t>();
    ck.train.dropout_rate = t.at("dropout_rate").get<double>();
    ck.augment = t.at("augment").get<bool>();
    ck.adam_steps = j.at("adam_steps").get<long>();
    ck.epoch = j.at("epoch").get<int>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  os << checkpoint_to_json(ck).dump() << '\n';
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what(), 1);
  }
  return checkpoint_from_json(j);
}

}  // namespace eqlift::models
