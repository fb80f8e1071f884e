// SPDX-License-Identifier: Apache-2.0
#pragma once

// Library side of the command-line tool: each cmd_* does the work of one
// subcommand and writes its outputs under an output directory.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "eqlift/data/dataset.hpp"
#include "eqlift/harness/report.hpp"
#include "eqlift/harness/train.hpp"
#include "eqlift/metrics.hpp"
#include "eqlift/models/checkpoint.hpp"

namespace eqlift::harness {

namespace fs = std::filesystem;

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  return os;
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
  std::string skeleton = "h36m17";
  data::Camera camera;
  std::size_t train_size = 6000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;
  fs::path out_dir = "data";
};

struct DatasetPaths {
  fs::path train, test_original, test_rotated;
};

inline DatasetPaths dataset_paths(const fs::path& dir) {
  return {dir / "train.jsonl", dir / "test_original.jsonl", dir / "test_rotated.jsonl"};
}

inline DatasetPaths cmd_gen_data(const GenDataOptions& opt) {
  ensure_directory(opt.out_dir);
  const auto skel = data::skeleton_preset(opt.skeleton);
  const auto train = data::generate_dataset(skel, opt.camera, opt.seed, opt.train_size, "train");
  const auto test = data::generate_dataset(skel, opt.camera, opt.seed, opt.test_size, "test");
  const auto rotated = data::make_rotated_testset(test, opt.seed);
  const auto paths = dataset_paths(opt.out_dir);
  data::write_dataset(train, paths.train.string());
  data::write_dataset(test, paths.test_original.string());
  data::write_dataset(rotated, paths.test_rotated.string());
  return paths;
}

// ------------------------------------------------------------------- train

// Row label used in tables: kind (hybrid first-layer mode as "hybrid2",
// lifted construction as "equi-lift3d") plus "+aug" when augmented.
inline std::string row_label(const models::ModelConfig& c, bool augment) {
  std::string s = models::to_string(c.kind);
  if (c.kind == models::ModelKind::hybrid && c.hybrid_mode == models::HybridMode::first_layer_features) s = "hybrid2";
  if (c.kind == models::ModelKind::fully_equivariant && c.construction == models::EquivariantConstruction::lift3d) {
    s += "-lift3d";
  }
  return augment ? s + "+aug" : s;
}

inline std::string file_tag(const models::ModelConfig& c, bool augment) {
  std::string s = row_label(c, augment);
  std::replace(s.begin(), s.end(), '+', '_');
  return s;
}

struct TrainOptions {
  models::ModelConfig model;
  nn::TrainConfig train;  // seed is taken from `seeds`
  bool augment = false;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  fs::path train_path;
  fs::path out_dir = "runs";
};

struct TrainOutput {
  std::vector<fs::path> checkpoints;
  std::vector<fs::path> logs;
};

// One checkpoint and one append-only log per seed:
//   <out>/<tag>-seed<k>.ckpt.json, <out>/<tag>-seed<k>.log
// Log lines: "epoch=<e> loss=<mse> lr=<lr> wall_ms=<t>".
inline TrainOutput cmd_train(const TrainOptions& opt) {
  if (opt.seeds.empty()) throw InvalidArgument("at least one seed is required");
  const auto ds = data::read_dataset(opt.train_path.string());
  ensure_directory(opt.out_dir);
  TrainOutput out;
  for (auto seed : opt.seeds) {
    nn::TrainConfig tc = opt.train;
    tc.seed = seed;
    auto ck = make_checkpoint(opt.model, tc, opt.augment);
    const std::string stem = file_tag(ck.model.config(), opt.augment) + "-seed" + std::to_string(seed);
    const fs::path log_path = opt.out_dir / (stem + ".log");
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot write '" + log_path.string() + "'");
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
      log << "epoch=" << r.epoch << " loss=" << fmt_double(r.loss) << " lr=" << fmt_double(r.lr)
          << " wall_ms=" << fmt_fixed(r.wall_ms, 3) << '\n';
      log.flush();
    };
    train(ck, ds, hooks);
    const fs::path ck_path = opt.out_dir / (stem + ".ckpt.json");
    models::save_checkpoint(ck, ck_path.string());
    out.checkpoints.push_back(ck_path);
    out.logs.push_back(log_path);
  }
  return out;
}

// -------------------------------------------------------------------- eval

struct EvalCommandOptions {
  std::vector<fs::path> checkpoints;
  fs::path test_original;
  fs::path test_rotated;
  fs::path out_dir = "eval";
  std::string name = "eval";
};

struct EvalOutput {
  std::vector<TableRow> rows;
  fs::path csv;
  fs::path text;
};

// Groups checkpoints by row label (model x regime), evaluates each on both
// test splits and aggregates over seeds. Rows keep first-appearance order.
inline EvalOutput cmd_eval(const EvalCommandOptions& opt) {
  if (opt.checkpoints.empty()) throw InvalidArgument("no checkpoints given");
  const auto original = data::read_dataset(opt.test_original.string());
  const auto rotated = data::read_dataset(opt.test_rotated.string());

  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<metrics::MetricReport>, std::vector<metrics::MetricReport>>> groups;
  for (const auto& path : opt.checkpoints) {
    auto ck = models::load_checkpoint(path.string());
    for (const auto* ds : {&original, &rotated}) {
      if (ds->meta.joints != ck.model.joints()) {
        throw ValidationError("checkpoint '" + path.string() + "' expects " + std::to_string(ck.model.joints()) +
                              " joints, dataset '" + ds->meta.split + "' has " + std::to_string(ds->meta.joints));
      }
    }
    const std::string label = row_label(ck.model.config(), ck.augment);
    if (!groups.count(label)) order.push_back(label);
    auto& g = groups[label];
    g.first.push_back(metrics::evaluate(ck.model, original));
    g.second.push_back(metrics::evaluate(ck.model, rotated));
  }

  EvalOutput out;
  for (const auto& label : order) {
    auto& g = groups[label];
    TableRow row{label, metrics::aggregate(g.first), metrics::aggregate(g.second)};
    row.original.split = "original";
    row.rotated.split = "rotated";
    out.rows.push_back(std::move(row));
  }
  ensure_directory(opt.out_dir);
  out.csv = opt.out_dir / (opt.name + ".csv");
  out.text = opt.out_dir / (opt.name + ".txt");
  {
    auto os = open_output(out.csv);
    write_csv(out.rows, os);
  }
  {
    auto os = open_output(out.text);
    write_text_table(out.rows, os);
  }
  return out;
}

// ------------------------------------------------------------------- audit

struct AuditOptions {
  fs::path checkpoint;
  fs::path dataset;
  int num_angles = 10;
  std::uint64_t seed = 0;
  bool zero_angles = false;  // every theta forced to 0
  fs::path out_dir = "audit";
};

struct AuditReport {
  std::string label;
  std::size_t samples = 0;
  int num_angles = 0;
  double mean = 0.0;
  double max = 0.0;
  double max_relative = 0.0;  // max over (sample, theta) of error / RMS(f(X))
  double xy_mean = 0.0;
  double xy_max = 0.0;
  double xy_max_relative = 0.0;
  double z_mean = 0.0;
  double z_max = 0.0;
};

// Per-sample equivariance error over num_angles thetas ~ U[0, 2pi). The xy
// and depth breakdowns are always computed; they matter for hybrid models.
inline AuditReport audit_model(models::LifterModel& model, const data::Dataset& ds, int num_angles,
                               std::uint64_t seed, bool zero_angles = false) {
  if (ds.samples.empty()) throw InvalidArgument("cannot audit on an empty dataset");
  if (num_angles < 1) throw InvalidArgument("num_angles must be >= 1");
  if (ds.meta.joints != model.joints()) throw ValidationError("joint count mismatch between model and dataset");
  AuditReport rep;
  rep.samples = ds.samples.size();
  rep.num_angles = num_angles;
  const auto inputs = ds.inputs();
  const auto base = model.predict_batch(inputs);
  double count = 0.0;
  std::vector<Pose2D> rotated_inputs(inputs.size());
  for (int a = 0; a < num_angles; ++a) {
    std::vector<Rotation2> rots;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto rng = data::stream_rng(seed, data::kRotateStream, static_cast<std::uint64_t>(a) * inputs.size() + i);
      const double theta = zero_angles ? 0.0 : std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      rots.push_back(rotation2_from_angle(theta));
      rotated_inputs[i] = apply_rotation2(inputs[i], rots.back());
    }
    const auto outs = model.predict_batch(rotated_inputs);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Pose3D expected = apply_rotation3(base[i], embed_so2_in_so3(rots[i]));
      const double scale = std::max(metrics::rms(base[i]), 1e-300);
      const double e = metrics::masked_mpjpe(outs[i], expected, metrics::ColumnMask::all);
      const double exy = metrics::masked_mpjpe(outs[i], expected, metrics::ColumnMask::xy);
      const double ez = metrics::masked_mpjpe(outs[i], expected, metrics::ColumnMask::z);
      rep.mean += e;
      rep.xy_mean += exy;
      rep.z_mean += ez;
      rep.max = std::max(rep.max, e);
      rep.xy_max = std::max(rep.xy_max, exy);
      rep.z_max = std::max(rep.z_max, ez);
      rep.max_relative = std::max(rep.max_relative, e / scale);
      rep.xy_max_relative = std::max(rep.xy_max_relative, exy / scale);
      count += 1.0;
    }
  }
  rep.mean /= count;
  rep.xy_mean /= count;
  rep.z_mean /= count;
  return rep;
}

inline nlohmann::json audit_to_json(const AuditReport& r) {
  return nlohmann::json{{"row", r.label},         {"samples", r.samples},
                        {"num_angles", r.num_angles}, {"mean", r.mean},
                        {"max", r.max},           {"max_relative", r.max_relative},
                        {"xy_mean", r.xy_mean},   {"xy_max", r.xy_max},
                        {"xy_max_relative", r.xy_max_relative}, {"z_mean", r.z_mean},
                        {"z_max", r.z_max}};
}

inline AuditReport cmd_audit(const AuditOptions& opt, fs::path* written = nullptr) {
  auto ck = models::load_checkpoint(opt.checkpoint.string());
  const auto ds = data::read_dataset(opt.dataset.string());
  auto rep = audit_model(ck.model, ds, opt.num_angles, opt.seed, opt.zero_angles);
  rep.label = row_label(ck.model.config(), ck.augment);
  ensure_directory(opt.out_dir);
  const fs::path path = opt.out_dir / (opt.checkpoint.stem().stem().string() + ".audit.json");
  auto os = open_output(path);
  os << audit_to_json(rep).dump(2) << '\n';
  if (written) *written = path;
  return rep;
}

// ------------------------------------------------------------------- bench

struct BenchOptions {
  std::vector<fs::path> checkpoints;
  fs::path dataset;  // used both for one timed training epoch and for inference inputs
  int inference_runs = 1000;
  fs::path out_dir = "bench";
};

struct BenchRow {
  std::string label;
  std::size_t parameters = 0;
  double train_epoch_seconds = 0.0;
  double inference_median_ms = 0.0;
};

inline BenchRow bench_checkpoint(models::Checkpoint ck, const data::Dataset& ds, int inference_runs) {
  if (ds.samples.empty()) throw InvalidArgument("bench needs a non-empty dataset");
  if (inference_runs < 1) throw InvalidArgument("inference_runs must be >= 1");
  BenchRow row;
  row.label = row_label(ck.model.config(), ck.augment);
  row.parameters = ck.model.parameter_count();

  models::Checkpoint timed = ck;
  timed.epoch = 0;
  timed.train.epochs = 1;
  const auto t0 = std::chrono::steady_clock::now();
  train(timed, ds);
  row.train_epoch_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(inference_runs));
  for (int i = 0; i < inference_runs; ++i) {
    const auto& x = ds.samples[static_cast<std::size_t>(i) % ds.samples.size()].input2d;
    const auto s = std::chrono::steady_clock::now();
    const auto y = ck.model.predict(x);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - s).count());
    if (!y.valid()) throw NumericalFailure("non-finite prediction during bench");
  }
  std::nth_element(ms.begin(), ms.begin() + static_cast<long>(ms.size() / 2), ms.end());
  row.inference_median_ms = ms[ms.size() / 2];
  return row;
}

inline std::vector<BenchRow> cmd_bench(const BenchOptions& opt) {
  if (opt.checkpoints.empty()) throw InvalidArgument("no checkpoints given");
  const auto ds = data::read_dataset(opt.dataset.string());
  std::vector<BenchRow> rows;
  for (const auto& p : opt.checkpoints) rows.push_back(bench_checkpoint(models::load_checkpoint(p.string()), ds, opt.inference_runs));
  ensure_directory(opt.out_dir);
  auto os = open_output(opt.out_dir / "bench.csv");
  os << "row,parameters,train_epoch_seconds,inference_median_ms\n";
  for (const auto& r : rows) {
    os << r.label << ',' << r.parameters << ',' << fmt_double(r.train_epoch_seconds, 6) << ','
       << fmt_double(r.inference_median_ms, 6) << '\n';
  }
  return rows;
}

// ------------------------------------------------------------------ report

struct ReportOptions {
  std::vector<fs::path> eval_csvs;
  std::vector<fs::path> audits;  // optional audit JSON files
  std::vector<std::string> require_rows;
  fs::path out = "report.md";
};

// Merges eval tables (later files override earlier rows with the same label)
// into one markdown table with best/second-best markers per column.
inline std::string cmd_report(const ReportOptions& opt) {
  if (opt.eval_csvs.empty()) throw ValidationError("report needs at least one eval CSV");
  std::vector<TableRow> rows;
  for (const auto& p : opt.eval_csvs) {
    std::ifstream is(p);
    if (!is) throw ValidationError("missing eval table '" + p.string() + "'");
    for (auto& r : read_csv(is, p.string())) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const TableRow& x) { return x.label == r.label; });
      if (it != rows.end()) *it = std::move(r);
      else rows.push_back(std::move(r));
    }
  }
  std::vector<std::string> missing;
  for (const auto& want : opt.require_rows) {
    if (std::none_of(rows.begin(), rows.end(), [&](const TableRow& r) { return r.label == want; })) {
      missing.push_back(want);
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing rows:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }

  std::ostringstream md;
  write_markdown(rows, md);
  if (!opt.audits.empty()) {
    md << "\nEquivariance audit (mm):\n\n| Model | mean | max | max / RMS | xy mean | z mean |\n|---|---|---|---|---|---|\n";
    for (const auto& p : opt.audits) {
      std::ifstream is(p);
      if (!is) throw ValidationError("missing audit file '" + p.string() + "'");
      nlohmann::json j;
      try {
        is >> j;
        md << "| " << j.at("row").get<std::string>() << " | " << fmt_double(j.at("mean").get<double>(), 4) << " | "
           << fmt_double(j.at("max").get<double>(), 4) << " | " << fmt_double(j.at("max_relative").get<double>(), 4)
           << " | " << fmt_double(j.at("xy_mean").get<double>(), 4) << " | "
           << fmt_double(j.at("z_mean").get<double>(), 4) << " |\n";
      } catch (const nlohmann::json::exception& e) {
        throw ParseError("audit '" + p.string() + "': " + e.what(), 1);
      }
    }
  }
  if (!opt.out.empty()) {
    if (opt.out.has_parent_path()) ensure_directory(opt.out.parent_path());
    auto os = open_output(opt.out);
    os << md.str();
  }
  return md.str();
}

}  // namespace eqlift::harness
