// SPDX-License-Identifier: Apache-2.0
//
// eqlift: data generation, training, evaluation, equivariance audits, timing
// and report emission for the 2D-to-3D lifting experiments.
//
// All flags live on the top-level app so a flat key = value config file
// (--config) can set any of them; command-line flags override the file.

#include <CLI11.hpp>

#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "eqlift/harness/commands.hpp"

namespace {

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace eqlift;
  namespace fs = std::filesystem;

  CLI::App app{"eqlift: rotation-equivariance experiments for 2D-to-3D pose lifting"};
  app.set_config("--config", "", "Flat key = value config file; keys are the long flag names");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string model = "vanilla", hybrid_mode = "parallel", construction = "native2d";
  std::string standardization = "isotropic";
  bool aug = false;
  int epochs = 100, batch_size = 256;
  double lr = 1e-3, gamma = 0.96, dropout = 0.2;
  int width = 128, blocks = 2, vn_channels = 32, vn_layers = 3, zhead_width = 112;
  std::string out = "out";
  std::string train_path, test_original, test_rotated, dataset;
  std::vector<std::string> checkpoints, eval_csvs, audits, require_rows;
  std::string skeleton = "h36m17", camera = "orthographic";
  std::size_t train_size = 6000, test_size = 1000;
  double focal = 1000.0, depth_offset = 5000.0, roll_range = 0.0, noise = 0.0;
  int num_angles = 10, inference_runs = 1000;
  bool zero_angles = false;

  app.add_option("--seed", seed, "Seed for data generation / audit angles");
  app.add_option("--seeds", seeds, "Training seeds (one checkpoint each)");
  app.add_option("--model", model, "vanilla | equi | hybrid")->check(CLI::IsMember({"vanilla", "equi", "hybrid"}));
  app.add_option("--hybrid-mode", hybrid_mode, "parallel | first-layer")
      ->check(CLI::IsMember({"parallel", "first-layer"}));
  app.add_option("--construction", construction, "Fully equivariant construction: native2d | lift3d")
      ->check(CLI::IsMember({"native2d", "lift3d"}));
  app.add_option("--standardization", standardization, "isotropic | per-coordinate (vanilla only)")
      ->check(CLI::IsMember({"isotropic", "per-coordinate"}));
  app.add_flag("--aug", aug, "Random in-plane rotation augmentation during training");
  app.add_option("--epochs", epochs);
  app.add_option("--batch-size", batch_size);
  app.add_option("--lr", lr, "Initial learning rate");
  app.add_option("--gamma", gamma, "Per-epoch learning-rate decay");
  app.add_option("--dropout", dropout);
  app.add_option("--width", width);
  app.add_option("--blocks", blocks);
  app.add_option("--vn-channels", vn_channels);
  app.add_option("--vn-layers", vn_layers);
  app.add_option("--zhead-width", zhead_width);
  app.add_option("--out", out, "Output directory (report: output file)");
  app.add_option("--train", train_path, "Training dataset (.jsonl)");
  app.add_option("--test-original", test_original);
  app.add_option("--test-rotated", test_rotated);
  app.add_option("--dataset", dataset, "Dataset for audit / bench");
  app.add_option("--checkpoints", checkpoints);
  app.add_option("--eval", eval_csvs, "Eval CSV tables for report");
  app.add_option("--audits", audits, "Audit JSON files for report");
  app.add_option("--require", require_rows, "Rows that must be present in the report");
  app.add_option("--skeleton", skeleton);
  app.add_option("--camera", camera)->check(CLI::IsMember({"orthographic", "perspective"}));
  app.add_option("--train-size", train_size);
  app.add_option("--test-size", test_size);
  app.add_option("--focal", focal);
  app.add_option("--depth-offset", depth_offset);
  app.add_option("--roll-range", roll_range, "Perspective camera roll range (degrees)");
  app.add_option("--noise", noise, "Gaussian keypoint jitter (input units)");
  app.add_option("--num-angles", num_angles);
  app.add_flag("--zero-angles", zero_angles, "Audit with every angle forced to 0");
  app.add_option("--inference-runs", inference_runs);

  auto* gen = app.add_subcommand("gen-data", "Generate train / test-original / test-rotated datasets")->fallthrough();
  auto* train = app.add_subcommand("train", "Train one model x regime for every seed")->fallthrough();
  auto* eval = app.add_subcommand("eval", "Protocol 1/2 on both test splits, aggregated over seeds")->fallthrough();
  auto* audit = app.add_subcommand("audit", "Equivariance audit of one checkpoint")->fallthrough();
  auto* bench = app.add_subcommand("bench", "Training-epoch and inference timing")->fallthrough();
  auto* report = app.add_subcommand("report", "Combined markdown table")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error code=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  try {
    auto model_config = [&] {
      models::ModelConfig c = models::preset(models::parse_model_kind(model));
      c.hybrid_mode = models::parse_hybrid_mode(hybrid_mode);
      c.construction = models::parse_construction(construction);
      c.standardization =
          standardization == "isotropic" ? StandardizationMode::isotropic : StandardizationMode::per_coordinate;
      c.width = width;
      c.blocks = blocks;
      c.vn_channels = vn_channels;
      c.vn_layers = vn_layers;
      c.zhead_width = zhead_width;
      return c;
    };
    auto require = [](const std::string& v, const char* flag) {
      if (v.empty()) throw InvalidArgument(std::string(flag) + " is required");
      return fs::path(v);
    };

    if (*gen) {
      harness::GenDataOptions o;
      o.skeleton = skeleton;
      o.camera.mode = data::parse_camera_mode(camera);
      o.camera.focal = focal;
      o.camera.depth_offset = depth_offset;
      o.camera.roll_range = roll_range * std::numbers::pi / 180.0;
      o.camera.keypoint_noise = noise;
      o.train_size = train_size;
      o.test_size = test_size;
      o.seed = seed;
      o.out_dir = out;
      const auto p = harness::cmd_gen_data(o);
      std::cout << p.train.string() << '\n' << p.test_original.string() << '\n' << p.test_rotated.string() << '\n';
    } else if (*train) {
      harness::TrainOptions o;
      o.model = model_config();
      o.train.learning_rate = lr;
      o.train.gamma = gamma;
      o.train.epochs = epochs;
      o.train.batch_size = batch_size;
      o.train.dropout_rate = dropout;
      o.augment = aug;
      o.seeds = seeds;
      o.train_path = require(train_path, "--train");
      o.out_dir = out;
      const auto r = harness::cmd_train(o);
      for (const auto& p : r.checkpoints) std::cout << p.string() << '\n';
    } else if (*eval) {
      harness::EvalCommandOptions o;
      for (const auto& c : checkpoints) o.checkpoints.emplace_back(c);
      o.test_original = require(test_original, "--test-original");
      o.test_rotated = require(test_rotated, "--test-rotated");
      o.out_dir = out;
      const auto r = harness::cmd_eval(o);
      harness::write_text_table(r.rows, std::cout);
    } else if (*audit) {
      if (checkpoints.size() != 1) throw InvalidArgument("audit takes exactly one --checkpoints entry");
      harness::AuditOptions o;
      o.checkpoint = checkpoints.front();
      o.dataset = require(dataset, "--dataset");
      o.num_angles = num_angles;
      o.seed = seed;
      o.zero_angles = zero_angles;
      o.out_dir = out;
      fs::path written;
      const auto r = harness::cmd_audit(o, &written);
      std::cout << harness::audit_to_json(r).dump(2) << '\n';
    } else if (*bench) {
      harness::BenchOptions o;
      for (const auto& c : checkpoints) o.checkpoints.emplace_back(c);
      o.dataset = require(dataset, "--dataset");
      o.inference_runs = inference_runs;
      o.out_dir = out;
      for (const auto& r : harness::cmd_bench(o)) {
        std::cout << r.label << " params=" << r.parameters << " train_epoch_s=" << r.train_epoch_seconds
                  << " inference_median_ms=" << r.inference_median_ms << '\n';
      }
    } else if (*report) {
      harness::ReportOptions o;
      for (const auto& e : eval_csvs) o.eval_csvs.emplace_back(e);
      for (const auto& a : audits) o.audits.emplace_back(a);
      o.require_rows = require_rows;
      o.out = out;
      std::cout << harness::cmd_report(o);
    }
  } catch (const Error& e) {
    std::cerr << "error code=" << e.code() << " message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error code=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
  return 0;
}
