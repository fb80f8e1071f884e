// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "eqlift/harness/commands.hpp"
#include "eqlift/harness/report.hpp"
#include "eqlift/harness/train.hpp"

using namespace eqlift;
using namespace eqlift::harness;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("eqlift_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

DatasetPaths gen(const fs::path& dir, std::size_t train, std::size_t test, std::uint64_t seed = 0) {
  GenDataOptions o;
  o.train_size = train;
  o.test_size = test;
  o.seed = seed;
  o.out_dir = dir;
  return cmd_gen_data(o);
}

models::ModelConfig small_model(models::ModelKind kind) {
  auto c = models::preset(kind);
  c.width = 32;
  c.blocks = 1;
  c.vn_channels = 8;
  c.vn_layers = 2;
  c.zhead_width = 16;
  return c;
}

nn::TrainConfig quick(int epochs, int batch = 16) {
  nn::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch;
  return t;
}

struct CliResult {
  int code;
  std::string err;
  std::string out;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd =
      std::string(EQLIFT_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err), slurp(out)};
}

TableRow row(const std::string& label, double orig_p1, double rot_p1, double orig_p2, double rot_p2) {
  TableRow r;
  r.label = label;
  r.original.protocol1_mean = orig_p1;
  r.rotated.protocol1_mean = rot_p1;
  r.original.protocol2_mean = orig_p2;
  r.rotated.protocol2_mean = rot_p2;
  return r;
}

}  // namespace

TEST(GenData, WritesThreeFilesWithDeclaredSizes) {
  TempDir dir("gen_sizes");
  const auto p = gen(dir.path(), 7, 3);
  EXPECT_EQ(lines_of(slurp(p.train)).size(), 8u);
  EXPECT_EQ(lines_of(slurp(p.test_original)).size(), 4u);
  EXPECT_EQ(lines_of(slurp(p.test_rotated)).size(), 4u);
  const auto rotated = data::read_dataset(p.test_rotated.string());
  EXPECT_EQ(rotated.meta.split, "test-rotated");
  EXPECT_TRUE(rotated.samples[0].applied_theta.has_value());
}

TEST(GenData, SizeZeroGivesValidEmptyDatasets) {
  TempDir dir("gen_empty");
  const auto p = gen(dir.path(), 0, 0);
  for (const auto& f : {p.train, p.test_original, p.test_rotated}) {
    EXPECT_TRUE(data::read_dataset(f.string()).samples.empty()) << f;
  }
}

TEST(GenData, SameSeedIsByteIdentical) {
  TempDir a("gen_det_a"), b("gen_det_b");
  const auto pa = gen(a.path(), 20, 10, 4);
  const auto pb = gen(b.path(), 20, 10, 4);
  EXPECT_EQ(slurp(pa.train), slurp(pb.train));
  EXPECT_EQ(slurp(pa.test_original), slurp(pb.test_original));
  EXPECT_EQ(slurp(pa.test_rotated), slurp(pb.test_rotated));
}

TEST(GenData, UnwritablePathIsIoError) {
  GenDataOptions o;
  o.out_dir = "/proc/eqlift-cannot-write";
  EXPECT_THROW(cmd_gen_data(o), IoError);
}

TEST(Train, SmokeRunAndLearningRateLog) {
  TempDir dir("train_smoke");
  const auto p = gen(dir.path(), 10, 2);
  TrainOptions o;
  o.model = small_model(models::ModelKind::vanilla);
  o.train = quick(3, 4);
  o.seeds = {5};
  o.train_path = p.train;
  o.out_dir = dir / "runs";
  const auto out = cmd_train(o);
  ASSERT_EQ(out.checkpoints.size(), 1u);
  EXPECT_EQ(out.checkpoints[0].filename(), "vanilla-seed5.ckpt.json");
  const auto log = lines_of(slurp(out.logs[0]));
  ASSERT_EQ(log.size(), 3u);
  const std::regex re(R"(epoch=(\d+) loss=(\S+) lr=(\S+) wall_ms=(\S+))");
  for (int e = 0; e < 3; ++e) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(log[e], m, re)) << log[e];
    EXPECT_EQ(std::stoi(m[1]), e);
    EXPECT_TRUE(std::isfinite(std::stod(m[2])));
    EXPECT_NEAR(std::stod(m[3]), 1e-3 * std::pow(0.96, e), 1e-18);
  }
  const auto ck = models::load_checkpoint(out.checkpoints[0].string());
  EXPECT_EQ(ck.epoch, 3);
  EXPECT_EQ(ck.adam_steps, 9);
}

TEST(Train, WithoutAugmentationBatchesRepeatExactly) {
  const auto ds = data::generate_dataset(data::h36m17_skeleton(), data::Camera{}, 1, 12, "train");
  for (bool aug : {false, true}) {
    auto ck = make_checkpoint(small_model(models::ModelKind::hybrid), quick(3, 5), aug);
    std::map<int, std::map<std::size_t, std::vector<double>>> seen;
    TrainHooks hooks;
    hooks.on_batch = [&](int epoch, const std::vector<std::size_t>& idx, const nn::Tensor& x) {
      const std::size_t per = 17 * 2;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        seen[epoch][idx[b]] = std::vector<double>(x.data() + b * per, x.data() + (b + 1) * per);
      }
    };
    train(ck, ds, hooks);
    ASSERT_EQ(seen.size(), 3u);
    ASSERT_EQ(seen[0].size(), 12u);
    bool all_equal = true;
    for (int e = 1; e < 3; ++e)
      for (const auto& [i, v] : seen[e]) all_equal = all_equal && v == seen[0][i];
    EXPECT_EQ(all_equal, !aug);
  }
}

TEST(Train, NumericalFailureNamesEpochAndBatch) {
  const auto ds = data::generate_dataset(data::h36m17_skeleton(), data::Camera{}, 1, 8, "train");
  auto cfg = quick(3, 4);
  cfg.learning_rate = 1e300;
  auto ck = make_checkpoint(small_model(models::ModelKind::vanilla), cfg, false);
  try {
    train(ck, ds);
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch"), std::string::npos) << what;
    EXPECT_NE(what.find("batch"), std::string::npos) << what;
  }
}

TEST(Eval, PredictionsAsTargetsScoreZero) {
  TempDir dir("eval_self");
  const auto p = gen(dir.path(), 30, 8);
  TrainOptions o;
  o.model = small_model(models::ModelKind::fully_equivariant);
  o.train = quick(1);
  o.seeds = {0};
  o.train_path = p.train;
  o.out_dir = dir / "runs";
  const auto ck_path = cmd_train(o).checkpoints.at(0);

  auto ck = models::load_checkpoint(ck_path.string());
  auto test = data::read_dataset(p.test_original.string());
  const auto preds = ck.model.predict_batch(test.inputs());
  for (std::size_t i = 0; i < preds.size(); ++i) test.samples[i].target3d = root_align(preds[i], 0);
  data::write_dataset(test, (dir / "self.jsonl").string());

  EvalCommandOptions e;
  e.checkpoints = {ck_path};
  e.test_original = dir / "self.jsonl";
  e.test_rotated = dir / "self.jsonl";
  e.out_dir = dir / "eval";
  const auto out = cmd_eval(e);
  ASSERT_EQ(out.rows.size(), 1u);
  EXPECT_EQ(out.rows[0].original.protocol1_mean, 0.0);
  EXPECT_LE(out.rows[0].original.protocol2_mean, 1e-9);
}

TEST(Eval, ColumnsSeedAggregationAndJointMismatch) {
  TempDir dir("eval_cols");
  const auto p = gen(dir.path(), 20, 6);
  TrainOptions o;
  o.model = small_model(models::ModelKind::vanilla);
  o.train = quick(1);
  o.seeds = {0, 1, 2};
  o.train_path = p.train;
  o.out_dir = dir / "runs";
  const auto cks = cmd_train(o).checkpoints;

  EvalCommandOptions e;
  e.checkpoints = cks;
  e.test_original = p.test_original;
  e.test_rotated = p.test_rotated;
  e.out_dir = dir / "eval";
  const auto out = cmd_eval(e);
  ASSERT_EQ(out.rows.size(), 1u);
  EXPECT_EQ(out.rows[0].label, "vanilla");
  EXPECT_EQ(out.rows[0].original.per_seed_protocol1.size(), 3u);
  EXPECT_TRUE(out.rows[0].original.protocol1_std.has_value());
  EXPECT_TRUE(out.rows[0].rotated.protocol2_std.has_value());

  const auto csv = lines_of(slurp(out.csv));
  EXPECT_EQ(csv[0], kCsvHeader);
  const auto text = lines_of(slurp(out.text));
  EXPECT_NE(text[0].find("Original P1"), std::string::npos);
  EXPECT_NE(text[0].find("Rotated P1"), std::string::npos);
  EXPECT_NE(text[0].find("Original P2"), std::string::npos);
  EXPECT_NE(text[0].find("Rotated P2"), std::string::npos);
  std::istringstream is(slurp(out.csv));
  const auto back = read_csv(is, "eval.csv");
  EXPECT_EQ(back[0].rotated.protocol1_mean, out.rows[0].rotated.protocol1_mean);
  EXPECT_EQ(back[0].original.per_seed_protocol2, out.rows[0].original.per_seed_protocol2);

  // 16-joint dataset against a 17-joint checkpoint
  auto ds = data::read_dataset(p.test_original.string());
  ds.meta.joints = 16;
  for (auto& s : ds.samples) {
    s.input2d.joints.conservativeResize(16, 2);
    s.target3d.joints.conservativeResize(16, 3);
  }
  data::write_dataset(ds, (dir / "n16.jsonl").string());
  e.test_original = dir / "n16.jsonl";
  EXPECT_THROW(cmd_eval(e), ValidationError);
}

TEST(Audit, ZeroAnglesEquiAndVanillaGap) {
  TempDir dir("audit");
  const auto p = gen(dir.path(), 40, 10);
  std::map<std::string, AuditReport> reports;
  for (auto kind : {models::ModelKind::vanilla, models::ModelKind::fully_equivariant}) {
    TrainOptions o;
    o.model = small_model(kind);
    o.train = quick(2);
    o.seeds = {0};
    o.train_path = p.train;
    o.out_dir = dir / "runs";
    const auto ck = cmd_train(o).checkpoints.at(0);
    AuditOptions a;
    a.checkpoint = ck;
    a.dataset = p.test_original;
    a.out_dir = dir / "audit";
    fs::path written;
    reports[models::to_string(kind)] = cmd_audit(a, &written);
    EXPECT_TRUE(fs::exists(written));
    a.zero_angles = true;
    const auto zero = cmd_audit(a);
    EXPECT_EQ(zero.mean, 0.0);
    EXPECT_EQ(zero.max, 0.0);
  }
  const auto& equi = reports.at("equi");
  const auto& van = reports.at("vanilla");
  EXPECT_EQ(equi.samples, 10u);
  EXPECT_EQ(equi.num_angles, 10);
  EXPECT_LE(equi.max_relative, 1e-9);
  EXPECT_GE(van.mean, 1e3 * equi.mean);
  EXPECT_GT(van.mean, 1.0);
}

TEST(Bench, ReportsBothFieldsPerModel) {
  TempDir dir("bench");
  const auto p = gen(dir.path(), 64, 4);
  std::vector<fs::path> cks;
  for (auto kind : {models::ModelKind::vanilla, models::ModelKind::fully_equivariant}) {
    TrainOptions o;
    o.model = models::preset(kind);
    o.train = quick(1, 64);
    o.seeds = {0};
    o.train_path = p.train;
    o.out_dir = dir / "runs";
    cks.push_back(cmd_train(o).checkpoints.at(0));
  }
  BenchOptions b;
  b.checkpoints = cks;
  b.dataset = p.test_original;
  b.inference_runs = 1000;
  b.out_dir = dir / "bench";
  const auto rows = cmd_bench(b);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_GT(r.train_epoch_seconds, 0.0) << r.label;
    EXPECT_GT(r.inference_median_ms, 0.0) << r.label;
    EXPECT_GT(r.parameters, 0u);
  }
  EXPECT_TRUE(std::isfinite(rows[0].inference_median_ms) && std::isfinite(rows[1].inference_median_ms));
  EXPECT_NE(rows[0].label, rows[1].label);
  const auto csv = lines_of(slurp(dir / "bench" / "bench.csv"));
  EXPECT_EQ(csv[0], "row,parameters,train_epoch_seconds,inference_median_ms");
  EXPECT_EQ(csv.size(), 3u);
}

TEST(Report, TwoRowsBoldAndUnderline) {
  std::ostringstream os;
  write_markdown({row("a", 1, 4, 2, 2), row("b", 2, 3, 1, 1)}, os);
  const auto md = lines_of(os.str());
  EXPECT_EQ(md[2], "| a | **1.0** | <u>4.0</u> | <u>2.0</u> | <u>2.0</u> |");
  EXPECT_EQ(md[3], "| b | <u>2.0</u> | **3.0** | **1.0** | **1.0** |");
}

TEST(Report, TiesAreAllBold) {
  const auto ranks = rank_cells({row("a", 1, 1, 1, 1), row("b", 1, 2, 1, 1), row("c", 3, 2, 1, 1)});
  EXPECT_EQ(ranks[0][0], Rank::best);
  EXPECT_EQ(ranks[1][0], Rank::best);
  EXPECT_EQ(ranks[2][0], Rank::second);
  EXPECT_EQ(ranks[1][1], Rank::second);
  EXPECT_EQ(ranks[2][1], Rank::second);
  EXPECT_EQ(ranks[2][3], Rank::best);
}

TEST(Report, FullTableAndMissingRows) {
  TempDir dir("report");
  const std::vector<TableRow> rows{row("vanilla", 60, 200, 50, 150),   row("vanilla+aug", 64, 64, 51, 51),
                                   row("equi", 80, 80, 60, 60),        row("equi+aug", 81, 81, 61, 61),
                                   row("hybrid", 62, 120, 50, 90),     row("hybrid+aug", 66, 66, 52, 52)};
  {
    std::ofstream os(dir / "eval.csv");
    write_csv(rows, os);
  }
  ReportOptions o;
  o.eval_csvs = {dir / "eval.csv"};
  o.out = dir / "report.md";
  o.require_rows = {"vanilla", "vanilla+aug", "equi", "equi+aug", "hybrid", "hybrid+aug"};
  const auto md = cmd_report(o);
  EXPECT_EQ(md, slurp(dir / "report.md"));
  const auto lines = lines_of(md);
  int table_rows = 0;
  for (std::size_t i = 2; i < lines.size() && !lines[i].empty(); ++i) {
    ++table_rows;
    EXPECT_EQ(std::count(lines[i].begin(), lines[i].end(), '|'), 6) << lines[i];
  }
  EXPECT_EQ(table_rows, 6);
  EXPECT_NE(md.find("vanilla+aug <= equi: holds"), std::string::npos) << md;
  EXPECT_NE(md.find("equi <= vanilla: holds"), std::string::npos);
  EXPECT_NE(md.find("hybrid+aug <= hybrid: holds"), std::string::npos);

  o.require_rows.push_back("hybrid2");
  o.require_rows.push_back("equi-lift3d");
  try {
    cmd_report(o);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()), "missing rows: hybrid2 equi-lift3d");
  }
  o.eval_csvs = {dir / "nope.csv"};
  EXPECT_THROW(cmd_report(o), ValidationError);
}

TEST(Report, SmallMarginIsInconclusive) {
  const auto checks = ordering_checks({row("vanilla+aug", 1, 100, 1, 1), row("equi", 1, 102, 1, 1)});
  ASSERT_EQ(checks.size(), 1u);
  EXPECT_TRUE(checks[0].holds);
  EXPECT_FALSE(checks[0].conclusive);
}

TEST(Cli, ExitCodesAndOneLineErrors) {
  TempDir dir("cli_errors");
  const std::regex one_line(R"(error code=[a-z-]+ message="[^\n]*"\n)");

  auto r = run_cli("", dir.path());
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(std::regex_match(r.err, one_line)) << r.err;

  r = run_cli("train --model resnet", dir.path());
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(std::regex_match(r.err, one_line)) << r.err;

  r = run_cli("train --model vanilla", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(std::regex_match(r.err, one_line)) << r.err;
  EXPECT_NE(r.err.find("code=invalid-argument"), std::string::npos);

  r = run_cli("eval --checkpoints /nonexistent.json --test-original /x --test-rotated /y", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("code=io-error"), std::string::npos) << r.err;
}

TEST(Cli, EndToEndWithConfigFileOverride) {
  TempDir dir("cli_e2e");
  const auto data_dir = dir / "data";
  auto r = run_cli("gen-data --train-size 24 --test-size 6 --seed 3 --out " + data_dir.string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(slurp(data_dir / "train.jsonl")).size(), 25u);

  {
    std::ofstream cfg(dir / "exp.ini");
    cfg << "model = hybrid\nhybrid-mode = first-layer\nepochs = 5\nbatch-size = 8\nseeds = [7]\n"
        << "width = 16\nblocks = 1\nvn-channels = 4\nvn-layers = 2\n";
  }
  const std::string common = "--config " + (dir / "exp.ini").string() + " --train " + (data_dir / "train.jsonl").string();
  r = run_cli("train " + common + " --epochs 2 --aug --out " + (dir / "runs").string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck_path = dir / "runs" / "hybrid2_aug-seed7.ckpt.json";
  ASSERT_TRUE(fs::exists(ck_path)) << r.out;
  const auto ck = models::load_checkpoint(ck_path.string());
  EXPECT_EQ(ck.train.epochs, 2);  // flag beats file
  EXPECT_EQ(ck.train.batch_size, 8);
  EXPECT_EQ(ck.model.config().hybrid_mode, models::HybridMode::first_layer_features);
  EXPECT_EQ(ck.model.config().width, 16);
  EXPECT_TRUE(ck.augment);

  r = run_cli("eval --checkpoints " + ck_path.string() + " --test-original " + (data_dir / "test_original.jsonl").string() +
                  " --test-rotated " + (data_dir / "test_rotated.jsonl").string() + " --out " + (dir / "eval").string(),
              dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hybrid2+aug"), std::string::npos) << r.out;

  r = run_cli("audit --checkpoints " + ck_path.string() + " --dataset " + (data_dir / "test_original.jsonl").string() +
                  " --num-angles 3 --out " + (dir / "audit").string(),
              dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "audit" / "hybrid2_aug-seed7.audit.json"));

  r = run_cli("bench --checkpoints " + ck_path.string() + " --dataset " + (data_dir / "test_original.jsonl").string() +
                  " --inference-runs 10 --out " + (dir / "bench").string(),
              dir.path());
  ASSERT_EQ(r.code, 0) << r.err;

  r = run_cli("report --eval " + (dir / "eval" / "eval.csv").string() + " --audits " +
                  (dir / "audit" / "hybrid2_aug-seed7.audit.json").string() + " --out " + (dir / "report.md").string(),
              dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir / "report.md").find("| hybrid2+aug |"), std::string::npos);

  r = run_cli("report --eval " + (dir / "eval" / "eval.csv").string() + " --require vanilla --out " +
                  (dir / "r2.md").string(),
              dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("code=validation-error"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("missing rows: vanilla"), std::string::npos) << r.err;
}
