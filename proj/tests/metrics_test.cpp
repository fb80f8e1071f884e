// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "eqlift/data/dataset.hpp"
#include "eqlift/metrics.hpp"
#include "test_support.hpp"

using namespace eqlift;
using namespace eqlift::metrics;
using eqlift::testing::random_angle;
using eqlift::testing::random_pose2;
using eqlift::testing::random_pose3;

namespace {

Pose3D single(double x, double y, double z) {
  Eigen::MatrixX3d j(1, 3);
  j << x, y, z;
  return Pose3D(j);
}

Pose3D similarity(const Pose3D& p, double s, const Mat3& r, const Vec3& t) {
  Eigen::MatrixX3d j = s * p.joints * r.transpose();
  j.rowwise() += t.transpose();
  return Pose3D(j);
}

}  // namespace

TEST(Mpjpe, Examples) {
  EXPECT_DOUBLE_EQ(mpjpe(single(0, 0, 0), single(3, 4, 0)), 5.0);
  Eigen::MatrixX3d a = Eigen::MatrixX3d::Zero(2, 3);
  Eigen::MatrixX3d b(2, 3);
  b << 1, 0, 0, 0, 0, 3;
  EXPECT_DOUBLE_EQ(mpjpe(Pose3D(a), Pose3D(b)), 2.0);
  EXPECT_THROW(mpjpe(Pose3D(a), single(0, 0, 0)), InvalidArgument);
}

TEST(Mpjpe, MetricAxioms) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_pose3(rng, 17, 100.0), b = random_pose3(rng, 17, 100.0), c = random_pose3(rng, 17, 100.0);
    EXPECT_EQ(mpjpe(a, a), 0.0);
    EXPECT_GT(mpjpe(a, b), 0.0);
    EXPECT_DOUBLE_EQ(mpjpe(a, b), mpjpe(b, a));
    EXPECT_LE(mpjpe(a, c), mpjpe(a, b) + mpjpe(b, c) + 1e-9);
  }
}

TEST(PaMpjpe, NeverExceedsMpjpe) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto gt = random_pose3(rng, 17, 100.0);
    const auto pred = random_pose3(rng, 17, 100.0);
    EXPECT_LE(pa_mpjpe(gt, pred), mpjpe(gt, pred) + 1e-9);
  }
}

TEST(PaMpjpe, InvariantToSimilarityOfPrediction) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const auto gt = random_pose3(rng, 17, 100.0);
    const auto pred = random_pose3(rng, 17, 100.0);
    const Mat3 r = Eigen::Quaterniond::UnitRandom().toRotationMatrix();
    const auto moved = similarity(pred, std::exp(u(rng)), r, Vec3(100 * u(rng), 100 * u(rng), 100 * u(rng)));
    EXPECT_NEAR(pa_mpjpe(gt, moved), pa_mpjpe(gt, pred), 1e-8);
    // exact similarity copies align perfectly
    EXPECT_LE(pa_mpjpe(gt, similarity(gt, 0.5, r, Vec3(1, 2, 3))), 1e-9);
  }
}

TEST(MaskedMpjpe, Columns) {
  const auto a = single(0, 0, 0), b = single(3, 4, -2);
  EXPECT_DOUBLE_EQ(masked_mpjpe(a, b, ColumnMask::xy), 5.0);
  EXPECT_DOUBLE_EQ(masked_mpjpe(a, b, ColumnMask::z), 2.0);
  EXPECT_DOUBLE_EQ(masked_mpjpe(a, b, ColumnMask::all), std::sqrt(29.0));
}

TEST(EquivarianceError, ExactForEquivariantMapAndMeasuredOtherwise) {
  // (x, y) -> (x, y, 0) commutes with in-plane rotation.
  auto embed = [](const Pose2D& p) {
    Eigen::MatrixX3d j = Eigen::MatrixX3d::Zero(p.size(), 3);
    j.leftCols<2>() = p.joints;
    return Pose3D(j);
  };
  std::mt19937_64 rng(4);
  const auto fixed = random_pose3(rng, 17, 50.0);
  auto constant = [&](const Pose2D&) { return fixed; };
  for (int i = 0; i < 20; ++i) {
    const auto x = random_pose2(rng, 17, 100.0);
    const double theta = random_angle(rng);
    EXPECT_LE(equivariance_error(embed, x, theta), 1e-12);
    const auto r3 = embed_so2_in_so3(rotation2_from_angle(theta));
    EXPECT_NEAR(equivariance_error(constant, x, theta), mpjpe(fixed, apply_rotation3(fixed, r3)), 1e-12);
    EXPECT_EQ(equivariance_error(constant, x, theta, ColumnMask::z), 0.0);
  }
  EXPECT_EQ(equivariance_error(constant, random_pose2(rng, 17), 0.0), 0.0);
}

TEST(Aggregate, MeanAndSampleStd) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto ms = mean_std(v);
  EXPECT_DOUBLE_EQ(ms.mean, 2.0);
  ASSERT_TRUE(ms.std.has_value());
  EXPECT_DOUBLE_EQ(*ms.std, 1.0);
  const std::vector<double> one{4.5};
  EXPECT_FALSE(mean_std(one).std.has_value());
  EXPECT_THROW(mean_std(std::vector<double>{}), InvalidArgument);

  std::vector<MetricReport> reps(3);
  for (int i = 0; i < 3; ++i) {
    reps[i].split = "test";
    reps[i].sample_count = 10;
    reps[i].protocol1_mean = 1.0 + i;
    reps[i].protocol2_mean = 10.0 * (1 + i);
  }
  const auto agg = aggregate(reps);
  EXPECT_DOUBLE_EQ(agg.protocol1_mean, 2.0);
  EXPECT_DOUBLE_EQ(*agg.protocol1_std, 1.0);
  EXPECT_DOUBLE_EQ(agg.protocol2_mean, 20.0);
  EXPECT_DOUBLE_EQ(*agg.protocol2_std, 10.0);
  EXPECT_EQ(agg.per_seed_protocol1, (std::vector<double>{1, 2, 3}));
  EXPECT_FALSE(agg.equivariance_error_mean.has_value());
  EXPECT_FALSE(aggregate(std::span<const MetricReport>(reps.data(), 1)).protocol1_std.has_value());
}

TEST(Evaluate, ZeroPredictorMatchesIndependentComputation) {
  auto ds = data::generate_dataset(data::h36m17_skeleton(), data::Camera{}, 3, 25, "test");
  models::ModelConfig cfg = models::preset(models::ModelKind::vanilla);
  cfg.zero_init_output = true;
  models::LifterModel m(cfg);
  double expected = 0.0;
  for (const auto& s : ds.samples) expected += s.target3d.joints.rowwise().norm().mean();
  expected /= 25.0;
  EvalOptions opt;
  opt.equivariance = true;
  const auto rep = evaluate(m, ds, opt);
  EXPECT_NEAR(rep.protocol1_mean, expected, 1e-9);
  EXPECT_EQ(rep.sample_count, 25u);
  EXPECT_EQ(*rep.equivariance_error_mean, 0.0);
}

TEST(Evaluate, RejectsEmptyAndMismatchedData) {
  models::LifterModel m(models::preset(models::ModelKind::vanilla));
  data::Dataset empty;
  EXPECT_THROW(evaluate(m, empty), InvalidArgument);
  auto ds = data::generate_dataset(data::h36m17_skeleton(), data::Camera{}, 3, 2, "test");
  models::LifterModel small(models::preset(models::ModelKind::vanilla, 16));
  EXPECT_THROW(evaluate(small, ds), ValidationError);
}

TEST(PaMpjpe, CollapsedPredictionFitsCentroidOrLine) {
  std::mt19937_64 rng(5);
  const auto gt = random_pose3(rng, 17, 100.0);
  const Pose3D zero(Eigen::MatrixX3d::Zero(17, 3));
  const Eigen::RowVector3d mu = gt.joints.colwise().mean();
  const double to_centroid = (gt.joints.rowwise() - mu).rowwise().norm().mean();
  EXPECT_NEAR(pa_mpjpe(gt, zero), to_centroid, 1e-9);

  // Collinear prediction: at least as good as the centroid, and the closed
  // form beats a random search over the image vector c.
  Eigen::MatrixX3d line(17, 3);
  for (int i = 0; i < 17; ++i) line.row(i) = Eigen::RowVector3d(1, 2, -1) * std::sin(i);
  const double got = pa_mpjpe(gt, Pose3D(line));
  EXPECT_LE(got, to_centroid);
  const Eigen::VectorXd u = (line.rowwise() - line.colwise().mean()).col(0);
  const Eigen::MatrixX3d b = gt.joints.rowwise() - mu;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20000; ++k) {
    const Vec3 c = Vec3::Random() * 200.0;
    best_sq = std::min(best_sq, (u * c.transpose() - b).squaredNorm());
  }
  const Eigen::RowVector3d c_opt = (b.transpose() * u).transpose() / u.squaredNorm();
  EXPECT_LE((u * c_opt - b).squaredNorm(), best_sq + 1e-9);
  EXPECT_NEAR(got, (u * c_opt - b).rowwise().norm().mean(), 1e-9);
}
