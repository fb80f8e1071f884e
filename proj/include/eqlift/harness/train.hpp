// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "eqlift/data/dataset.hpp"
#include "eqlift/models/checkpoint.hpp"
#include "eqlift/models/lifter.hpp"
#include "eqlift/nn/ops.hpp"
#include "eqlift/nn/optim.hpp"

namespace eqlift::harness {

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean batch MSE in normalized units
  double lr = 0.0;
  double wall_ms = 0.0;
};

// Sees each training batch after augmentation: epoch, the sample indices in
// batch order, and the packed [B, N, 2] input tensor.
using BatchObserver = std::function<void(int, const std::vector<std::size_t>&, const nn::Tensor&)>;

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  BatchObserver on_batch;
};

// Fits normalization on the training split, then runs cfg.epochs epochs of
// shuffled mini-batch MSE training with Adam and per-epoch exponential
// learning-rate decay. With `augment`, every sample in every epoch is rotated
// by its own theta ~ U[0, 2pi). Checkpoint state (adam step, epoch) is
// updated in place.
inline std::vector<EpochRecord> train(models::Checkpoint& ck, const data::Dataset& ds, const TrainHooks& hooks = {}) {
  ck.train.validate();
  if (ds.samples.empty()) throw InvalidArgument("training set is empty");
  auto& model = ck.model;
  if (ds.meta.joints != model.joints()) {
    throw ValidationError("model expects " + std::to_string(model.joints()) + " joints, training set has " +
                          std::to_string(ds.meta.joints));
  }
  const auto inputs = ds.inputs();
  const auto targets = ds.targets();
  model.normalization() = models::fit_normalization(inputs, targets, model.config().standardization);
  const double target_scale = model.normalization().target_scale;

  std::mt19937_64 rng(ck.train.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const std::size_t n = static_cast<std::size_t>(model.joints());
  const std::size_t batch_size = static_cast<std::size_t>(ck.train.batch_size);

  std::vector<std::size_t> order(ds.samples.size());
  std::vector<EpochRecord> log;
  for (int epoch = ck.epoch; epoch < ck.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = nn::lr_at_epoch(ck.train, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(start + count));
      nn::Tensor x({count, n, 2});
      nn::Tensor y({count, n, 3});
      for (std::size_t b = 0; b < count; ++b) {
        Pose2D in = inputs[idx[b]];
        Pose3D out = targets[idx[b]];
        if (ck.augment) {
          const auto r = rotation2_from_angle(angle(rng));
          in = apply_rotation2(in, r);
          out = apply_rotation3(out, embed_so2_in_so3(r));
        }
        for (std::size_t j = 0; j < n; ++j) {
          x[(b * n + j) * 2] = in.joints(j, 0);
          x[(b * n + j) * 2 + 1] = in.joints(j, 1);
          for (std::size_t c = 0; c < 3; ++c) y[(b * n + j) * 3 + c] = out.joints(j, c) / target_scale;
        }
      }
      if (hooks.on_batch) hooks.on_batch(epoch, idx, x);

      auto pred = model.forward(x, models::Mode::train, &rng);
      auto loss = nn::mse_loss(pred, nn::constant(std::move(y)));
      const double value = loss->value[0];
      if (!std::isfinite(value)) {
        throw NumericalFailure("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batches));
      }
      nn::zero_grad(model.parameters());
      try {
        nn::backward(loss);
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batches) + ")");
      }
      nn::adam_step(model.parameters(), ++ck.adam_steps, lr);
      loss_sum += value;
      ++batches;
    }
    ck.epoch = epoch + 1;
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), lr,
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()};
    log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return log;
}

// Fresh checkpoint for a model config and training config; the model's
// initialization seed follows the training seed.
inline models::Checkpoint make_checkpoint(models::ModelConfig mcfg, const nn::TrainConfig& tcfg, bool augment) {
  mcfg.init_seed = tcfg.seed;
  mcfg.dropout_rate = tcfg.dropout_rate;
  models::Checkpoint ck{models::LifterModel(mcfg), tcfg};
  ck.augment = augment;
  return ck;
}

}  // namespace eqlift::harness
