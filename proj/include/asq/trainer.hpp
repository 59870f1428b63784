/**
 * Copyright 2026 The ASQ Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "asq/model.hpp"
#include "asq/rng.hpp"

namespace asq::train {

/// Images [N x C x H x W] (normalised) with integer labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::int64_t classes = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  /// Copies the listed samples into one batch.
  Tensor gather(std::span<const std::int64_t> idx) const;
  std::vector<int> gather_labels(std::span<const std::int64_t> idx) const;
};

/// Per-channel mean/std applied after scaling bytes to [0, 1].
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalization idx_default();    // single channel
  static Normalization cifar_default();  // three channels
};

/// IDX image (magic 0x00000803) and label (0x00000801) files, big-endian.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Normalization& norm,
                 std::int64_t limit = -1);

/// CIFAR-10 binary batches: 3073-byte records (label, then 3x32x32 bytes).
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files, const Normalization& norm,
                          std::int64_t limit = -1);

struct SynthSpec {
  std::int64_t samples = 256;
  std::int64_t classes = 4;
  std::int64_t channels = 3;
  std::int64_t size = 16;
  /// Standard deviation of the per-sample Gaussian noise added to the
  /// class prototype.
  double noise = 0.5;
};

/// Class prototypes (smooth random patterns) plus Gaussian noise. Balanced
/// labels in round-robin order; fully determined by the seed. `prototype_seed`
/// fixes the class patterns so train/test splits share them.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t prototype_seed, std::uint64_t sample_seed);

Dataset take(const Dataset& d, std::int64_t begin, std::int64_t count);

/// lr0 * (1 + cos(pi t / T)) / 2 for 0 <= t <= T.
double cosine_lr(std::int64_t t, std::int64_t total, double lr0);

/// Momentum buffers keyed by parameter name.
struct SgdState {
  std::map<std::string, std::vector<double>> velocity;
};

/// v <- momentum v + grad + wd * param; param <- param - lr v. Weight decay is
/// skipped for quantiser steps and adapter biases; steps are then projected to
/// at least 1e-8. Parameters without a gradient buffer are left alone.
void sgd_step(const std::vector<qat::Param>& params, SgdState& state, double lr, double momentum,
              double weight_decay);

inline constexpr double kStepFloor = 1e-8;

/// Pad-4 random crop and horizontal flip, per sample.
Tensor augment(const Tensor& batch, Rng& rng, bool crop, bool flip);

struct TrainConfig {
  std::int64_t epochs = 1;
  std::int64_t batch_size = 32;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  bool augment_crop = false;
  bool augment_flip = false;
  /// Excludes adapter parameters from the update (they keep their init).
  bool freeze_adapter = false;
  std::int64_t eval_batch_size = 256;
  std::filesystem::path checkpoint;  // written after the last epoch when set
};

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
  std::optional<double> top5;  // when classes >= 5
};

struct EpochRecord {
  std::int64_t epoch = 0;
  EvalResult train;
  std::optional<EvalResult> test;
  double lr = 0.0;
  std::vector<double> mean_beta;  // parallel to History::beta_layers
};

struct History {
  std::vector<std::string> beta_layers;  // layers with an adaptive quantiser
  std::vector<EpochRecord> rows;

  /// Header: epoch,split,loss,top1,top5,lr,mean_beta_<layer>...
  void write_csv(std::ostream& os) const;
};

/// Top-1/top-5 and mean cross-entropy of precomputed logits [N x classes].
/// Ties go to the lowest class index.
EvalResult score_logits(const Tensor& logits, std::span<const int> labels, std::int64_t classes);

/// Ties go to the lowest class index.
EvalResult evaluate(model::Model& m, const Dataset& data, std::int64_t batch_size = 256);

/// Logits for every sample, [N x classes].
Tensor predict(model::Model& m, const Tensor& images, std::int64_t batch_size = 256);

History train(model::Model& m, const Dataset& train_data, const Dataset* test_data, const TrainConfig& config);

}  // namespace asq::train
