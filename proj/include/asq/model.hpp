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

// Desk-scale model zoo: a five-layer CNN ("tinynet") and a ResNet20-shaped
// network (three stages of three basic blocks, option-A shortcuts).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "asq/checkpoint.hpp"
#include "asq/qat.hpp"

namespace asq::model {

enum class Arch { tinynet, resnet20 };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct ModelSpec {
  Arch arch = Arch::tinynet;
  std::int64_t in_channels = 3;
  std::int64_t classes = 10;
  /// Channels of the first stage; later stages double it.
  std::int64_t width = 16;
  std::int64_t image_size = 32;
};

struct BatchNorm {
  std::string name;
  Tensor gamma, beta, running_mean, running_var;

  /// Batch statistics (updating the running buffers) or the frozen running ones.
  Tensor forward(const Tensor& x, bool batch_stats);
};

class Model {
 public:
  ModelSpec spec;
  qat::QuantPolicy policy;
  std::vector<qat::QLayer> layers;  // first is the stem conv, last the classifier
  std::vector<BatchNorm> norms;
  /// Use batch statistics in BatchNorm while training. Float pre-training sets
  /// it; quantised models keep the float checkpoint's statistics frozen.
  bool bn_batch_stats = true;

  /// `training` enables BN batch statistics (when allowed) and lazy step
  /// initialisation. `block_outputs`, when given, receives one tensor per
  /// residual block (per conv stage for tinynet).
  Tensor forward(const Tensor& x, bool training, std::vector<Tensor>* block_outputs = nullptr);

  /// Runs one forward pass that initialises all activation steps.
  void calibrate(const Tensor& x);

  /// Name of the first layer whose output (or BatchNorm output) is not
  /// finite on x, or "" when everything is finite.
  std::string first_nonfinite_layer(const Tensor& x);

  std::vector<qat::Param> parameters() const;
  /// Parameters, BN buffers, step flags and meta.* description tensors.
  std::vector<NamedTensor> state() const;

  qat::QLayer& layer(std::string_view name);
  const qat::QLayer& layer(std::string_view name) const;
  std::int64_t block_count() const;
  void reset_beta_stats();

 private:
  bool check_finite_ = false;
  std::string nonfinite_;
  Tensor check(const Tensor& t, const std::string& name);
};

/// Random float model (Kaiming-normal conv/linear weights, unit BN).
Model make_float_model(const ModelSpec& spec, std::uint64_t seed);

/// Wraps every layer of a float checkpoint's architecture per the policy.
/// Tensor names and shapes must match the architecture.
Model build_model(const ModelSpec& spec, const qat::QuantPolicy& policy, const std::vector<NamedTensor>& float_ckpt,
                  std::uint64_t seed);

/// Reconstructs a model (float or quantised) from state().
Model load_model(const std::vector<NamedTensor>& state);

/// Reads the ModelSpec recorded in a checkpoint's meta tensors.
ModelSpec read_spec(const std::vector<NamedTensor>& state);
qat::QuantPolicy read_policy(const std::vector<NamedTensor>& state);

}  // namespace asq::model
