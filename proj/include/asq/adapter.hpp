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
#include <string>
#include <vector>

#include "asq/checkpoint.hpp"
#include "asq/quantizers.hpp"
#include "asq/tensor.hpp"

namespace asq::adapter {

/// mean(|x|), std(x), max(|x|), fraction of |x| > s*p.
inline constexpr std::int64_t kFeatureCount = 4;

enum class OutputMap { exp, affine_plus_one };

/// Small MLP mapping per-sample activation statistics to the adaptive factor.
/// depth 2: F -> H (relu) -> 1; depth 1: F -> 1.
struct AdapterParams {
  int depth = 2;
  int hidden = 16;
  OutputMap output_map = OutputMap::exp;
  Tensor w1;  // [F x H] or [F x 1]
  Tensor b1;  // [H] or [1]
  Tensor w2;  // [H x 1], depth 2 only
  Tensor b2;  // [1], depth 2 only

  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;
  /// Loads every tensor of named_parameters(prefix) from a checkpoint.
  void load(const std::vector<NamedTensor>& tensors, const std::string& prefix);
  std::int64_t parameter_count() const;
};

/// Hidden weights ~ U(-1/sqrt(F), 1/sqrt(F)); hidden bias and the whole final
/// layer are zero, so beta is exactly 1 for every input after init.
AdapterParams adapter_init(int depth, int hidden, std::uint64_t seed, OutputMap map = OutputMap::exp);

/// Per-sample statistics of x (leading axis is the batch) -> [N x 4].
/// Differentiable in x except the clip fraction, which is piecewise constant.
Tensor featurize(const Tensor& x, double step, quant::IntRange range);

/// features [N x 4] -> beta [N], strictly positive.
Tensor adapter_forward(const Tensor& features, const AdapterParams& params);

}  // namespace asq::adapter
