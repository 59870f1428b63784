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
#include <span>
#include <vector>

#include "asq/tensor.hpp"

namespace asq::ops {

// Elementwise and reductions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);

/// x[N x F] + b[F], broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
/// x[N x C x H x W] + b[C].
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

/// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N x F] * w[O x F]^T, the fully-connected layer product.
Tensor linear(const Tensor& x, const Tensor& w);

struct Conv2dGeometry {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};

/// Cross-correlation (no kernel flip) of x[N x Cin x H x W] with
/// w[Cout x Cin x Kh x Kw].
Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geometry);

/// Affine normalisation with fixed statistics; mean/var are constants.
Tensor batchnorm_inference(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                           const Tensor& beta, double eps = 1e-5);

/// Normalisation with batch statistics over (N, H, W). Writes the batch
/// mean and unbiased variance into the running buffers with the given momentum.
Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                       Tensor& running_var, double momentum = 0.1, double eps = 1e-5);

/// [N x C x H x W] -> [N x C].
Tensor global_avg_pool(const Tensor& x);

/// Option-A ResNet shortcut: spatial subsampling by `stride` and zero padding
/// of the channel axis up to `out_channels` (split evenly on both sides).
Tensor shortcut_pad(const Tensor& x, std::int64_t stride, std::int64_t out_channels);

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean of squared differences.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace asq::ops
