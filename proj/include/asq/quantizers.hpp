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

// Quantization math for activations and weights.
//
// Uniform:  x_int = clamp(round(x / s), n, p),  x_hat = x_int * s
// Adaptive: s_a = s * beta (one beta per sample), x_int = clamp(round(x / s_a), n, p),
//           x_hat = x_int * s (base mode) or x_int * s_a (adaptive mode)
//
// Gradients use the straight-through estimator. For one element with
// v = x / s_a the step gradient is
//   d x_hat / d s_a = -v + round(v)   if n <= v <= p
//                   = n               if v < n
//                   = p               if v > p
// and the chain rule through s_a = s * beta gives ds = g_sa * beta and
// dbeta = g_sa * s. Step, clip and beta gradients are multiplied by
// g = 1 / sqrt(N * p) (N = element count) unless gradient scaling is off.
//
// round() is round-half-away-from-zero everywhere.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "asq/tensor.hpp"

namespace asq::quant {

double round_half_away(double v);

struct IntRange {
  std::int64_t n = 0;
  std::int64_t p = 0;
  int bits = 0;

  /// n = -2^(b-1), p = 2^(b-1) - 1
  static IntRange signed_range(int bits);
  /// n = 0, p = 2^b - 1
  static IntRange unsigned_range(int bits);
  bool contains(std::int64_t code) const { return code >= n && code <= p; }
  bool is_signed() const { return n < 0; }
  std::int64_t size() const { return p - n + 1; }
};

struct StepParam {
  double s = 1.0;
  bool grad_scale_enabled = true;
};

struct ClipParam {
  double alpha = 1.0;
};

enum class DequantMode { base, adaptive };

/// Integer codes plus their dequantised values.
struct QuantResult {
  std::vector<std::int32_t> codes;
  std::vector<double> values;
};

/// 1 / sqrt(count * p).
double grad_scale(std::int64_t count, std::int64_t p);

/// Per-element d x_hat / d s for v = x / s.
double step_gradient_term(double v, IntRange r);

QuantResult quant_dequant_uniform(std::span<const double> x, StepParam s, IntRange r);

struct UniformGrads {
  std::vector<double> dx;
  double ds = 0.0;
};

/// `samples` splits x into equal consecutive blocks for the reduction order;
/// the result equals asq_backward with beta = 1 for the same blocking.
UniformGrads uniform_backward(std::span<const double> x, StepParam s, IntRange r, std::span<const double> upstream,
                              std::int64_t samples = 1);

/// x holds beta.size() equally sized samples back to back.
QuantResult asq_forward(std::span<const double> x, StepParam s, std::span<const double> beta, IntRange r,
                        DequantMode mode);

struct AsqGrads {
  std::vector<double> dx;
  double ds = 0.0;
  std::vector<double> dbeta;
  /// Per sample: g * sum_j (d x_hat_j / d s_a) * upstream_j.
  std::vector<double> grad_sa;
  /// Per sample: grad_sa[i] * beta[i]; ds is their sum in sample order.
  std::vector<double> ds_per_sample;
};

AsqGrads asq_backward(std::span<const double> x, StepParam s, std::span<const double> beta, IntRange r,
                      std::span<const double> upstream);

/// s = 2 * mean(|x|) / sqrt(p); 1 for an all-zero sample.
StepParam step_init(std::span<const double> sample, IntRange r);

enum class LevelScheme { pot, post };

/// Level code: zero, or sign * alpha * base^(-exp) with base 2 (POT) or
/// sqrt(2) (POST).
struct LevelCode {
  int sign = 1;
  int exp = 0;
  bool zero = true;
};

struct LevelSet {
  std::vector<double> values;  // ascending
  std::vector<LevelCode> codes;  // parallel to values
  LevelScheme scheme = LevelScheme::post;
  int bits = 0;
  double alpha = 1.0;
  /// false for the b-bit code book, which lacks the smallest negative level.
  bool full = true;

  double min_positive() const;
};

/// Largest exponent index for b bits: 2^(b-1) - 1.
int max_exponent(int bits);
/// base^(-exp) computed exactly up to the final rounding of 1/sqrt(2).
double level_magnitude(LevelScheme scheme, int exp);

/// alpha * ({0} U {+-2^e : e = -2^(b-1)+1 .. 0}).
LevelSet pot_levels(ClipParam alpha, int bits);
/// alpha * ({0} U {+-sqrt(2)^e : e = -2^(b-1)+1 .. 0}).
LevelSet post_levels(ClipParam alpha, int bits);
LevelSet make_levels(LevelScheme scheme, ClipParam alpha, int bits, bool full);
/// Drops the smallest-magnitude negative level so 2^b codes remain.
LevelSet codebook_levels(const LevelSet& nominal);

struct LevelProjection {
  std::vector<LevelCode> codes;
  std::vector<double> values;
};

/// Nearest level in linear distance, ties toward the larger magnitude.
/// Values beyond +-alpha clip to +-alpha.
LevelProjection quantize_to_levels(std::span<const double> w, const LevelSet& levels);

/// d w_hat / d alpha summed against upstream: w_hat/alpha inside the clip
/// range, sign(w) outside; scaled by g with p = 2^(b-1) - 1 when enabled.
double alpha_backward(std::span<const double> w, const LevelSet& levels, std::span<const double> upstream,
                      bool grad_scale_enabled);

// ---- autograd wrappers -----------------------------------------------------

/// Uniform fake quantisation of x with a learnable scalar step tensor.
/// `samples` fixes the reduction blocking (the batch size for activations, 1
/// for weights). Optional `codes` receives the integer codes.
Tensor fake_quant_uniform(const Tensor& x, const Tensor& step, IntRange r, std::int64_t samples,
                          bool grad_scale_enabled, std::vector<std::int32_t>* codes = nullptr);

/// Adaptive fake quantisation; beta has one entry per sample (leading axis).
Tensor fake_quant_asq(const Tensor& x, const Tensor& step, const Tensor& beta, IntRange r, DequantMode mode,
                      bool grad_scale_enabled, std::vector<std::int32_t>* codes = nullptr);

/// Non-uniform (POT/POST) fake quantisation with a learnable clip threshold.
Tensor fake_quant_levels(const Tensor& w, const Tensor& alpha, LevelScheme scheme, int bits, bool full_levels,
                         bool grad_scale_enabled, LevelProjection* projection = nullptr);

/// Smooth surrogate used for finite-difference checks of the straight-through
/// gradients. While a scope is active the fake-quant ops freeze their rounding
/// residuals (or level choices) and clip decisions on the first forward pass
/// and replay them afterwards, so that the forward becomes
///   uniform/adaptive: s_a * (x / s_a + r)  (or s_a * n, s_a * p when clipped)
///   levels:           alpha * L + (w - w0) (or alpha * sign(w0) when clipped)
/// whose exact derivatives are the straight-through gradients.
class SurrogateScope {
 public:
  SurrogateScope();
  ~SurrogateScope();
  SurrogateScope(const SurrogateScope&) = delete;
  SurrogateScope& operator=(const SurrogateScope&) = delete;

  /// Stops recording and rewinds the replay cursor; call before every
  /// replayed forward pass.
  void freeze();

  struct Entry {
    double residual = 0.0;  // round(v) - v, or the unit level for level ops
    double origin = 0.0;    // w0 for level ops
    int clip = 0;           // -1 below, +1 above, 0 inside
  };
  std::vector<std::vector<Entry>>& tapes() { return tapes_; }
  /// Tape for the next fake-quant call and whether it is being replayed.
  std::pair<std::vector<Entry>*, bool> next_tape();

 private:
  std::vector<std::vector<Entry>> tapes_;
  std::size_t cursor_ = 0;
  bool frozen_ = false;
  SurrogateScope* previous_;
};

SurrogateScope* active_surrogate();

}  // namespace asq::quant
