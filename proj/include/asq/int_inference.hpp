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

// Integer-only inference for POST-coded weights. A weight sqrt(2)^(-e) times
// an activation code a is evaluated as a rounding shift of a by e/2 when e is
// even and as a table lookup round(a * 2^(-e/2)) when e is odd; products are
// summed in 64-bit accumulators and rescaled by alpha * s at the end.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "asq/kernels/kernels.hpp"
#include "asq/model.hpp"
#include "asq/quantizers.hpp"

namespace asq::intinf {

using kernels::PostWeight;

/// Rows for every odd exponent of the b_w-bit code book, columns for every
/// activation code of `range`.
struct OddExpLut {
  int bits_w = 0;
  quant::IntRange range;
  std::vector<int> exps;              // odd exponents, ascending
  std::vector<std::int16_t> entries;  // exps.size() rows of range.size() + 1 (last is padding)

  std::int64_t row_stride() const { return range.size() + 1; }
  std::int16_t at(int exp, std::int32_t a) const;
  kernels::LutRow row(int exp) const;
};

OddExpLut build_lut(int bits_w, quant::IntRange range);

/// sign * a * sqrt(2)^(-e) with the declared rounding: rounding shift for even
/// e (plain arithmetic shift when `literal_floor`), table lookup for odd e.
std::int64_t post_mul(PostWeight w, std::int32_t a, const OddExpLut& lut, bool literal_floor = false);

struct PostCodedWeights {
  Shape shape;
  std::vector<PostWeight> codes;
  double alpha = 1.0;
  int bits = 0;
};

/// Projects w onto the b-bit POST code book and records sign/exponent/zero.
PostCodedWeights encode_post(std::span<const double> w, Shape shape, double alpha, int bits);
std::vector<double> decode_post(const PostCodedWeights& w);

struct IntStats {
  std::int64_t lut_rows = 0;      // weight rows evaluated through the table
  std::int64_t shift_rows = 0;    // weight rows evaluated by shifting
  std::int64_t lut_lookups = 0;   // individual table reads
};

/// Throws an overflow error when k products of magnitude <= max_product could
/// exceed a signed 64-bit accumulator.
void check_accumulator_bound(std::int64_t k, std::int64_t max_product);

/// acc[m x n] = W[m x k] (POST) * A[k x n] (codes in lut.range).
std::vector<std::int64_t> int_matmul(const PostCodedWeights& w, std::span<const std::int32_t> a, std::int64_t n,
                                     const OddExpLut& lut, bool literal_floor = false, IntStats* stats = nullptr);

/// acc[m x n] = W[m x k] * A[k x n] with integer weight codes (uniform baseline).
std::vector<std::int64_t> int_matmul_uniform(std::span<const std::int32_t> w, std::int64_t m, std::int64_t k,
                                             std::span<const std::int32_t> a, std::int64_t n);

/// One exported layer: integer weights plus everything needed to code its
/// input. Uniform layers (the 8-bit first/last layers) use integer multiplies.
struct IntLayer {
  std::string name;
  bool post = true;
  int bits_w = 0;
  int bits_a = 0;
  double weight_scale = 1.0;  // alpha (POST) or step (uniform)
  double act_step = 1.0;
  PostCodedWeights post_weights;
  std::vector<std::int32_t> uniform_codes;
  Shape weight_shape;
  bool literal_floor = false;
  OddExpLut lut;
  std::shared_ptr<IntStats> stats = std::make_shared<IntStats>();

  /// post_weights viewed as [Cout x (everything else)].
  PostCodedWeights post_weights2d() const;
};

/// Float glue (BN, bias, adapters, pooling, skip adds) plus the integer layers.
struct IntModel {
  model::Model glue;
  std::vector<IntLayer> layers;

  /// Routes every quantised layer of `glue` through its integer layer.
  void install();
  IntStats total_stats() const;
};

/// Requires a scheme-2 model with initialised steps.
IntModel export_int_model(const model::Model& m, bool literal_floor = false);
Tensor int_infer(IntModel& im, const Tensor& images, std::int64_t batch_size = 256);

inline constexpr char kIntModelMagic[9] = "ASQINT01";
void save_int_model(const std::filesystem::path& path, const IntModel& im);
IntModel load_int_model(const std::filesystem::path& path);

struct BenchRow {
  std::int64_t size = 0;
  double shift_ns = 0.0;  // per multiply-accumulate, median over repeats
  double lut_ns = 0.0;
  double int_mul_ns = 0.0;
};

/// Square size x size x size products with 8-bit activations and 3-bit
/// weights: all-even exponents (shift only), mixed exponents (shift + table),
/// and integer multiplies.
std::vector<BenchRow> bench_post_vs_uniform(const std::vector<std::int64_t>& sizes, int repeats, std::uint64_t seed);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace asq::intinf
