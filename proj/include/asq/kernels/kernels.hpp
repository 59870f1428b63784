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

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// when the build and the CPU allow it, an AVX2 version chosen at runtime.
// The two versions perform the same arithmetic in the same per-element order,
// so their results are bitwise identical; tests/test_kernels.cpp enforces it.

#include <cstdint>
#include <string_view>

namespace asq::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
/// True when the AVX2 variants were compiled in and the CPU supports them.
bool avx2_available();
/// Detected at startup; `ASQ_ISA=scalar` in the environment forces the
/// reference kernels.
Isa active_isa();
void set_isa(Isa isa);

/// Temporarily switches the active instruction set.
class IsaScope {
 public:
  explicit IsaScope(Isa isa) : previous_(active_isa()) { set_isa(isa); }
  ~IsaScope() { set_isa(previous_); }
  IsaScope(const IsaScope&) = delete;
  IsaScope& operator=(const IsaScope&) = delete;

 private:
  Isa previous_;
};

/// c[m x n] = a[m x k] * b[k x n], or c += a * b when `accumulate` is set.
/// Row-major, densely packed.
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate);

/// One POST-coded weight: magnitude sqrt(2)^-exp, or zero.
struct PostWeight {
  int sign = 1;
  int exp = 0;
  bool zero = false;
};

/// Odd-exponent table row: entry[a - a_min] = round(a * 2^(-exp/2)) for one odd
/// exponent. Rows carry one trailing pad entry so vector gathers stay in bounds.
struct LutRow {
  const std::int16_t* entries = nullptr;
  std::int32_t a_min = 0;
};

/// sign(a) * ((|a| + 2^(k-1)) >> k), i.e. a / 2^k rounded half away from zero;
/// a itself for k = 0.
inline std::int32_t rounding_shift(std::int32_t a, int k) {
  if (k == 0) return a;
  const std::int32_t mag = a < 0 ? -a : a;
  const std::int32_t r = (mag + (std::int32_t{1} << (k - 1))) >> k;
  return a < 0 ? -r : r;
}

/// acc[j] += w * codes[j] with w applied by shift (even exponent) or table
/// lookup (odd exponent). `literal_floor` replaces the rounding shift by a
/// plain arithmetic shift. Callers guarantee the accumulators cannot overflow.
void post_axpy(PostWeight w, const std::int32_t* codes, std::int64_t n, LutRow lut, bool literal_floor,
               std::int64_t* acc);

/// acc[j] += w * codes[j] using integer multiplies (uniform-code baseline).
void int_axpy(std::int32_t w, const std::int32_t* codes, std::int64_t n, std::int64_t* acc);

}  // namespace asq::kernels
