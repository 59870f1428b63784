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

#include "variants.hpp"

namespace asq::kernels::scalar {

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate)
      for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

void post_axpy(PostWeight w, const std::int32_t* codes, std::int64_t n, LutRow lut, bool literal_floor,
               std::int64_t* acc) {
  if (w.zero) return;
  if (w.exp % 2 == 0) {
    const int k = w.exp / 2;
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int32_t r = literal_floor ? (codes[j] >> k) : rounding_shift(codes[j], k);
      acc[j] += w.sign < 0 ? -r : r;
    }
    return;
  }
  for (std::int64_t j = 0; j < n; ++j) {
    const std::int32_t r = lut.entries[codes[j] - lut.a_min];
    acc[j] += w.sign < 0 ? -r : r;
  }
}

void int_axpy(std::int32_t w, const std::int32_t* codes, std::int64_t n, std::int64_t* acc) {
  for (std::int64_t j = 0; j < n; ++j) acc[j] += static_cast<std::int64_t>(w) * codes[j];
}

}  // namespace asq::kernels::scalar
