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

// Compiled with -mavx2; only reached after the runtime CPU check.

#include <immintrin.h>

#include "variants.hpp"

namespace asq::kernels::avx2 {

// Separate multiply and add (no FMA) keeps every element's rounding sequence
// identical to the scalar loop.
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    std::int64_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      __m256d c1 = accumulate ? _mm256_loadu_pd(crow + j + 4) : _mm256_setzero_pd();
      __m256d c2 = accumulate ? _mm256_loadu_pd(crow + j + 8) : _mm256_setzero_pd();
      __m256d c3 = accumulate ? _mm256_loadu_pd(crow + j + 12) : _mm256_setzero_pd();
      for (std::int64_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(arow + p);
        const double* brow = b + p * n + j;
        c0 = _mm256_add_pd(c0, _mm256_mul_pd(av, _mm256_loadu_pd(brow)));
        c1 = _mm256_add_pd(c1, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 4)));
        c2 = _mm256_add_pd(c2, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 8)));
        c3 = _mm256_add_pd(c3, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 12)));
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (std::int64_t p = 0; p < k; ++p)
        c0 = _mm256_add_pd(c0, _mm256_mul_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * n + j)));
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
      double acc = accumulate ? crow[j] : 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc = acc + arow[p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

namespace {

inline void add_widened(__m256i v32, std::int64_t* acc) {
  const __m256i lo = _mm256_cvtepi32_epi64(_mm256_castsi256_si128(v32));
  const __m256i hi = _mm256_cvtepi32_epi64(_mm256_extracti128_si256(v32, 1));
  auto* p = reinterpret_cast<__m256i*>(acc);
  _mm256_storeu_si256(p, _mm256_add_epi64(_mm256_loadu_si256(p), lo));
  _mm256_storeu_si256(p + 1, _mm256_add_epi64(_mm256_loadu_si256(p + 1), hi));
}

inline __m256i apply_sign(__m256i v, int sign) {
  return sign < 0 ? _mm256_sub_epi32(_mm256_setzero_si256(), v) : v;
}

}  // namespace

void post_axpy(PostWeight w, const std::int32_t* codes, std::int64_t n, LutRow lut, bool literal_floor,
               std::int64_t* acc) {
  if (w.zero) return;
  std::int64_t j = 0;
  if (w.exp % 2 == 0) {
    const int k = w.exp / 2;
    const __m128i count = _mm_cvtsi32_si128(k);
    const __m256i half = _mm256_set1_epi32(k > 0 ? (1 << (k - 1)) : 0);
    for (; j + 8 <= n; j += 8) {
      const __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(codes + j));
      __m256i r;
      if (k == 0) {
        r = a;
      } else if (literal_floor) {
        r = _mm256_sra_epi32(a, count);
      } else {
        const __m256i mag = _mm256_srl_epi32(_mm256_add_epi32(_mm256_abs_epi32(a), half), count);
        r = _mm256_sign_epi32(mag, a);
      }
      add_widened(apply_sign(r, w.sign), acc + j);
    }
    for (; j < n; ++j) {
      const std::int32_t r = literal_floor ? (codes[j] >> k) : rounding_shift(codes[j], k);
      acc[j] += w.sign < 0 ? -r : r;
    }
    return;
  }
  const __m256i bias = _mm256_set1_epi32(lut.a_min);
  const int* base = reinterpret_cast<const int*>(lut.entries);
  for (; j + 8 <= n; j += 8) {
    const __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(codes + j));
    const __m256i idx = _mm256_sub_epi32(a, bias);
    // 16-bit entries: gather 32 bits at a 2-byte stride, then sign-extend the
    // low half.
    __m256i r = _mm256_i32gather_epi32(base, idx, 2);
    r = _mm256_srai_epi32(_mm256_slli_epi32(r, 16), 16);
    add_widened(apply_sign(r, w.sign), acc + j);
  }
  for (; j < n; ++j) {
    const std::int32_t r = lut.entries[codes[j] - lut.a_min];
    acc[j] += w.sign < 0 ? -r : r;
  }
}

void int_axpy(std::int32_t w, const std::int32_t* codes, std::int64_t n, std::int64_t* acc) {
  const __m256i wv = _mm256_set1_epi64x(w);
  std::int64_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256i a = _mm256_cvtepi32_epi64(_mm_loadu_si128(reinterpret_cast<const __m128i*>(codes + j)));
    auto* p = reinterpret_cast<__m256i*>(acc + j);
    _mm256_storeu_si256(p, _mm256_add_epi64(_mm256_loadu_si256(p), _mm256_mul_epi32(wv, a)));
  }
  for (; j < n; ++j) acc[j] += static_cast<std::int64_t>(w) * codes[j];
}

}  // namespace asq::kernels::avx2
