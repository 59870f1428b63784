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

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "asq/error.hpp"
#include "variants.hpp"

namespace asq::kernels {

namespace {

Isa detect() {
  if (const char* env = std::getenv("ASQ_ISA"); env && std::strcmp(env, "scalar") == 0) return Isa::scalar;
  return avx2_available() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if defined(ASQ_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_available())
    fail(ErrorKind::invalid_argument, "AVX2 kernels are not available on this build or CPU");
  active().store(isa, std::memory_order_relaxed);
}

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate) {
#ifdef ASQ_HAVE_AVX2
  if (active_isa() == Isa::avx2) return avx2::gemm(m, n, k, a, b, c, accumulate);
#endif
  scalar::gemm(m, n, k, a, b, c, accumulate);
}

void post_axpy(PostWeight w, const std::int32_t* codes, std::int64_t n, LutRow lut, bool literal_floor,
               std::int64_t* acc) {
#ifdef ASQ_HAVE_AVX2
  if (active_isa() == Isa::avx2) return avx2::post_axpy(w, codes, n, lut, literal_floor, acc);
#endif
  scalar::post_axpy(w, codes, n, lut, literal_floor, acc);
}

void int_axpy(std::int32_t w, const std::int32_t* codes, std::int64_t n, std::int64_t* acc) {
#ifdef ASQ_HAVE_AVX2
  if (active_isa() == Isa::avx2) return avx2::int_axpy(w, codes, n, acc);
#endif
  scalar::int_axpy(w, codes, n, acc);
}

}  // namespace asq::kernels
