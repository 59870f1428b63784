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

#include "asq/kernels/kernels.hpp"

namespace asq::kernels {

namespace scalar {
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate);
void post_axpy(PostWeight w, const std::int32_t* codes, std::int64_t n, LutRow lut, bool literal_floor,
               std::int64_t* acc);
void int_axpy(std::int32_t w, const std::int32_t* codes, std::int64_t n, std::int64_t* acc);
}  // namespace scalar

#ifdef ASQ_HAVE_AVX2
namespace avx2 {
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c,
          bool accumulate);
void post_axpy(PostWeight w, const std::int32_t* codes, std::int64_t n, LutRow lut, bool literal_floor,
               std::int64_t* acc);
void int_axpy(std::int32_t w, const std::int32_t* codes, std::int64_t n, std::int64_t* acc);
}  // namespace avx2
#endif

}  // namespace asq::kernels
