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

// Shared helpers for the unit tests: random tensors and a central-difference
// gradient oracle that is independent of the autograd engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "asq/rng.hpp"
#include "asq/tensor.hpp"

namespace asq::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

inline Tensor integer_tensor(Shape shape, Rng& rng, int lo, int hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<double>(std::uniform_int_distribution<int>(lo, hi)(rng));
  return t;
}

/// d f / d t by central differences with step h, perturbing t's storage in place.
inline std::vector<double> numeric_grad(Tensor t, const std::function<double()>& f, double h = 1e-3) {
  std::vector<double> g(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double orig = t[i];
    t[i] = orig + h;
    const double fp = f();
    t[i] = orig - h;
    const double fm = f();
    t[i] = orig;
    g[static_cast<std::size_t>(i)] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

inline std::vector<double> grad_copy(const Tensor& t) {
  auto g = t.grad();
  return {g.begin(), g.end()};
}

}  // namespace asq::testing
