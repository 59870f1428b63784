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

#include "asq/adapter.hpp"

#include <cmath>

#include "asq/ops.hpp"
#include "asq/rng.hpp"

namespace asq::adapter {

std::vector<NamedTensor> AdapterParams::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out{{prefix + "w1", w1}, {prefix + "b1", b1}};
  if (depth == 2) {
    out.push_back({prefix + "w2", w2});
    out.push_back({prefix + "b2", b2});
  }
  return out;
}

void AdapterParams::load(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (auto& [name, t] : named_parameters(prefix)) {
    const Tensor& src = find_tensor(tensors, name);
    if (src.shape() != t.shape())
      fail(ErrorKind::checkpoint, "tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                                      shape_str(t.shape()));
    auto dst = t;
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
}

std::int64_t AdapterParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& nt : named_parameters("")) n += nt.tensor.numel();
  return n;
}

AdapterParams adapter_init(int depth, int hidden, std::uint64_t seed, OutputMap map) {
  if (depth != 1 && depth != 2) fail(ErrorKind::invalid_argument, "adapter depth must be 1 or 2");
  if (hidden < 1) fail(ErrorKind::invalid_argument, "adapter hidden width must be >= 1");
  AdapterParams p;
  p.depth = depth;
  p.hidden = hidden;
  p.output_map = map;
  if (depth == 1) {
    p.w1 = Tensor(Shape{kFeatureCount, 1});
    p.b1 = Tensor(Shape{1});
  } else {
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(kFeatureCount));
    std::vector<double> w(static_cast<std::size_t>(kFeatureCount * hidden));
    for (auto& v : w) v = uniform(rng, -bound, bound);
    p.w1 = Tensor(Shape{kFeatureCount, hidden}, std::move(w));
    p.b1 = Tensor(Shape{hidden});
    p.w2 = Tensor(Shape{hidden, 1});
    p.b2 = Tensor(Shape{1});
    p.w2.set_requires_grad(true);
    p.b2.set_requires_grad(true);
  }
  p.w1.set_requires_grad(true);
  p.b1.set_requires_grad(true);
  return p;
}

Tensor featurize(const Tensor& x, double step, quant::IntRange range) {
  if (x.rank() == 0 || x.dim(0) == 0) fail(ErrorKind::dimension, "featurize needs a nonempty batch");
  const auto n = x.dim(0);
  const auto per = x.numel() / n;
  if (per == 0) fail(ErrorKind::dimension, "featurize needs nonempty samples");
  const double threshold = step * static_cast<double>(range.p);
  const auto& xv = x.storage();
  std::vector<double> f(static_cast<std::size_t>(n * kFeatureCount));
  std::vector<double> mu(static_cast<std::size_t>(n)), sigma(static_cast<std::size_t>(n));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* s = xv.data() + i * per;
    double abs_sum = 0.0, sum = 0.0, mx = 0.0;
    std::int64_t am = 0;
    std::int64_t clipped = 0;
    for (std::int64_t j = 0; j < per; ++j) {
      const double a = std::abs(s[j]);
      abs_sum += a;
      sum += s[j];
      if (a > mx) {
        mx = a;
        am = j;
      }
      if (a > threshold) ++clipped;
    }
    const double m = sum / static_cast<double>(per);
    double q = 0.0;
    for (std::int64_t j = 0; j < per; ++j) q += (s[j] - m) * (s[j] - m);
    mu[i] = m;
    sigma[i] = std::sqrt(q / static_cast<double>(per));
    argmax[i] = am;
    f[i * kFeatureCount + 0] = abs_sum / static_cast<double>(per);
    f[i * kFeatureCount + 1] = sigma[i];
    f[i * kFeatureCount + 2] = mx;
    f[i * kFeatureCount + 3] = static_cast<double>(clipped) / static_cast<double>(per);
  }
  return make_result(
      Shape{n, kFeatureCount}, std::move(f), {x},
      [x, n, per, mu = std::move(mu), sigma = std::move(sigma), argmax = std::move(argmax)](std::span<const double> up) {
        const auto& xv = x.storage();
        std::vector<double> g(xv.size(), 0.0);
        const double inv = 1.0 / static_cast<double>(per);
        for (std::int64_t i = 0; i < n; ++i) {
          const double* s = xv.data() + i * per;
          double* gi = g.data() + i * per;
          const double u_mean = up[i * kFeatureCount + 0];
          const double u_std = up[i * kFeatureCount + 1];
          const double u_max = up[i * kFeatureCount + 2];
          for (std::int64_t j = 0; j < per; ++j) {
            const double sign = s[j] > 0.0 ? 1.0 : (s[j] < 0.0 ? -1.0 : 0.0);
            double gj = u_mean * sign * inv;
            if (sigma[i] > 0.0) gj += u_std * (s[j] - mu[i]) * inv / sigma[i];
            gi[j] = gj;
          }
          const std::int64_t k = argmax[i];
          gi[k] += u_max * (s[k] > 0.0 ? 1.0 : (s[k] < 0.0 ? -1.0 : 0.0));
        }
        return std::vector<std::vector<double>>{std::move(g)};
      },
      "featurize");
}

namespace {

Tensor affine_plus_one(const Tensor& z) {
  constexpr double floor_value = 1e-3;
  std::vector<double> out(z.storage());
  for (auto& v : out) v = std::max(1.0 + v, floor_value);
  return make_result(
      z.shape(), std::move(out), {z},
      [z](std::span<const double> up) {
        std::vector<double> g(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) g[i] = 1.0 + z[static_cast<std::int64_t>(i)] > floor_value ? up[i] : 0.0;
        return std::vector<std::vector<double>>{std::move(g)};
      },
      "affine_plus_one");
}

}  // namespace

Tensor adapter_forward(const Tensor& features, const AdapterParams& params) {
  if (features.rank() != 2 || features.dim(1) != kFeatureCount)
    fail(ErrorKind::dimension, "adapter expects [N x 4] features, got " + shape_str(features.shape()));
  const auto n = features.dim(0);
  Tensor z = ops::add_row_bias(ops::matmul(features, params.w1), params.b1);
  if (params.depth == 2) z = ops::add_row_bias(ops::matmul(ops::relu(z), params.w2), params.b2);
  z = z.reshape(Shape{n});
  return params.output_map == OutputMap::exp ? ops::exp(z) : affine_plus_one(z);
}

}  // namespace asq::adapter
