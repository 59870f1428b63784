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

#include "asq/ops.hpp"

#include <algorithm>
#include <cmath>

#include "asq/kernels/kernels.hpp"

namespace asq::ops {

namespace {

using Grads = std::vector<std::vector<double>>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::dimension,
         std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    fail(ErrorKind::dimension, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                   shape_str(t.shape()));
}

std::vector<double> transpose(std::span<const double> src, std::int64_t rows, std::int64_t cols) {
  std::vector<double> out(src.size());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

bool wants(const Tensor& t) { return t.requires_grad(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.storage());
  const auto& bv = b.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](std::span<const double> up) {
        std::vector<double> g(up.begin(), up.end());
        return Grads{g, g};
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.storage());
  const auto& bv = b.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](std::span<const double> up) {
        std::vector<double> ga(up.begin(), up.end());
        std::vector<double> gb(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) gb[i] = -up[i];
        return Grads{std::move(ga), std::move(gb)};
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.storage());
  const auto& bv = b.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const double> up) {
        const auto& av = a.storage();
        const auto& bv = b.storage();
        std::vector<double> ga, gb;
        if (wants(a)) {
          ga.resize(up.size());
          for (std::size_t i = 0; i < up.size(); ++i) ga[i] = up[i] * bv[i];
        }
        if (wants(b)) {
          gb.resize(up.size());
          for (std::size_t i = 0; i < up.size(); ++i) gb[i] = up[i] * av[i];
        }
        return Grads{std::move(ga), std::move(gb)};
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.storage());
  for (auto& v : out) v *= factor;
  return make_result(
      a.shape(), std::move(out), {a},
      [factor](std::span<const double> up) {
        std::vector<double> g(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) g[i] = up[i] * factor;
        return Grads{std::move(g)};
      },
      "scale");
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const auto n = static_cast<std::size_t>(x.numel());
  return make_result(
      Shape{}, {s}, {x}, [n](std::span<const double> up) { return Grads{std::vector<double>(n, up[0])}; },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) fail(ErrorKind::dimension, "mean of an empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const auto n = static_cast<std::size_t>(x.numel());
  const double inv = 1.0 / static_cast<double>(n);
  return make_result(
      Shape{}, {s * inv}, {x},
      [n, inv](std::span<const double> up) { return Grads{std::vector<double>(n, up[0] * inv)}; }, "mean");
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.storage());
  for (auto& v : out) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return make_result(
      x.shape(), std::move(out), {x},
      [x](std::span<const double> up) {
        const auto& xv = x.storage();
        std::vector<double> g(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) g[i] = xv[i] > 0.0 ? up[i] : 0.0;
        return Grads{std::move(g)};
      },
      "relu");
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.storage());
  for (auto& v : out) v = std::exp(v);
  auto result_values = out;
  return make_result(
      x.shape(), std::move(out), {x},
      [values = std::move(result_values)](std::span<const double> up) {
        std::vector<double> g(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) g[i] = up[i] * values[i];
        return Grads{std::move(g)};
      },
      "exp");
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_row_bias");
  const auto rows = x.dim(0), cols = x.dim(1);
  if (b.numel() != cols)
    fail(ErrorKind::dimension, "add_row_bias: bias of " + std::to_string(b.numel()) + " for " +
                                   std::to_string(cols) + " columns");
  std::vector<double> out(x.storage());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  return make_result(
      x.shape(), std::move(out), {x, b},
      [rows, cols](std::span<const double> up) {
        std::vector<double> gb(static_cast<std::size_t>(cols), 0.0);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c) gb[c] += up[r * cols + c];
        return Grads{{up.begin(), up.end()}, std::move(gb)};
      },
      "add_row_bias");
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 4, "add_channel_bias");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (b.numel() != c) fail(ErrorKind::dimension, "add_channel_bias: bias/channel mismatch");
  std::vector<double> out(x.storage());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* p = out.data() + (i * c + ch) * hw;
      for (std::int64_t k = 0; k < hw; ++k) p[k] += b[ch];
    }
  return make_result(
      x.shape(), std::move(out), {x, b},
      [n, c, hw](std::span<const double> up) {
        std::vector<double> gb(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double* p = up.data() + (i * c + ch) * hw;
            for (std::int64_t k = 0; k < hw; ++k) gb[ch] += p[k];
          }
        return Grads{{up.begin(), up.end()}, std::move(gb)};
      },
      "add_channel_bias");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    fail(ErrorKind::dimension, "matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                                   shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  kernels::gemm(m, n, k, a.storage().data(), b.storage().data(), out.data(), false);
  return make_result(
      Shape{m, n}, std::move(out), {a, b},
      [a, b, m, k, n](std::span<const double> up) {
        std::vector<double> ga, gb;
        if (wants(a)) {
          ga.resize(static_cast<std::size_t>(m * k));
          const auto bt = transpose(b.data(), k, n);
          kernels::gemm(m, k, n, up.data(), bt.data(), ga.data(), false);
        }
        if (wants(b)) {
          gb.resize(static_cast<std::size_t>(k * n));
          const auto at = transpose(a.data(), m, k);
          kernels::gemm(k, n, m, at.data(), up.data(), gb.data(), false);
        }
        return Grads{std::move(ga), std::move(gb)};
      },
      "matmul");
}

Tensor linear(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const auto rows = x.dim(0), in = x.dim(1), outf = w.dim(0);
  if (w.dim(1) != in)
    fail(ErrorKind::dimension, "linear: input features " + std::to_string(in) + " vs weight " +
                                   shape_str(w.shape()));
  const auto wt = transpose(w.data(), outf, in);
  std::vector<double> out(static_cast<std::size_t>(rows * outf));
  kernels::gemm(rows, outf, in, x.storage().data(), wt.data(), out.data(), false);
  return make_result(
      Shape{rows, outf}, std::move(out), {x, w},
      [x, w, rows, in, outf](std::span<const double> up) {
        std::vector<double> gx, gw;
        if (wants(x)) {
          gx.resize(static_cast<std::size_t>(rows * in));
          kernels::gemm(rows, in, outf, up.data(), w.storage().data(), gx.data(), false);
        }
        if (wants(w)) {
          gw.resize(static_cast<std::size_t>(outf * in));
          const auto upt = transpose(up, rows, outf);
          kernels::gemm(outf, in, rows, upt.data(), x.storage().data(), gw.data(), false);
        }
        return Grads{std::move(gx), std::move(gw)};
      },
      "linear");
}

namespace {

struct ConvDims {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo, stride, pad;
  std::int64_t k() const { return cin * kh * kw; }
  std::int64_t l() const { return ho * wo; }
};

// cols[(c*kh + i)*kw + j][oy*wo + ox] = x[c][oy*stride + i - pad][ox*stride + j - pad]
void im2col(const double* x, const ConvDims& d, double* cols) {
  for (std::int64_t c = 0; c < d.cin; ++c)
    for (std::int64_t i = 0; i < d.kh; ++i)
      for (std::int64_t j = 0; j < d.kw; ++j) {
        double* row = cols + ((c * d.kh + i) * d.kw + j) * d.l();
        for (std::int64_t oy = 0; oy < d.ho; ++oy) {
          const std::int64_t iy = oy * d.stride + i - d.pad;
          for (std::int64_t ox = 0; ox < d.wo; ++ox) {
            const std::int64_t ix = ox * d.stride + j - d.pad;
            row[oy * d.wo + ox] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w) ? x[(c * d.h + iy) * d.w + ix] : 0.0;
          }
        }
      }
}

void col2im_add(const double* cols, const ConvDims& d, double* dx) {
  for (std::int64_t c = 0; c < d.cin; ++c)
    for (std::int64_t i = 0; i < d.kh; ++i)
      for (std::int64_t j = 0; j < d.kw; ++j) {
        const double* row = cols + ((c * d.kh + i) * d.kw + j) * d.l();
        for (std::int64_t oy = 0; oy < d.ho; ++oy) {
          const std::int64_t iy = oy * d.stride + i - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (std::int64_t ox = 0; ox < d.wo; ++ox) {
            const std::int64_t ix = ox * d.stride + j - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            dx[(c * d.h + iy) * d.w + ix] += row[oy * d.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dGeometry geometry) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (geometry.stride < 1 || geometry.padding < 0)
    fail(ErrorKind::invalid_argument, "conv2d: stride must be >= 1 and padding >= 0");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0,
             geometry.stride, geometry.padding};
  if (w.dim(1) != d.cin)
    fail(ErrorKind::dimension, "conv2d: input has " + std::to_string(d.cin) + " channels, kernel expects " +
                                   std::to_string(w.dim(1)));
  d.ho = (d.h + 2 * d.pad - d.kh) / d.stride + 1;
  d.wo = (d.w + 2 * d.pad - d.kw) / d.stride + 1;
  if (d.h + 2 * d.pad < d.kh || d.w + 2 * d.pad < d.kw || d.ho <= 0 || d.wo <= 0)
    fail(ErrorKind::dimension, "conv2d: nonpositive output extent for input " + shape_str(x.shape()) +
                                   " and kernel " + shape_str(w.shape()));

  std::vector<double> out(static_cast<std::size_t>(d.n * d.cout * d.l()));
  std::vector<double> cols(static_cast<std::size_t>(d.k() * d.l()));
  const double* xd = x.storage().data();
  for (std::int64_t i = 0; i < d.n; ++i) {
    im2col(xd + i * d.cin * d.h * d.w, d, cols.data());
    kernels::gemm(d.cout, d.l(), d.k(), w.storage().data(), cols.data(), out.data() + i * d.cout * d.l(), false);
  }
  return make_result(
      Shape{d.n, d.cout, d.ho, d.wo}, std::move(out), {x, w},
      [x, w, d](std::span<const double> up) {
        std::vector<double> gx, gw;
        const bool need_x = wants(x), need_w = wants(w);
        if (need_x) gx.assign(static_cast<std::size_t>(d.n * d.cin * d.h * d.w), 0.0);
        if (need_w) gw.assign(static_cast<std::size_t>(d.cout * d.k()), 0.0);
        std::vector<double> cols(static_cast<std::size_t>(d.k() * d.l()));
        std::vector<double> wt;
        if (need_x) wt = transpose(w.data(), d.cout, d.k());
        const double* xd = x.storage().data();
        for (std::int64_t i = 0; i < d.n; ++i) {
          const double* up_i = up.data() + i * d.cout * d.l();
          if (need_w) {
            im2col(xd + i * d.cin * d.h * d.w, d, cols.data());
            const auto cols_t = transpose(cols, d.k(), d.l());
            kernels::gemm(d.cout, d.k(), d.l(), up_i, cols_t.data(), gw.data(), true);
          }
          if (need_x) {
            kernels::gemm(d.k(), d.l(), d.cout, wt.data(), up_i, cols.data(), false);
            col2im_add(cols.data(), d, gx.data() + i * d.cin * d.h * d.w);
          }
        }
        return Grads{std::move(gx), std::move(gw)};
      },
      "conv2d");
}

Tensor batchnorm_inference(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                           const Tensor& beta, double eps) {
  require_rank(x, 4, "batchnorm_inference");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (mean.numel() != c || var.numel() != c || gamma.numel() != c || beta.numel() != c)
    fail(ErrorKind::dimension, "batchnorm_inference: per-channel parameter size mismatch");
  std::vector<double> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  std::vector<double> out(x.storage());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* p = out.data() + (i * c + ch) * hw;
      const double a = gamma[ch] * inv_std[ch];
      const double m = mean[ch];
      for (std::int64_t k = 0; k < hw; ++k) p[k] = (p[k] - m) * a + beta[ch];
    }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, mean, gamma, inv_std, n, c, hw](std::span<const double> up) {
        std::vector<double> gx(up.size()), gg(static_cast<std::size_t>(c), 0.0), gb(static_cast<std::size_t>(c), 0.0);
        const auto& xv = x.storage();
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (i * c + ch) * hw;
            const double a = gamma[ch] * inv_std[ch];
            for (std::int64_t k = 0; k < hw; ++k) {
              const double u = up[base + k];
              gx[base + k] = u * a;
              gg[ch] += u * (xv[base + k] - mean[ch]) * inv_std[ch];
              gb[ch] += u;
            }
          }
        return Grads{std::move(gx), std::move(gg), std::move(gb)};
      },
      "batchnorm_inference");
}

Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                       Tensor& running_var, double momentum, double eps) {
  require_rank(x, 4, "batchnorm_train");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto count = n * hw;
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
    fail(ErrorKind::dimension, "batchnorm_train: per-channel parameter size mismatch");
  const auto& xv = x.storage();
  std::vector<double> mu(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = 0; k < hw; ++k) s += xv[(i * c + ch) * hw + k];
    mu[ch] = s / static_cast<double>(count);
    double q = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = 0; k < hw; ++k) {
        const double dlt = xv[(i * c + ch) * hw + k] - mu[ch];
        q += dlt * dlt;
      }
    var[ch] = q / static_cast<double>(count);
    const double unbiased = count > 1 ? q / static_cast<double>(count - 1) : var[ch];
    running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mu[ch];
    running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
  }
  std::vector<double> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t k = 0; k < hw; ++k) {
        const std::int64_t idx = (i * c + ch) * hw + k;
        xhat[idx] = (xv[idx] - mu[ch]) * inv_std[ch];
        out[idx] = gamma[ch] * xhat[idx] + beta[ch];
      }
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std, n, c, hw, count](std::span<const double> up) {
        std::vector<double> gx(up.size()), gg(static_cast<std::size_t>(c), 0.0), gb(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t k = 0; k < hw; ++k) {
              const std::int64_t idx = (i * c + ch) * hw + k;
              gg[ch] += up[idx] * xhat[idx];
              gb[ch] += up[idx];
            }
          const double scale = gamma[ch] * inv_std[ch] / static_cast<double>(count);
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t k = 0; k < hw; ++k) {
              const std::int64_t idx = (i * c + ch) * hw + k;
              gx[idx] = scale * (static_cast<double>(count) * up[idx] - gb[ch] - xhat[idx] * gg[ch]);
            }
        }
        return Grads{std::move(gx), std::move(gg), std::move(gb)};
      },
      "batchnorm_train");
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> out(static_cast<std::size_t>(n * c));
  const auto& xv = x.storage();
  for (std::int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < hw; ++k) s += xv[i * hw + k];
    out[i] = s * inv;
  }
  return make_result(
      Shape{n, c}, std::move(out), {x},
      [n, c, hw, inv](std::span<const double> up) {
        std::vector<double> g(static_cast<std::size_t>(n * c * hw));
        for (std::int64_t i = 0; i < n * c; ++i)
          for (std::int64_t k = 0; k < hw; ++k) g[i * hw + k] = up[i] * inv;
        return Grads{std::move(g)};
      },
      "global_avg_pool");
}

Tensor shortcut_pad(const Tensor& x, std::int64_t stride, std::int64_t out_channels) {
  require_rank(x, 4, "shortcut_pad");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_channels < c || stride < 1) fail(ErrorKind::dimension, "shortcut_pad: cannot shrink channels");
  const auto ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
  const auto offset = (out_channels - c) / 2;
  std::vector<double> out(static_cast<std::size_t>(n * out_channels * ho * wo), 0.0);
  const auto& xv = x.storage();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < ho; ++y)
        for (std::int64_t z = 0; z < wo; ++z)
          out[((i * out_channels + ch + offset) * ho + y) * wo + z] = xv[((i * c + ch) * h + y * stride) * w + z * stride];
  return make_result(
      Shape{n, out_channels, ho, wo}, std::move(out), {x},
      [n, c, h, w, ho, wo, stride, offset, out_channels](std::span<const double> up) {
        std::vector<double> g(static_cast<std::size_t>(n * c * h * w), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < ho; ++y)
              for (std::int64_t z = 0; z < wo; ++z)
                g[((i * c + ch) * h + y * stride) * w + z * stride] =
                    up[((i * out_channels + ch + offset) * ho + y) * wo + z];
        return Grads{std::move(g)};
      },
      "shortcut_pad");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const auto n = logits.dim(0), classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n)
    fail(ErrorKind::dimension, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                   std::to_string(n));
  if (n == 0) fail(ErrorKind::dimension, "cross_entropy: empty batch");
  const auto& lv = logits.storage();
  std::vector<double> probs(lv.size());
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes)
      fail(ErrorKind::invalid_argument, "cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                            std::to_string(classes) + ")");
    const double* row = lv.data() + i * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::int64_t k = 0; k < classes; ++k) z += std::exp(row[k] - mx);
    const double log_z = std::log(z) + mx;
    for (std::int64_t k = 0; k < classes; ++k) probs[i * classes + k] = std::exp(row[k] - log_z);
    total += log_z - row[y];
  }
  std::vector<int> label_copy(labels.begin(), labels.end());
  return make_result(
      Shape{}, {total / static_cast<double>(n)}, {logits},
      [probs = std::move(probs), label_copy = std::move(label_copy), n, classes](std::span<const double> up) {
        std::vector<double> g(probs);
        const double f = up[0] / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          g[i * classes + label_copy[i]] -= 1.0;
          for (std::int64_t k = 0; k < classes; ++k) g[i * classes + k] *= f;
        }
        return Grads{std::move(g)};
      },
      "cross_entropy");
}

Tensor mse(const Tensor& a, const Tensor& b) {
  const auto d = sub(a, b);
  return mean(mul(d, d));
}

}  // namespace asq::ops
