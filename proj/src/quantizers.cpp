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

#include "asq/quantizers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace asq::quant {

double round_half_away(double v) { return std::round(v); }

IntRange IntRange::signed_range(int bits) {
  if (bits < 2 || bits > 16) fail(ErrorKind::invalid_argument, "bit-width must be in [2, 16]");
  const std::int64_t half = std::int64_t{1} << (bits - 1);
  return {-half, half - 1, bits};
}

IntRange IntRange::unsigned_range(int bits) {
  if (bits < 2 || bits > 16) fail(ErrorKind::invalid_argument, "bit-width must be in [2, 16]");
  return {0, (std::int64_t{1} << bits) - 1, bits};
}

double grad_scale(std::int64_t count, std::int64_t p) {
  return 1.0 / std::sqrt(static_cast<double>(count) * static_cast<double>(p));
}

double step_gradient_term(double v, IntRange r) {
  const auto n = static_cast<double>(r.n), p = static_cast<double>(r.p);
  if (v < n) return n;
  if (v > p) return p;
  return -v + round_half_away(v);
}

namespace {

std::int32_t quantize_one(double v, IntRange r) {
  const double q = std::clamp(round_half_away(v), static_cast<double>(r.n), static_cast<double>(r.p));
  return static_cast<std::int32_t>(q);
}

void check_step(double s) {
  if (!(s > 0.0) || !std::isfinite(s))
    fail(ErrorKind::invalid_argument, "quantization step must be positive and finite, got " + std::to_string(s));
}

std::int64_t sample_stride(std::size_t total, std::size_t samples) {
  if (samples == 0 || total % samples != 0)
    fail(ErrorKind::dimension, "cannot split " + std::to_string(total) + " elements into " +
                                   std::to_string(samples) + " samples");
  return static_cast<std::int64_t>(total / samples);
}

// Shared by the uniform and adaptive quantisers so that beta == 1 reproduces
// the uniform results bit for bit.
QuantResult forward_core(std::span<const double> x, double s, std::span<const double> beta, std::size_t samples,
                         IntRange r, DequantMode mode) {
  check_step(s);
  const auto per = sample_stride(x.size(), samples);
  QuantResult out;
  out.codes.resize(x.size());
  out.values.resize(x.size());
  for (std::size_t i = 0; i < samples; ++i) {
    const double b = beta.empty() ? 1.0 : beta[i];
    if (!(b > 0.0) || !std::isfinite(b))
      fail(ErrorKind::invalid_argument, "adaptive factor must be positive, got " + std::to_string(b));
    const double sa = s * b;
    const double deq = mode == DequantMode::base ? s : sa;
    for (std::int64_t j = 0; j < per; ++j) {
      const auto idx = static_cast<std::size_t>(static_cast<std::int64_t>(i) * per + j);
      const std::int32_t q = quantize_one(x[idx] / sa, r);
      out.codes[idx] = q;
      out.values[idx] = static_cast<double>(q) * deq;
    }
  }
  return out;
}

AsqGrads backward_core(std::span<const double> x, StepParam s, std::span<const double> beta, std::size_t samples,
                       IntRange r, std::span<const double> upstream) {
  check_step(s.s);
  if (upstream.size() != x.size())
    fail(ErrorKind::dimension, "upstream gradient has " + std::to_string(upstream.size()) + " elements, input has " +
                                   std::to_string(x.size()));
  const auto per = sample_stride(x.size(), samples);
  const double g = s.grad_scale_enabled ? grad_scale(static_cast<std::int64_t>(x.size()), r.p) : 1.0;
  const auto n = static_cast<double>(r.n), p = static_cast<double>(r.p);
  AsqGrads out;
  out.dx.resize(x.size());
  out.dbeta.resize(samples);
  out.grad_sa.resize(samples);
  out.ds_per_sample.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double b = beta.empty() ? 1.0 : beta[i];
    const double sa = s.s * b;
    double partial = 0.0;
    for (std::int64_t j = 0; j < per; ++j) {
      const auto idx = static_cast<std::size_t>(static_cast<std::int64_t>(i) * per + j);
      const double v = x[idx] / sa;
      partial += step_gradient_term(v, r) * upstream[idx];
      out.dx[idx] = (v >= n && v <= p) ? upstream[idx] : 0.0;
    }
    const double gsa = g * partial;
    out.grad_sa[i] = gsa;
    out.ds_per_sample[i] = gsa * b;
    out.dbeta[i] = gsa * s.s;
    out.ds += out.ds_per_sample[i];
  }
  return out;
}

}  // namespace

QuantResult quant_dequant_uniform(std::span<const double> x, StepParam s, IntRange r) {
  return forward_core(x, s.s, {}, 1, r, DequantMode::base);
}

UniformGrads uniform_backward(std::span<const double> x, StepParam s, IntRange r, std::span<const double> upstream,
                              std::int64_t samples) {
  auto g = backward_core(x, s, {}, static_cast<std::size_t>(samples), r, upstream);
  return {std::move(g.dx), g.ds};
}

QuantResult asq_forward(std::span<const double> x, StepParam s, std::span<const double> beta, IntRange r,
                        DequantMode mode) {
  if (beta.empty()) fail(ErrorKind::invalid_argument, "adaptive quantisation needs one beta per sample");
  return forward_core(x, s.s, beta, beta.size(), r, mode);
}

AsqGrads asq_backward(std::span<const double> x, StepParam s, std::span<const double> beta, IntRange r,
                      std::span<const double> upstream) {
  if (beta.empty()) fail(ErrorKind::invalid_argument, "adaptive quantisation needs one beta per sample");
  return backward_core(x, s, beta, beta.size(), r, upstream);
}

StepParam step_init(std::span<const double> sample, IntRange r) {
  if (sample.empty()) fail(ErrorKind::invalid_argument, "step_init needs a nonempty sample");
  double acc = 0.0;
  for (double v : sample) acc += std::abs(v);
  const double mean_abs = acc / static_cast<double>(sample.size());
  if (mean_abs == 0.0) return {1.0, true};
  return {2.0 * mean_abs / std::sqrt(static_cast<double>(r.p)), true};
}

// ---- level sets ------------------------------------------------------------

int max_exponent(int bits) {
  if (bits < 2 || bits > 8) fail(ErrorKind::invalid_argument, "level sets need 2 <= bits <= 8, got " + std::to_string(bits));
  return (1 << (bits - 1)) - 1;
}

double level_magnitude(LevelScheme scheme, int exp) {
  if (scheme == LevelScheme::pot) return std::ldexp(1.0, -exp);
  if (exp % 2 == 0) return std::ldexp(1.0, -exp / 2);
  return std::ldexp(std::numbers::sqrt2 / 2.0, -(exp - 1) / 2);
}

double LevelSet::min_positive() const {
  double m = 0.0;
  for (double v : values)
    if (v > 0.0 && (m == 0.0 || v < m)) m = v;
  return m;
}

LevelSet make_levels(LevelScheme scheme, ClipParam alpha, int bits, bool full) {
  if (!(alpha.alpha > 0.0) || !std::isfinite(alpha.alpha))
    fail(ErrorKind::invalid_argument, "clipping threshold must be positive, got " + std::to_string(alpha.alpha));
  const int top = max_exponent(bits);
  LevelSet set;
  set.scheme = scheme;
  set.bits = bits;
  set.alpha = alpha.alpha;
  set.full = true;
  // Ascending: -alpha*base^0 ... -alpha*base^-top, 0, alpha*base^-top ... alpha.
  for (int e = 0; e <= top; ++e) {
    set.values.push_back(-alpha.alpha * level_magnitude(scheme, e));
    set.codes.push_back({-1, e, false});
  }
  set.values.push_back(0.0);
  set.codes.push_back({1, 0, true});
  for (int e = top; e >= 0; --e) {
    set.values.push_back(alpha.alpha * level_magnitude(scheme, e));
    set.codes.push_back({1, e, false});
  }
  return full ? set : codebook_levels(set);
}

LevelSet pot_levels(ClipParam alpha, int bits) { return make_levels(LevelScheme::pot, alpha, bits, true); }
LevelSet post_levels(ClipParam alpha, int bits) { return make_levels(LevelScheme::post, alpha, bits, true); }

LevelSet codebook_levels(const LevelSet& nominal) {
  if (!nominal.full) return nominal;
  LevelSet out = nominal;
  out.full = false;
  // The smallest-magnitude negative level sits just below zero.
  const auto zero = std::find(out.values.begin(), out.values.end(), 0.0);
  if (zero == out.values.begin() || zero == out.values.end()) return out;
  const auto idx = std::distance(out.values.begin(), zero) - 1;
  out.values.erase(out.values.begin() + idx);
  out.codes.erase(out.codes.begin() + idx);
  return out;
}

LevelProjection quantize_to_levels(std::span<const double> w, const LevelSet& levels) {
  LevelProjection out;
  out.codes.resize(w.size());
  out.values.resize(w.size());
  const auto& v = levels.values;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = w[i];
    const auto it = std::lower_bound(v.begin(), v.end(), x);
    std::size_t best;
    if (it == v.begin()) {
      best = 0;
    } else if (it == v.end()) {
      best = v.size() - 1;
    } else {
      const auto hi = static_cast<std::size_t>(std::distance(v.begin(), it));
      const auto lo = hi - 1;
      const double dlo = x - v[lo], dhi = v[hi] - x;
      if (dlo < dhi)
        best = lo;
      else if (dhi < dlo)
        best = hi;
      else
        best = std::abs(v[lo]) > std::abs(v[hi]) ? lo : hi;
    }
    out.codes[i] = levels.codes[best];
    out.values[i] = v[best];
  }
  return out;
}

namespace {

double unit_level(const LevelCode& c, LevelScheme scheme) {
  return c.zero ? 0.0 : static_cast<double>(c.sign) * level_magnitude(scheme, c.exp);
}

double alpha_term(double w, const LevelCode& code, const LevelSet& levels) {
  if (std::abs(w) <= levels.alpha) return unit_level(code, levels.scheme);
  return w > 0.0 ? 1.0 : -1.0;
}

}  // namespace

double alpha_backward(std::span<const double> w, const LevelSet& levels, std::span<const double> upstream,
                      bool grad_scale_enabled) {
  if (upstream.size() != w.size()) fail(ErrorKind::dimension, "alpha_backward: upstream/weight size mismatch");
  const auto proj = quantize_to_levels(w, levels);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += alpha_term(w[i], proj.codes[i], levels) * upstream[i];
  const double g = grad_scale_enabled
                       ? grad_scale(static_cast<std::int64_t>(w.size()), max_exponent(levels.bits))
                       : 1.0;
  return g * acc;
}

// ---- surrogate scope -------------------------------------------------------

namespace {
thread_local SurrogateScope* g_surrogate = nullptr;
}

SurrogateScope::SurrogateScope() : previous_(g_surrogate) { g_surrogate = this; }
SurrogateScope::~SurrogateScope() { g_surrogate = previous_; }

void SurrogateScope::freeze() {
  frozen_ = true;
  cursor_ = 0;
}

std::pair<std::vector<SurrogateScope::Entry>*, bool> SurrogateScope::next_tape() {
  if (!frozen_) {
    tapes_.emplace_back();
    return {&tapes_.back(), false};
  }
  if (cursor_ >= tapes_.size()) fail(ErrorKind::invalid_argument, "surrogate replay ran past the recorded tapes");
  return {&tapes_[cursor_++], true};
}

SurrogateScope* active_surrogate() { return g_surrogate; }

// ---- autograd wrappers -----------------------------------------------------

namespace {

using Grads = std::vector<std::vector<double>>;

double scalar_value(const Tensor& t, const char* what) {
  if (t.numel() != 1) fail(ErrorKind::dimension, std::string(what) + " must be a scalar tensor");
  return t[0];
}

// Forward values under the surrogate (see SurrogateScope).
std::vector<double> surrogate_uniform(std::span<const double> x, double s, std::span<const double> beta,
                                      std::size_t samples, IntRange r) {
  auto [tape, replay] = active_surrogate()->next_tape();
  const auto per = sample_stride(x.size(), samples);
  if (replay && tape->size() != x.size()) fail(ErrorKind::dimension, "surrogate tape size mismatch");
  if (!replay) tape->resize(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < samples; ++i) {
    const double sa = s * (beta.empty() ? 1.0 : beta[i]);
    for (std::int64_t j = 0; j < per; ++j) {
      const auto idx = static_cast<std::size_t>(static_cast<std::int64_t>(i) * per + j);
      const double v = x[idx] / sa;
      auto& e = (*tape)[idx];
      if (!replay) {
        e.clip = v < static_cast<double>(r.n) ? -1 : (v > static_cast<double>(r.p) ? 1 : 0);
        e.residual = e.clip == 0 ? round_half_away(v) - v : 0.0;
      }
      if (e.clip < 0)
        out[idx] = sa * static_cast<double>(r.n);
      else if (e.clip > 0)
        out[idx] = sa * static_cast<double>(r.p);
      else
        out[idx] = sa * (v + e.residual);
    }
  }
  return out;
}

}  // namespace

Tensor fake_quant_uniform(const Tensor& x, const Tensor& step, IntRange r, std::int64_t samples,
                          bool grad_scale_enabled, std::vector<std::int32_t>* codes) {
  const double s = scalar_value(step, "step");
  auto q = forward_core(x.data(), s, {}, static_cast<std::size_t>(samples), r, DequantMode::base);
  if (codes) *codes = q.codes;
  if (active_surrogate()) q.values = surrogate_uniform(x.data(), s, {}, static_cast<std::size_t>(samples), r);
  return make_result(
      x.shape(), std::move(q.values), {x, step},
      [x, s, r, samples, grad_scale_enabled](std::span<const double> up) {
        auto g = uniform_backward(x.data(), {s, grad_scale_enabled}, r, up, samples);
        return Grads{std::move(g.dx), {g.ds}};
      },
      "fake_quant_uniform");
}

Tensor fake_quant_asq(const Tensor& x, const Tensor& step, const Tensor& beta, IntRange r, DequantMode mode,
                      bool grad_scale_enabled, std::vector<std::int32_t>* codes) {
  const double s = scalar_value(step, "step");
  if (x.rank() == 0 || beta.numel() != x.dim(0))
    fail(ErrorKind::dimension, "adaptive quantisation needs one beta per sample: beta " + shape_str(beta.shape()) +
                                   ", input " + shape_str(x.shape()));
  auto q = asq_forward(x.data(), {s, grad_scale_enabled}, beta.data(), r, mode);
  if (codes) *codes = q.codes;
  if (active_surrogate())
    q.values = surrogate_uniform(x.data(), s, beta.data(), static_cast<std::size_t>(beta.numel()), r);
  return make_result(
      x.shape(), std::move(q.values), {x, step, beta},
      [x, s, beta, r, grad_scale_enabled](std::span<const double> up) {
        auto g = asq_backward(x.data(), {s, grad_scale_enabled}, beta.data(), r, up);
        return Grads{std::move(g.dx), {g.ds}, std::move(g.dbeta)};
      },
      "fake_quant_asq");
}

Tensor fake_quant_levels(const Tensor& w, const Tensor& alpha, LevelScheme scheme, int bits, bool full_levels,
                         bool grad_scale_enabled, LevelProjection* projection) {
  const double a = scalar_value(alpha, "alpha");
  const auto levels = make_levels(scheme, {a}, bits, full_levels);
  auto proj = quantize_to_levels(w.data(), levels);
  std::vector<double> values = proj.values;
  if (auto* sur = active_surrogate()) {
    auto [tape, replay] = sur->next_tape();
    if (!replay) {
      tape->resize(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        auto& e = (*tape)[i];
        e.clip = std::abs(w[i]) <= a ? 0 : (w[i] > 0.0 ? 1 : -1);
        e.residual = unit_level(proj.codes[i], scheme);
        e.origin = w[i];
      }
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& e = (*tape)[i];
      values[i] = e.clip != 0 ? a * static_cast<double>(e.clip) : a * e.residual + (w[i] - e.origin);
    }
  }
  if (projection) *projection = proj;
  return make_result(
      w.shape(), std::move(values), {w, alpha},
      [w, levels, grad_scale_enabled](std::span<const double> up) {
        std::vector<double> dw(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) dw[i] = std::abs(w[static_cast<std::int64_t>(i)]) <= levels.alpha ? up[i] : 0.0;
        return Grads{std::move(dw), {alpha_backward(w.data(), levels, up, grad_scale_enabled)}};
      },
      "fake_quant_levels");
}

}  // namespace asq::quant
