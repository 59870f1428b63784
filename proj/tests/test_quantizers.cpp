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

#include <cmath>
#include <cstring>
#include <set>

#include "asq/ops.hpp"
#include "asq/quantizers.hpp"
#include "doctest.h"
#include "testing.hpp"

using namespace asq;
using namespace asq::quant;
using asq::testing::grad_copy;
using asq::testing::max_abs_diff;
using asq::testing::numeric_grad;
using asq::testing::random_tensor;

namespace {

// Independent restatement of the step gradient: half-away rounding via floor.
double oracle_round(double v) { return v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

double oracle_step_term(double x, double sa, std::int64_t n, std::int64_t p) {
  const double v = x / sa;
  if (v < static_cast<double>(n)) return static_cast<double>(n);
  if (v > static_cast<double>(p)) return static_cast<double>(p);
  return oracle_round(v) - v;
}

// Brute-force level generation straight from the +-base^e formula.
std::vector<double> oracle_levels(double base_exp_scale, double alpha, int bits) {
  std::vector<double> v{0.0};
  const int lo = -(1 << (bits - 1)) + 1;
  for (int e = lo; e <= 0; ++e) {
    const double mag = alpha * std::pow(2.0, e * base_exp_scale);
    v.push_back(mag);
    v.push_back(-mag);
  }
  std::sort(v.begin(), v.end());
  return v;
}

double oracle_nearest(double w, const std::vector<double>& levels) {
  double best = levels[0];
  for (double l : levels) {
    const double d = std::abs(w - l), db = std::abs(w - best);
    if (d < db || (d == db && std::abs(l) > std::abs(best))) best = l;
  }
  return best;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("integer ranges") {
  auto s3 = IntRange::signed_range(3);
  CHECK(s3.n == -4);
  CHECK(s3.p == 3);
  auto u2 = IntRange::unsigned_range(2);
  CHECK(u2.n == 0);
  CHECK(u2.p == 3);
  CHECK_THROWS_AS(IntRange::signed_range(1), Error);
}

TEST_CASE("rounding is half away from zero") {
  CHECK(round_half_away(2.5) == 3.0);
  CHECK(round_half_away(-2.5) == -3.0);
  CHECK(round_half_away(0.49999999999999994) == 0.0);
  CHECK(round_half_away(-1.5) == -2.0);
}

TEST_CASE("uniform quant/dequant examples") {
  const auto r = IntRange::signed_range(3);
  std::vector<double> x{1.3};
  auto q = quant_dequant_uniform(x, {0.5}, r);
  CHECK(q.codes[0] == 3);
  CHECK(q.values[0] == 1.5);
  x = {100.0};
  q = quant_dequant_uniform(x, {1.0}, r);
  CHECK(q.codes[0] == 3);
  CHECK(q.values[0] == 3.0);
  for (double s : {0.01, 1.0, 7.0}) {
    x = {0.0};
    q = quant_dequant_uniform(x, {s}, r);
    CHECK(q.codes[0] == 0);
    CHECK(q.values[0] == 0.0);
  }
  CHECK_THROWS_AS(quant_dequant_uniform(x, {0.0}, r), Error);
  CHECK_THROWS_AS(quant_dequant_uniform(x, {-1.0}, r), Error);
}

TEST_CASE("uniform round trip bound and STE mask") {
  Rng rng(8);
  const auto r = IntRange::signed_range(4);
  const double s = 0.3;
  auto x = random_vec(rng, 2000, -4.0, 4.0);
  std::vector<double> up(x.size(), 1.0);
  auto q = quant_dequant_uniform(x, {s}, r);
  auto g = uniform_backward(x, {s}, r, up);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(q.codes[i] >= r.n);
    CHECK(q.codes[i] <= r.p);
    const double v = x[i] / s;
    const bool inside = v >= r.n && v <= r.p;
    if (inside) CHECK(std::abs(q.values[i] - x[i]) <= s / 2 + 1e-15);
    CHECK(g.dx[i] == (inside ? 1.0 : 0.0));
  }
}

TEST_CASE("uniform step gradient: per-element branches") {
  const auto r = IntRange::signed_range(3);
  std::vector<double> up{2.0};
  std::vector<double> x{1.0};  // x/s = 2, integer and inside
  CHECK(uniform_backward(x, {0.5, false}, r, up).ds == 0.0);
  x = {-10.0};  // below n
  CHECK(uniform_backward(x, {0.5, false}, r, up).ds == static_cast<double>(r.n) * 2.0);
  x = {10.0};
  CHECK(uniform_backward(x, {0.5, false}, r, up).ds == static_cast<double>(r.p) * 2.0);
}

TEST_CASE("uniform step gradient matches the closed-form evaluator exactly") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int bits = std::array{2, 3, 4, 8}[trial % 4];
    const auto r = trial % 2 ? IntRange::signed_range(bits) : IntRange::unsigned_range(bits);
    const double s = uniform(rng, 0.05, 1.0);
    auto x = random_vec(rng, 97, -3.0, 3.0);
    auto up = random_vec(rng, 97, -1.0, 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += oracle_step_term(x[i], s, r.n, r.p) * up[i];
    const double g = 1.0 / std::sqrt(97.0 * static_cast<double>(r.p));
    CHECK(same_bits(uniform_backward(x, {s, true}, r, up).ds, g * acc));
    CHECK(same_bits(uniform_backward(x, {s, false}, r, up).ds, 1.0 * acc));
  }
}

TEST_CASE("adaptive forward examples") {
  const auto r = IntRange::signed_range(3);
  std::vector<double> x{1.3}, beta{2.0};
  auto q = asq_forward(x, {0.5}, beta, r, DequantMode::base);
  CHECK(q.codes[0] == 1);
  CHECK(q.values[0] == 0.5);
  q = asq_forward(x, {0.5}, beta, r, DequantMode::adaptive);
  CHECK(q.values[0] == 1.0);
  beta = {-1.0};
  CHECK_THROWS_AS(asq_forward(x, {0.5}, beta, r, DequantMode::base), Error);
}

TEST_CASE("adaptive forward: beta = 1 reduces to uniform, samples are independent") {
  Rng rng(10);
  const auto r = IntRange::unsigned_range(4);
  auto x = random_vec(rng, 60, -1.0, 5.0);
  std::vector<double> ones(3, 1.0);
  auto u = quant_dequant_uniform(x, {0.37}, r);
  for (auto mode : {DequantMode::base, DequantMode::adaptive}) {
    auto a = asq_forward(x, {0.37}, ones, r, mode);
    CHECK(a.codes == u.codes);
    CHECK(a.values == u.values);
  }
  std::vector<double> beta{1.0, 2.0};
  std::vector<double> both(x.begin(), x.begin() + 40);
  auto joint = asq_forward(both, {0.37}, beta, r, DequantMode::base);
  std::vector<double> s0(x.begin(), x.begin() + 20), s1(x.begin() + 20, x.begin() + 40);
  std::vector<double> b0{1.0}, b1{2.0};
  auto q0 = asq_forward(s0, {0.37}, b0, r, DequantMode::base);
  auto q1 = asq_forward(s1, {0.37}, b1, r, DequantMode::base);
  for (std::size_t j = 0; j < 20; ++j) {
    CHECK(joint.values[j] == q0.values[j]);
    CHECK(joint.values[20 + j] == q1.values[j]);
  }
  // Base-mode round trip bound against x / beta.
  for (std::size_t j = 0; j < 20; ++j) {
    const double v = s1[j] / (0.37 * 2.0);
    if (v >= r.n && v <= r.p) CHECK(std::abs(q1.values[j] - s1[j] / 2.0) <= 0.37 / 2 + 1e-15);
  }
}

TEST_CASE("adaptive backward: chain identities and closed form, exact") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = trial % 2 ? IntRange::signed_range(3) : IntRange::unsigned_range(2);
    const std::size_t batch = 1 + trial % 5, per = 13;
    auto x = random_vec(rng, batch * per, -2.0, 4.0);
    auto up = random_vec(rng, batch * per, -1.0, 1.0);
    auto beta = random_vec(rng, batch, 0.3, 3.0);
    const double s = uniform(rng, 0.1, 1.0);
    const bool gs = trial % 3 != 0;
    auto g = asq_backward(x, {s, gs}, beta, r, up);
    const double scale = gs ? 1.0 / std::sqrt(static_cast<double>(batch * per) * static_cast<double>(r.p)) : 1.0;
    double ds = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < per; ++j)
        acc += oracle_step_term(x[i * per + j], s * beta[i], r.n, r.p) * up[i * per + j];
      const double gsa = scale * acc;
      CHECK(same_bits(g.grad_sa[i], gsa));
      CHECK(same_bits(g.ds_per_sample[i], g.grad_sa[i] * beta[i]));
      CHECK(same_bits(g.dbeta[i], g.grad_sa[i] * s));
      if (g.grad_sa[i] != 0.0)
        CHECK(g.ds_per_sample[i] / beta[i] == doctest::Approx(g.dbeta[i] / s).epsilon(1e-15));
      ds += g.ds_per_sample[i];
    }
    CHECK(same_bits(g.ds, ds));
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double v = x[k] / (s * beta[k / per]);
      CHECK(g.dx[k] == ((v >= r.n && v <= r.p) ? up[k] : 0.0));
    }

    std::vector<double> ones(batch, 1.0);
    auto a1 = asq_backward(x, {s, gs}, ones, r, up);
    auto u1 = uniform_backward(x, {s, gs}, r, up, static_cast<std::int64_t>(batch));
    CHECK(same_bits(a1.ds, u1.ds));
    CHECK(a1.dx == u1.dx);
  }
}

TEST_CASE("saturated input: ds = p * sum(upstream) * g") {
  const auto r = IntRange::unsigned_range(2);
  std::vector<double> x(16, 100.0), up(16, 0.5);
  auto g = uniform_backward(x, {0.1, true}, r, up);
  CHECK(g.ds == doctest::Approx(3.0 * 8.0 / std::sqrt(16.0 * 3.0)).epsilon(1e-15));
}

TEST_CASE("step initialisation") {
  const auto r = IntRange::signed_range(3);
  std::vector<double> x{1, -1, 1, -1};
  CHECK(step_init(x, r).s == doctest::Approx(2.0 / std::sqrt(3.0)));
  std::vector<double> z(5, 0.0);
  CHECK(step_init(z, r).s == 1.0);
  std::vector<double> y{0.25, -3.0, 1.5};
  const double s1 = step_init(y, r).s;
  for (auto& v : y) v *= 4.0;
  CHECK(step_init(y, r).s == 4.0 * s1);
}

TEST_CASE("POT and POST level sets match brute-force generation") {
  for (int bits : {2, 3, 4, 8})
    for (double alpha : {0.5, 1.0, 2.0}) {
      auto pot = pot_levels({alpha}, bits);
      auto post = post_levels({alpha}, bits);
      CHECK(pot.values == oracle_levels(1.0, alpha, bits));
      CHECK(post.values == oracle_levels(0.5, alpha, bits));
      for (const auto* set : {&pot, &post}) {
        CHECK(set->values.size() == (std::size_t{1} << bits) + 1);
        CHECK(set->values.back() == alpha);
        CHECK(std::count(set->values.begin(), set->values.end(), 0.0) == 1);
        for (double v : set->values) CHECK(std::binary_search(set->values.begin(), set->values.end(), -v));
      }
      CHECK(post.min_positive() > pot.min_positive());
    }
  CHECK(pot_levels({1}, 3).values == std::vector<double>{-1, -0.5, -0.25, -0.125, 0, 0.125, 0.25, 0.5, 1});
  CHECK(pot_levels({1}, 4).min_positive() == std::ldexp(1.0, -7));
  auto p3 = post_levels({1}, 3).values;
  const std::vector<double> approx{-1, -0.7071, -0.5, -0.3536, 0, 0.3536, 0.5, 0.7071, 1};
  for (std::size_t i = 0; i < p3.size(); ++i) CHECK(p3[i] == doctest::Approx(approx[i]).epsilon(1e-4));
  CHECK(post_levels({1}, 2).values.size() == 5);
  CHECK(post_levels({1}, 2).min_positive() == std::pow(2.0, -0.5));
  auto d = pot_levels({2}, 3).values, o = pot_levels({1}, 3).values;
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == 2 * o[i]);
  CHECK_THROWS_AS(pot_levels({1}, 1), Error);
  CHECK_THROWS_AS(post_levels({0}, 3), Error);
}

TEST_CASE("code book drops the smallest negative level") {
  for (int bits : {2, 3, 4}) {
    auto nominal = post_levels({1}, bits);
    auto book = codebook_levels(nominal);
    CHECK(book.values.size() == (std::size_t{1} << bits));
    CHECK(!book.full);
    const double dropped = -nominal.min_positive();
    CHECK(std::find(book.values.begin(), book.values.end(), dropped) == book.values.end());
    CHECK(std::find(nominal.values.begin(), nominal.values.end(), dropped) != nominal.values.end());
  }
}

TEST_CASE("nearest-level projection") {
  auto levels = post_levels({1}, 3);
  std::vector<double> w{0.6, -5.0, 0.5, -0.7071067811865476, 5.0};
  auto p = quantize_to_levels(w, levels);
  CHECK(p.values[0] == 0.5);
  CHECK(p.values[1] == -1.0);
  CHECK(p.values[2] == 0.5);
  CHECK(p.values[3] == w[3]);
  CHECK(p.values[4] == 1.0);
  CHECK(p.codes[1].sign == -1);
  CHECK(p.codes[1].exp == 0);

  // Exact midpoint between two POT levels resolves toward the larger magnitude.
  auto pot = pot_levels({1}, 3);
  std::vector<double> mid{0.375, -0.375, 0.0625};
  auto q = quantize_to_levels(mid, pot);
  CHECK(q.values[0] == 0.5);
  CHECK(q.values[1] == -0.5);
  CHECK(q.values[2] == 0.125);
}

TEST_CASE("projection agrees with exhaustive search on 1e5 weights and is idempotent") {
  Rng rng(12);
  for (auto scheme : {LevelScheme::pot, LevelScheme::post})
    for (int bits : {2, 3, 4}) {
      auto levels = make_levels(scheme, {0.8}, bits, true);
      auto w = random_vec(rng, 100000 / 6 + 1, -1.2, 1.2);
      auto p = quantize_to_levels(w, levels);
      std::size_t mismatches = 0;
      for (std::size_t i = 0; i < w.size(); ++i) mismatches += p.values[i] != oracle_nearest(w[i], levels.values);
      CHECK(mismatches == 0);
      auto again = quantize_to_levels(p.values, levels);
      CHECK(again.values == p.values);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const auto& c = p.codes[i];
        const double decoded = c.zero ? 0.0 : c.sign * 0.8 * level_magnitude(scheme, c.exp);
        if (decoded != p.values[i]) {
          CHECK(decoded == p.values[i]);
          break;
        }
      }
    }
}

TEST_CASE("clip-threshold gradient") {
  auto levels = post_levels({1}, 3);
  std::vector<double> w(10, 3.0), up(10);
  Rng rng(13);
  for (auto& u : up) u = uniform(rng, -1, 1);
  double sum = 0;
  for (double u : up) sum += u;
  CHECK(same_bits(alpha_backward(w, levels, up, false), sum));

  // Weights on levels: doubling alpha doubles the projection.
  std::vector<double> on{0.5, -0.7071067811865476, 1.0, 0.0};
  auto p1 = quantize_to_levels(on, levels);
  std::vector<double> on2;
  for (double v : on) on2.push_back(2 * v);
  auto p2 = quantize_to_levels(on2, post_levels({2}, 3));
  for (std::size_t i = 0; i < on.size(); ++i) CHECK(p2.values[i] == 2 * p1.values[i]);

  for (int trial = 0; trial < 20; ++trial) {
    const double alpha = uniform(rng, 0.2, 1.5);
    auto lv = pot_levels({alpha}, 4);
    auto ww = random_vec(rng, 41, -2.0, 2.0);
    auto uu = random_vec(rng, 41, -1.0, 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < ww.size(); ++i) {
      const double term = std::abs(ww[i]) <= alpha ? oracle_nearest(ww[i], lv.values) / alpha : (ww[i] > 0 ? 1.0 : -1.0);
      acc += term * uu[i];
    }
    const double g = 1.0 / std::sqrt(41.0 * 7.0);
    CHECK(alpha_backward(ww, lv, uu, true) == doctest::Approx(g * acc).epsilon(1e-14));
  }
}

TEST_CASE("autograd wrappers deliver the quantiser gradients") {
  Rng rng(14);
  const auto r = IntRange::signed_range(4);
  auto x = random_tensor({3, 8}, rng, -2, 2);
  auto step = Tensor::scalar(0.2);
  auto beta = Tensor::from({0.8, 1.0, 1.7});
  auto proj = random_tensor({3, 8}, rng);
  for (auto* t : {&x, &step, &beta}) t->set_requires_grad(true);
  std::vector<std::int32_t> codes;
  backward(ops::sum(ops::mul(fake_quant_asq(x, step, beta, r, DequantMode::adaptive, true, &codes), proj)));
  auto ref = asq_backward(x.data(), {0.2, true}, beta.data(), r, proj.data());
  CHECK(grad_copy(x) == ref.dx);
  CHECK(step.grad()[0] == ref.ds);
  CHECK(grad_copy(beta) == ref.dbeta);
  for (auto c : codes) CHECK(r.contains(c));
  CHECK_THROWS_AS(fake_quant_asq(x, step, Tensor::from({1.0, 1.0}), r, DequantMode::base, true), Error);
}

TEST_CASE("straight-through gradients equal exact derivatives of the frozen surrogate") {
  Rng rng(15);
  const auto r = IntRange::signed_range(3);
  auto x = random_tensor({2, 6}, rng, -1.5, 1.5);
  auto step = Tensor::scalar(0.31);
  auto beta = Tensor::from({0.9, 1.3});
  auto w = random_tensor({6, 6}, rng, -1.2, 1.2);
  auto alpha = Tensor::scalar(0.9);
  auto proj = random_tensor({2, 6}, rng);
  for (auto* t : {&x, &step, &beta, &w, &alpha}) t->set_requires_grad(true);

  SurrogateScope scope;
  auto loss_fn = [&] {
    auto a = fake_quant_asq(x, step, beta, r, DequantMode::adaptive, false);
    auto wq = fake_quant_levels(w, alpha, LevelScheme::post, 3, true, false);
    return ops::sum(ops::mul(ops::matmul(a, wq), proj));
  };
  backward(loss_fn());
  NoGradGuard ng;
  auto f = [&] {
    scope.freeze();
    return loss_fn().item();
  };
  CHECK(max_abs_diff(grad_copy(x), numeric_grad(x, f)) < 1e-6);
  CHECK(max_abs_diff(grad_copy(step), numeric_grad(step, f)) < 1e-6);
  CHECK(max_abs_diff(grad_copy(beta), numeric_grad(beta, f)) < 1e-6);
  CHECK(max_abs_diff(grad_copy(w), numeric_grad(w, f)) < 1e-6);
  CHECK(max_abs_diff(grad_copy(alpha), numeric_grad(alpha, f)) < 1e-6);
}
