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

// Acceptance suite: one PASS/FAIL/BLOCKED line per criterion.
//
// usage: acceptance <path-to-asq-cli> [criterion...]
// Criterion 7 needs ASQ_CIFAR10_DIR (the CIFAR-10 binary batches).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "asq/analysis.hpp"
#include "asq/int_inference.hpp"
#include "asq/ops.hpp"
#include "asq/trainer.hpp"
#include "testing.hpp"

using namespace asq;
using asq::testing::grad_copy;
using asq::testing::max_abs_diff;
using asq::testing::numeric_grad;
using asq::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, blocked };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

double oracle_round(double v) { return v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

// ---- 1 ----------------------------------------------------------------------

std::vector<double> brute_levels(double half_steps, double alpha, int bits) {
  std::vector<double> v{0.0};
  for (int e = -(1 << (bits - 1)) + 1; e <= 0; ++e) {
    const double mag = alpha * std::pow(2.0, e * half_steps);
    v.push_back(mag);
    v.push_back(-mag);
  }
  std::sort(v.begin(), v.end());
  return v;
}

Outcome level_sets() {
  int mismatches = 0, resolution = 0, cases = 0;
  for (int bits : {2, 3, 4, 8})
    for (double alpha : {0.5, 1.0, 2.0}) {
      ++cases;
      const auto pot = quant::pot_levels({alpha}, bits);
      const auto post = quant::post_levels({alpha}, bits);
      mismatches += pot.values != brute_levels(1.0, alpha, bits);
      mismatches += post.values != brute_levels(0.5, alpha, bits);
      resolution += !(post.min_positive() > pot.min_positive());
    }
  return verdict(mismatches == 0 && resolution == 0,
                 fmt("%d (b, alpha) cases, %d set mismatches, %d with POST min <= POT min", cases, mismatches,
                     resolution));
}

// ---- 2 ----------------------------------------------------------------------

double oracle_step_term(double x, double sa, std::int64_t n, std::int64_t p) {
  const double v = x / sa;
  if (v < static_cast<double>(n)) return static_cast<double>(n);
  if (v > static_cast<double>(p)) return static_cast<double>(p);
  return oracle_round(v) - v;
}

Outcome gradient_identities() {
  Rng rng(2024);
  int bad_chain = 0, bad_oracle = 0, bad_lsq = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = trial % 2 ? quant::IntRange::signed_range(2 + trial % 3) : quant::IntRange::unsigned_range(2 + trial % 7);
    const std::size_t batch = 1 + trial % 6, per = 5 + trial % 17;
    std::vector<double> x(batch * per), up(batch * per), beta(batch);
    for (auto& v : x) v = uniform(rng, -3.0, 6.0);
    for (auto& v : up) v = uniform(rng, -1.0, 1.0);
    for (auto& v : beta) v = uniform(rng, 0.25, 4.0);
    const double s = uniform(rng, 0.05, 1.5);
    const bool gs = trial % 3 != 0;
    const auto g = quant::asq_backward(x, {s, gs}, beta, r, up);
    const double scale = gs ? 1.0 / std::sqrt(static_cast<double>(batch * per) * static_cast<double>(r.p)) : 1.0;
    double ds = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < per; ++j) acc += oracle_step_term(x[i * per + j], s * beta[i], r.n, r.p) * up[i * per + j];
      bad_oracle += !same_bits(g.grad_sa[i], scale * acc);
      bad_chain += !same_bits(g.ds_per_sample[i], g.grad_sa[i] * beta[i]);
      bad_chain += !same_bits(g.dbeta[i], g.grad_sa[i] * s);
      ds += g.ds_per_sample[i];
    }
    bad_chain += !same_bits(g.ds, ds);
    const std::vector<double> ones(batch, 1.0);
    const auto a1 = quant::asq_backward(x, {s, gs}, ones, r, up);
    const auto u1 = quant::uniform_backward(x, {s, gs}, r, up, static_cast<std::int64_t>(batch));
    bad_lsq += !same_bits(a1.ds, u1.ds) || a1.dx != u1.dx;
  }
  return verdict(bad_chain + bad_oracle + bad_lsq == 0,
                 fmt("100 tensors: %d chain-rule, %d closed-form, %d beta=1 vs uniform mismatches (bitwise)", bad_chain,
                     bad_oracle, bad_lsq));
}

// ---- 3 ----------------------------------------------------------------------

double fd_error(const std::vector<Tensor*>& inputs, const std::function<Tensor()>& loss) {
  for (auto* t : inputs) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  backward(loss());
  NoGradGuard ng;
  auto f = [&] { return loss().item(); };
  double worst = 0.0;
  for (auto* t : inputs) worst = std::max(worst, max_abs_diff(grad_copy(*t), numeric_grad(*t, f)));
  return worst;
}

Outcome finite_differences() {
  Rng rng(31);
  double smooth = 0.0;
  {
    auto a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng), w = random_tensor({4, 3}, rng);
    smooth = std::max(smooth, fd_error({&a, &b}, [&] { return ops::sum(ops::mul(ops::matmul(a, b), w)); }));
  }
  {
    auto x = random_tensor({2, 3, 6, 5}, rng), w = random_tensor({4, 3, 3, 3}, rng);
    auto proj = random_tensor({2, 4, 3, 3}, rng);
    smooth = std::max(smooth, fd_error({&x, &w}, [&] { return ops::sum(ops::mul(ops::conv2d(x, w, {2, 1}), proj)); }));
  }
  {
    auto logits = random_tensor({5, 7}, rng, -2, 2);
    const std::vector<int> labels{0, 6, 3, 3, 1};
    smooth = std::max(smooth, fd_error({&logits}, [&] { return ops::cross_entropy(logits, labels); }));
    auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    smooth = std::max(smooth, fd_error({&a, &b}, [&] { return ops::mse(a, b); }));
  }
  for (int depth : {1, 2}) {
    auto p = adapter::adapter_init(depth, 8, 5);
    for (auto& nt : p.named_parameters(""))
      for (auto& v : nt.tensor.data()) v += uniform(rng, -0.3, 0.3);
    auto x = random_tensor({3, 12}, rng, -2, 2);
    auto wts = random_tensor({3}, rng);
    std::vector<Tensor*> ins{&x};
    auto named = p.named_parameters("");
    for (auto& nt : named) ins.push_back(&nt.tensor);
    const auto r = quant::IntRange::signed_range(4);
    smooth = std::max(smooth, fd_error(ins, [&] {
      return ops::sum(ops::mul(adapter::adapter_forward(adapter::featurize(x, 0.05, r), p), wts));
    }));
  }

  // Layer composites on the recorded surrogate (rounding decisions frozen).
  double composite = 0.0;
  for (auto scheme : {qat::Scheme::scheme1, qat::Scheme::scheme2, qat::Scheme::pot_weights, qat::Scheme::lsq_baseline}) {
    qat::QLayer l;
    l.name = "conv";
    l.kind = qat::LayerKind::conv2d;
    l.geometry = {1, 1};
    l.weight = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    l.bias = random_tensor({3}, rng);
    l.weight.set_requires_grad(true);
    l.bias.set_requires_grad(true);
    qat::QuantPolicy pol;
    pol.scheme = scheme;
    pol.bits = 3;
    pol.dequant_mode = quant::DequantMode::adaptive;
    pol.grad_scale = false;
    qat::configure_layer(l, pol, false, false, 17);
    if (l.adapter)
      for (auto& nt : l.adapter->named_parameters(""))
        for (auto& v : nt.tensor.data()) v += uniform(rng, -0.3, 0.3);
    auto x = random_tensor({2, 2, 4, 4}, rng, -2.0, 2.0);
    auto proj = random_tensor({2, 3, 4, 4}, rng);
    {
      NoGradGuard ng;
      l.forward(x, true);
    }
    x.set_requires_grad(true);
    quant::SurrogateScope scope;
    backward(ops::sum(ops::mul(l.forward(x, false), proj)));
    NoGradGuard ng;
    auto f = [&] {
      scope.freeze();
      return ops::sum(ops::mul(l.forward(x, false), proj)).item();
    };
    composite = std::max(composite, max_abs_diff(grad_copy(x), numeric_grad(x, f)));
    for (const auto& prm : l.parameters())
      composite = std::max(composite, max_abs_diff(grad_copy(prm.tensor), numeric_grad(prm.tensor, f)));
  }
  return verdict(smooth < 1e-4 && composite < 1e-3,
                 fmt("smooth ops max |err| %.2e (< 1e-4), layer composites max |err| %.2e (< 1e-3)", smooth, composite));
}

// ---- 4 ----------------------------------------------------------------------

std::int64_t oracle_post_mul(int sign, int e, std::int64_t a) {
  return static_cast<std::int64_t>(oracle_round(sign * static_cast<double>(a) * std::pow(2.0, -0.5 * e)));
}

Outcome integer_path() {
  std::int64_t triples = 0, wrong = 0;
  for (auto r : {quant::IntRange::signed_range(8), quant::IntRange::unsigned_range(8)}) {
    const auto lut = intinf::build_lut(3, r);
    for (int sign : {-1, 1})
      for (int e = 0; e <= quant::max_exponent(3); ++e)
        for (auto a = r.n; a <= r.p; ++a) {
          ++triples;
          wrong += intinf::post_mul({static_cast<std::int8_t>(sign), static_cast<std::int8_t>(e), false},
                                    static_cast<std::int32_t>(a), lut) != oracle_post_mul(sign, e, a);
        }
  }
  Rng rng(404);
  const auto r = quant::IntRange::unsigned_range(8);
  const auto lut = intinf::build_lut(3, r);
  int over = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t m = 1 + trial % 9, k = 1 + (trial * 7) % 23, n = 1 + (trial * 5) % 11;
    const double alpha = uniform(rng, 0.2, 2.0), s = uniform(rng, 0.01, 0.1);
    auto wt = random_tensor({m, k}, rng, -alpha, alpha);
    const auto w = intinf::encode_post(wt.data(), {m, k}, alpha, 3);
    std::vector<std::int32_t> a(static_cast<std::size_t>(k * n));
    for (auto& v : a) v = static_cast<std::int32_t>(std::uniform_int_distribution<std::int64_t>(r.n, r.p)(rng));
    const auto acc = intinf::int_matmul(w, a, n, lut);
    const auto wf = intinf::decode_post(w);
    const double bound = static_cast<double>(k) * 0.5 * alpha * s;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        double ref = 0.0;
        for (std::int64_t t = 0; t < k; ++t)
          ref += wf[static_cast<std::size_t>(i * k + t)] * a[static_cast<std::size_t>(t * n + j)] * s;
        const double err = std::abs(static_cast<double>(acc[static_cast<std::size_t>(i * n + j)]) * alpha * s - ref);
        worst = std::max(worst, err / bound);
        over += err > bound + 1e-12;
      }
  }
  return verdict(wrong == 0 && over == 0,
                 fmt("%lld (sign, exp, code) triples, %lld wrong; 100 int_matmul instances, %d entries over k*0.5*alpha*s "
                     "(worst %.3f of bound)",
                     static_cast<long long>(triples), static_cast<long long>(wrong), over, worst));
}

// ---- 5 ----------------------------------------------------------------------

Outcome overhead() {
  Rng rng(5);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const double ops = static_cast<double>(std::uniform_int_distribution<std::int64_t>(0, std::int64_t{1} << 40)(rng));
    bad += analysis::qops(ops, 8) != ops / 4 || analysis::qops(ops, 4) != ops / 8;
  }
  const auto arch = analysis::resnet18_arch();
  bad += analysis::qops(static_cast<double>(analysis::ops_count(arch).total), 8) !=
         static_cast<double>(analysis::ops_count(arch).total) / 4;
  const auto rep = analysis::overhead_report(arch, analysis::AdapterSizing::from_adapter(2, 16), {8, 4, 3, 2});
  const double p8 = rep.rows[0].param_overhead_pct;
  const double expect[] = {1.0, 2.0, 8.0 / 3.0, 4.0};
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    worst = std::max(worst, std::abs(rep.rows[i].param_overhead_pct / p8 - expect[i]) / expect[i]);
  return verdict(bad == 0 && worst <= 0.005,
                 fmt("QOPS identity mismatches %d; ResNet18 Param%% ratios %.4f:%.4f:%.4f:%.4f, max rel dev %.2e (<= 0.5%%)",
                     bad, 1.0, rep.rows[1].param_overhead_pct / p8, rep.rows[2].param_overhead_pct / p8,
                     rep.rows[3].param_overhead_pct / p8, worst));
}

// ---- 6 ----------------------------------------------------------------------

Outcome code_utilization() {
  analysis::ShiftExperimentConfig c;
  c.seed = 0;
  const auto r = analysis::shift_experiment(c);
  return verdict(r.code_count == 4 && r.lsq_codes_used <= 3 && r.asq_codes_used == 4 && r.steps_run <= 200,
                 fmt("2-bit codes used: LSQ %lld/4, ASQ %lld/4 after %d adapter steps (mean beta %.3f)",
                     static_cast<long long>(r.lsq_codes_used), static_cast<long long>(r.asq_codes_used), r.steps_run,
                     r.mean_beta));
}

// ---- 7 ----------------------------------------------------------------------

Outcome desk_qat() {
  const char* dir = std::getenv("ASQ_CIFAR10_DIR");
  if (!dir || !fs::is_directory(dir))
    return {Status::blocked, "ASQ_CIFAR10_DIR not set to a CIFAR-10 binary directory; needs 7 ResNet20 runs x 20 epochs"};
  std::vector<fs::path> train_files, test_files{fs::path(dir) / "test_batch.bin"};
  for (int i = 1; i <= 5; ++i) train_files.push_back(fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin"));
  const auto norm = train::Normalization::cifar_default();
  const auto train_set = train::load_cifar_binary(train_files, norm, 10000);
  const auto test_set = train::load_cifar_binary(test_files, norm);

  model::ModelSpec spec;
  spec.arch = model::Arch::resnet20;
  train::TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 128;
  cfg.augment_crop = cfg.augment_flip = true;

  auto fm = model::make_float_model(spec, derive_seed(0, "model-init"));
  cfg.lr0 = 0.1;
  cfg.seed = derive_seed(0, "train");
  train::train(fm, train_set, nullptr, cfg);
  const double float_top1 = train::evaluate(fm, test_set).top1;
  const auto float_state = fm.state();

  auto qat_run = [&](qat::Scheme scheme, std::uint64_t seed) {
    qat::QuantPolicy pol;
    pol.scheme = scheme;
    pol.bits = 4;
    auto m = model::build_model(spec, pol, float_state, derive_seed(seed, "quant-init"));
    auto c = cfg;
    c.lr0 = 0.01;
    c.seed = derive_seed(seed, "train");
    train::train(m, train_set, nullptr, c);
    return train::evaluate(m, test_set).top1;
  };
  double asq = 0.0, lsq = 0.0, asq_seed0 = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const double a = qat_run(qat::Scheme::scheme2, seed);
    if (seed == 0) asq_seed0 = a;
    asq += a / 3.0;
    lsq += qat_run(qat::Scheme::lsq_baseline, seed) / 3.0;
  }
  const bool a_ok = float_top1 >= 0.60, b_ok = float_top1 - asq_seed0 <= 0.03, c_ok = asq >= lsq;
  return verdict(a_ok && b_ok && c_ok,
                 fmt("float %.2f%% (>= 60), W4A4 ASQ+POST seed 0 %.2f%% (gap <= 3.0), mean ASQ+POST %.2f%% vs LSQ %.2f%%",
                     100 * float_top1, 100 * asq_seed0, 100 * asq, 100 * lsq));
}

// ---- 8 ----------------------------------------------------------------------

Outcome block_errors() {
  train::SynthSpec ss;
  ss.samples = 512;
  ss.classes = 10;
  ss.size = 16;
  ss.noise = 0.5;
  const auto data = train::synth_dataset(ss, 71, 72);
  const auto probe = train::take(data, 0, 64).images;
  model::ModelSpec spec;
  spec.arch = model::Arch::resnet20;
  spec.width = 8;
  spec.image_size = 16;
  auto fm = model::make_float_model(spec, 8);
  train::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.lr0 = 0.05;
  train::train(fm, data, nullptr, cfg);

  auto quantised = [&](int bits) {
    qat::QuantPolicy pol;
    pol.bits = bits;
    auto m = model::build_model(spec, pol, fm.state(), 9);
    auto c = cfg;
    c.epochs = 1;
    c.lr0 = 0.01;
    train::train(m, data, nullptr, c);
    return m;
  };
  auto q3 = quantised(3), q8 = quantised(8);
  const auto self = analysis::block_error_l2(q3, q3, probe);
  const auto e3 = analysis::block_error_l2(fm, q3, probe);
  const auto e8 = analysis::block_error_l2(fm, q8, probe);
  const auto blocks = static_cast<std::size_t>(q3.block_count());
  int nonzero_self = 0, dominated = 0;
  for (double v : self) nonzero_self += v != 0.0;
  std::string series;
  for (std::size_t b = 0; b < e3.size(); ++b) {
    dominated += e3[b] > e8[b];
    series += fmt("%s%.3g/%.3g", b ? " " : "", e3[b], e8[b]);
  }
  const bool ok = self.size() == blocks && e3.size() == blocks && nonzero_self == 0 && dominated == static_cast<int>(blocks);
  return verdict(ok, fmt("%zu blocks, self-error nonzero in %d, 3-bit > 8-bit in %d/%zu (3b/8b: %s)", e3.size(),
                         nonzero_self, dominated, blocks, series.c_str()));
}

// ---- 9 ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {Status::fail, "asq executable not given or missing"};
  const auto root = fs::temp_directory_path() / fmt("asq-accept-%d", static_cast<int>(::getpid()));
  fs::remove_all(root);
  std::vector<std::string> runs;
  for (const char* tag : {"a", "b"}) {
    const auto out = root / tag;
    const std::string cmd = "\"" + cli + "\" --out \"" + out.string() +
                            "\" --seed 11 --epochs 2 --no-timestamps --set data.synthetic.train_samples=128 train "
                            "> /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {Status::fail, "train run exited non-zero: " + cmd};
    runs.push_back(slurp(out / "history.csv"));
  }
  fs::remove_all(root);
  const bool ok = !runs[0].empty() && runs[0] == runs[1];
  return verdict(ok, fmt("two seeded train runs, history.csv %zu bytes, %s", runs[0].size(),
                         ok ? "byte-identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::vector<int> only;
  for (int i = 2; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  struct Criterion {
    int id;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, 1, level_sets},      {2, 10, gradient_identities}, {3, 120, finite_differences},
      {4, 30, integer_path},   {5, 1, overhead},             {6, 60, code_utilization},
      {7, 3600, desk_qat},     {8, 120, block_errors},       {9, 0, [&] { return determinism(cli); }},
  };
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.status == Status::pass && c.limit_s > 0 && secs > c.limit_s) {
      o.status = Status::fail;
      o.detail += fmt("; over the %.0f s budget", c.limit_s);
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "BLOCKED";
    std::printf("criterion %d: %-7s %s [%.2f s]\n", c.id, tag, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.status == Status::fail;
  }
  return failures == 0 ? 0 : 1;
}
