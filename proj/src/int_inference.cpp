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

#include "asq/int_inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "asq/adapter.hpp"
#include "asq/checkpoint.hpp"
#include "asq/rng.hpp"

namespace asq::intinf {

// ---- LUT and scalar product ------------------------------------------------

OddExpLut build_lut(int bits_w, quant::IntRange range) {
  qat::validate_bits(bits_w);
  qat::validate_bits(range.bits);
  OddExpLut lut;
  lut.bits_w = bits_w;
  lut.range = range;
  const int top = quant::max_exponent(bits_w);
  for (int e = 1; e <= top; e += 2) lut.exps.push_back(e);
  lut.entries.reserve(lut.exps.size() * static_cast<std::size_t>(lut.row_stride()));
  for (int e : lut.exps) {
    const double m = quant::level_magnitude(quant::LevelScheme::post, e);
    for (std::int64_t a = range.n; a <= range.p; ++a)
      lut.entries.push_back(static_cast<std::int16_t>(quant::round_half_away(static_cast<double>(a) * m)));
    lut.entries.push_back(0);
  }
  return lut;
}

std::int16_t OddExpLut::at(int exp, std::int32_t a) const {
  if (!range.contains(a)) fail(ErrorKind::invalid_argument, "activation code " + std::to_string(a) + " outside the table");
  return row(exp).entries[a - range.n];
}

kernels::LutRow OddExpLut::row(int exp) const {
  const auto it = std::lower_bound(exps.begin(), exps.end(), exp);
  if (it == exps.end() || *it != exp)
    fail(ErrorKind::invalid_argument, "exponent " + std::to_string(exp) + " has no table row");
  const auto r = std::distance(exps.begin(), it);
  return {entries.data() + r * row_stride(), static_cast<std::int32_t>(range.n)};
}

std::int64_t post_mul(PostWeight w, std::int32_t a, const OddExpLut& lut, bool literal_floor) {
  if (w.zero) return 0;
  if (w.exp < 0 || w.exp > quant::max_exponent(lut.bits_w))
    fail(ErrorKind::invalid_argument, "exponent " + std::to_string(w.exp) + " outside the " +
                                          std::to_string(lut.bits_w) + "-bit code range");
  std::int64_t r;
  if (w.exp % 2 == 0)
    r = literal_floor ? (a >> (w.exp / 2)) : kernels::rounding_shift(a, w.exp / 2);
  else
    r = lut.at(w.exp, a);
  return w.sign < 0 ? -r : r;
}

// ---- coded weights ---------------------------------------------------------

PostCodedWeights encode_post(std::span<const double> w, Shape shape, double alpha, int bits) {
  if (shape_numel(shape) != static_cast<std::int64_t>(w.size()))
    fail(ErrorKind::dimension, "encode_post: shape does not match the weight count");
  const auto book = quant::make_levels(quant::LevelScheme::post, {alpha}, bits, false);
  const auto proj = quant::quantize_to_levels(w, book);
  PostCodedWeights out{std::move(shape), {}, alpha, bits};
  out.codes.reserve(w.size());
  for (const auto& c : proj.codes) out.codes.push_back({c.sign, c.exp, c.zero});
  return out;
}

std::vector<double> decode_post(const PostCodedWeights& w) {
  std::vector<double> out;
  out.reserve(w.codes.size());
  for (const auto& c : w.codes)
    out.push_back(c.zero ? 0.0 : (c.sign < 0 ? -1.0 : 1.0) * (w.alpha * quant::level_magnitude(quant::LevelScheme::post, c.exp)));
  return out;
}

// ---- matmul ----------------------------------------------------------------

void check_accumulator_bound(std::int64_t k, std::int64_t max_product) {
  if (k < 0 || max_product < 0) fail(ErrorKind::invalid_argument, "accumulator bound needs nonnegative inputs");
  if (max_product != 0 && k > std::numeric_limits<std::int64_t>::max() / max_product)
    fail(ErrorKind::overflow, "accumulator could overflow: " + std::to_string(k) + " products of magnitude up to " +
                                  std::to_string(max_product));
}

namespace {

std::int64_t max_abs_code(quant::IntRange r) { return std::max(-r.n, r.p); }

}  // namespace

std::vector<std::int64_t> int_matmul(const PostCodedWeights& w, std::span<const std::int32_t> a, std::int64_t n,
                                     const OddExpLut& lut, bool literal_floor, IntStats* stats) {
  if (w.shape.size() != 2) fail(ErrorKind::dimension, "int_matmul expects a 2-D weight");
  const auto m = w.shape[0], k = w.shape[1];
  if (static_cast<std::int64_t>(a.size()) != k * n)
    fail(ErrorKind::dimension, "int_matmul: activation has " + std::to_string(a.size()) + " codes, expected " +
                                   std::to_string(k * n));
  if (w.bits != lut.bits_w) fail(ErrorKind::invalid_argument, "int_matmul: table built for a different bit-width");
  check_accumulator_bound(k, max_abs_code(lut.range));
  for (auto c : a)
    if (!lut.range.contains(c)) fail(ErrorKind::invalid_argument, "int_matmul: activation code outside the table range");
  const int top = quant::max_exponent(w.bits);
  std::vector<std::int64_t> acc(static_cast<std::size_t>(m * n), 0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t t = 0; t < k; ++t) {
      const auto& c = w.codes[static_cast<std::size_t>(i * k + t)];
      if (c.zero) continue;
      if (c.exp < 0 || c.exp > top)
        fail(ErrorKind::invalid_argument, "exponent " + std::to_string(c.exp) + " outside the code range");
      const bool odd = c.exp % 2 != 0;
      kernels::post_axpy(c, a.data() + t * n, n, odd ? lut.row(c.exp) : kernels::LutRow{}, literal_floor,
                         acc.data() + i * n);
      if (stats) {
        if (odd) {
          ++stats->lut_rows;
          stats->lut_lookups += n;
        } else {
          ++stats->shift_rows;
        }
      }
    }
  return acc;
}

std::vector<std::int64_t> int_matmul_uniform(std::span<const std::int32_t> w, std::int64_t m, std::int64_t k,
                                             std::span<const std::int32_t> a, std::int64_t n) {
  if (static_cast<std::int64_t>(w.size()) != m * k || static_cast<std::int64_t>(a.size()) != k * n)
    fail(ErrorKind::dimension, "int_matmul_uniform: operand sizes do not match");
  std::int64_t wmax = 0, amax = 0;
  for (auto v : w) wmax = std::max<std::int64_t>(wmax, std::abs(v));
  for (auto v : a) amax = std::max<std::int64_t>(amax, std::abs(v));
  check_accumulator_bound(k, wmax * amax);
  std::vector<std::int64_t> acc(static_cast<std::size_t>(m * n), 0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t t = 0; t < k; ++t) {
      const auto wv = w[static_cast<std::size_t>(i * k + t)];
      if (wv != 0) kernels::int_axpy(wv, a.data() + t * n, n, acc.data() + i * n);
    }
  return acc;
}

// ---- layers ----------------------------------------------------------------

namespace {

// codes[Cin x H x W] -> cols[(Cin*K*K) x (Ho*Wo)], zero code outside the image.
std::vector<std::int32_t> im2col_codes(const std::int32_t* x, std::int64_t c, std::int64_t h, std::int64_t w,
                                       std::int64_t k, std::int64_t stride, std::int64_t pad, std::int64_t ho,
                                       std::int64_t wo) {
  std::vector<std::int32_t> cols(static_cast<std::size_t>(c * k * k * ho * wo), 0);
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < k; ++i)
      for (std::int64_t j = 0; j < k; ++j) {
        std::int32_t* row = cols.data() + ((ch * k + i) * k + j) * ho * wo;
        for (std::int64_t y = 0; y < ho; ++y) {
          const std::int64_t iy = y * stride + i - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t z = 0; z < wo; ++z) {
            const std::int64_t ix = z * stride + j - pad;
            if (ix >= 0 && ix < w) row[y * wo + z] = x[(ch * h + iy) * w + ix];
          }
        }
      }
  return cols;
}

Tensor run_int_layer(const qat::QLayer& layer, const IntLayer& il, const Tensor& x) {
  NoGradGuard ng;
  const auto n = x.dim(0);
  std::vector<double> beta(static_cast<std::size_t>(n), 1.0);
  quant::QuantResult q;
  if (layer.act_quantizer == qat::ActQuantizer::asq) {
    const Tensor b = adapter::adapter_forward(adapter::featurize(x, il.act_step, layer.act_range), *layer.adapter);
    beta.assign(b.data().begin(), b.data().end());
    q = quant::asq_forward(x.data(), {il.act_step}, beta, layer.act_range, layer.dequant_mode);
  } else {
    q = quant::quant_dequant_uniform(x.data(), {il.act_step}, layer.act_range);
  }
  const bool adaptive = layer.act_quantizer == qat::ActQuantizer::asq && layer.dequant_mode == quant::DequantMode::adaptive;
  auto out_scale = [&](std::int64_t i) {
    const double s = adaptive ? il.act_step * beta[static_cast<std::size_t>(i)] : il.act_step;
    return il.weight_scale * s;
  };
  const auto cout = il.weight_shape[0];
  const std::int64_t kdim = shape_numel(il.weight_shape) / cout;
  auto matmul = [&](std::span<const std::int32_t> cols, std::int64_t ncols) {
    if (il.post) return int_matmul(il.post_weights2d(), cols, ncols, il.lut, il.literal_floor, il.stats.get());
    return int_matmul_uniform(il.uniform_codes, cout, kdim, cols, ncols);
  };

  if (layer.kind == qat::LayerKind::conv2d) {
    const auto c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto k = il.weight_shape[2];
    const auto stride = layer.geometry.stride, pad = layer.geometry.padding;
    const auto ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
    Tensor out(Shape{n, cout, ho, wo});
    for (std::int64_t i = 0; i < n; ++i) {
      const auto cols = im2col_codes(q.codes.data() + i * c * h * w, c, h, w, k, stride, pad, ho, wo);
      const auto acc = matmul(cols, ho * wo);
      const double sc = out_scale(i);
      for (std::int64_t o = 0; o < cout; ++o) {
        const double b = layer.bias.defined() ? layer.bias[o] : 0.0;
        for (std::int64_t p = 0; p < ho * wo; ++p)
          out[(i * cout + o) * ho * wo + p] = static_cast<double>(acc[static_cast<std::size_t>(o * ho * wo + p)]) * sc + b;
      }
    }
    return out;
  }
  const auto f = x.dim(1);
  std::vector<std::int32_t> at(static_cast<std::size_t>(f * n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t t = 0; t < f; ++t) at[static_cast<std::size_t>(t * n + i)] = q.codes[static_cast<std::size_t>(i * f + t)];
  const auto acc = matmul(at, n);
  Tensor out(Shape{n, cout});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < cout; ++o)
      out[i * cout + o] = static_cast<double>(acc[static_cast<std::size_t>(o * n + i)]) * out_scale(i) +
                          (layer.bias.defined() ? layer.bias[o] : 0.0);
  return out;
}

}  // namespace

PostCodedWeights IntLayer::post_weights2d() const {
  PostCodedWeights w = post_weights;
  const auto m = weight_shape[0];
  w.shape = {m, shape_numel(weight_shape) / m};
  return w;
}

void IntModel::install() {
  for (auto& il : layers) {
    const IntLayer* ptr = &il;
    glue.layer(il.name).int_forward = [ptr](const qat::QLayer& l, const Tensor& x) { return run_int_layer(l, *ptr, x); };
  }
}

IntStats IntModel::total_stats() const {
  IntStats s;
  for (const auto& l : layers) {
    s.lut_rows += l.stats->lut_rows;
    s.shift_rows += l.stats->shift_rows;
    s.lut_lookups += l.stats->lut_lookups;
  }
  return s;
}

IntModel export_int_model(const model::Model& m, bool literal_floor) {
  bool any_post = false;
  for (const auto& l : m.layers) any_post |= l.weight_quantizer == qat::WeightQuantizer::post;
  if (m.policy.scheme != qat::Scheme::scheme2 || !any_post)
    fail(ErrorKind::unsupported_scheme, "integer export needs a scheme2 model (POST weights), got " +
                                            std::string(qat::scheme_name(m.policy.scheme)));
  IntModel im;
  im.glue = model::load_model(m.state());
  for (const auto& l : m.layers) {
    if (!l.act_step_ready) fail(ErrorKind::invalid_argument, "layer '" + l.name + "' has no initialised activation step");
    IntLayer il;
    il.name = l.name;
    il.bits_w = l.bits_w;
    il.bits_a = l.bits_a;
    il.act_step = l.act_step[0];
    il.weight_scale = l.weight_param[0];
    il.weight_shape = l.weight.shape();
    il.literal_floor = literal_floor;
    if (l.weight_quantizer == qat::WeightQuantizer::post) {
      if (l.full_levels)
        fail(ErrorKind::unsupported_scheme, "layer '" + l.name + "' uses the full nominal level set, which has no b-bit code");
      il.post = true;
      il.post_weights = encode_post(l.weight.data(), l.weight.shape(), il.weight_scale, l.bits_w);
      il.lut = build_lut(l.bits_w, l.act_range);
    } else if (l.weight_quantizer == qat::WeightQuantizer::uniform) {
      il.post = false;
      const auto q = quant::quant_dequant_uniform(l.weight.data(), {il.weight_scale}, quant::IntRange::signed_range(l.bits_w));
      il.uniform_codes = q.codes;
    } else {
      fail(ErrorKind::unsupported_scheme, "layer '" + l.name + "' has no integer weight representation");
    }
    im.layers.push_back(std::move(il));
  }
  return im;
}

Tensor int_infer(IntModel& im, const Tensor& images, std::int64_t batch_size) {
  im.install();
  NoGradGuard ng;
  const auto n = images.dim(0);
  const std::int64_t per = images.numel() / n;
  std::vector<double> out;
  std::int64_t classes = 0;
  for (std::int64_t b = 0; b < n; b += batch_size) {
    const auto cnt = std::min(batch_size, n - b);
    Shape s = images.shape();
    s[0] = cnt;
    Tensor batch(s, std::vector<double>(images.storage().begin() + b * per, images.storage().begin() + (b + cnt) * per));
    const Tensor logits = im.glue.forward(batch, false);
    classes = logits.dim(1);
    out.insert(out.end(), logits.storage().begin(), logits.storage().end());
  }
  return Tensor(Shape{n, classes}, std::move(out));
}

// ---- file format -----------------------------------------------------------

namespace {

void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

std::uint8_t get_u8(std::istream& is, const char* what) {
  const auto offset = static_cast<long long>(is.tellg());
  const int c = is.get();
  if (c == EOF) fail(ErrorKind::format, std::string("truncated int model reading ") + what + " at byte offset " + std::to_string(offset));
  return static_cast<std::uint8_t>(c);
}

void put_bits(std::ostream& os, const std::vector<std::uint32_t>& values, int width) {
  std::vector<std::uint8_t> bytes((values.size() * static_cast<std::size_t>(width) + 7) / 8, 0);
  std::size_t bit = 0;
  for (auto v : values)
    for (int b = 0; b < width; ++b, ++bit)
      if ((v >> b) & 1u) bytes[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint32_t> get_bits(std::istream& is, std::size_t count, int width, const char* what) {
  std::vector<std::uint8_t> bytes((count * static_cast<std::size_t>(width) + 7) / 8);
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    fail(ErrorKind::format, std::string("truncated int model reading ") + what + " at byte offset " + std::to_string(offset));
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bit = 0;
  for (auto& v : out)
    for (int b = 0; b < width; ++b, ++bit)
      if ((bytes[bit / 8] >> (bit % 8)) & 1u) v |= 1u << b;
  return out;
}

}  // namespace

void save_int_model(const std::filesystem::path& path, const IntModel& im) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  os.write(kIntModelMagic, 8);
  le::put_u64(os, im.layers.size());
  for (const auto& l : im.layers) {
    le::put_u64(os, l.name.size());
    os.write(l.name.data(), static_cast<std::streamsize>(l.name.size()));
    put_u8(os, l.post ? 1 : 0);
    put_u8(os, static_cast<std::uint8_t>(l.bits_w));
    put_u8(os, static_cast<std::uint8_t>(l.bits_a));
    put_u8(os, l.literal_floor ? 1 : 0);
    le::put_f64(os, l.weight_scale);
    le::put_f64(os, l.act_step);
    le::put_u64(os, l.weight_shape.size());
    for (auto e : l.weight_shape) le::put_u64(os, static_cast<std::uint64_t>(e));
    if (l.post) {
      std::vector<std::uint32_t> signs, exps, zeros;
      for (const auto& c : l.post_weights.codes) {
        signs.push_back(c.sign < 0 ? 1u : 0u);
        exps.push_back(static_cast<std::uint32_t>(c.zero ? 0 : c.exp));
        zeros.push_back(c.zero ? 1u : 0u);
      }
      put_bits(os, signs, 1);
      put_bits(os, exps, l.bits_w - 1);
      put_bits(os, zeros, 1);
    } else {
      std::vector<std::uint32_t> codes;
      const std::uint32_t mask = (1u << l.bits_w) - 1u;
      for (auto c : l.uniform_codes) codes.push_back(static_cast<std::uint32_t>(c) & mask);
      put_bits(os, codes, l.bits_w);
    }
  }
  // Float glue: the model state without the integer layers' float weights.
  std::vector<NamedTensor> glue;
  for (auto& nt : im.glue.state()) {
    bool drop = false;
    for (const auto& l : im.layers) drop |= nt.name == l.name + ".weight";
    if (!drop) glue.push_back(std::move(nt));
  }
  write_checkpoint(os, glue);
  if (!os) fail(ErrorKind::io, "failed writing " + path.string());
}

IntModel load_int_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != std::string(kIntModelMagic, 8))
    fail(ErrorKind::format, path.string() + ": bad int model magic at byte offset 0");
  const auto count = le::get_u64(is, "layer count");
  if (count > 4096) fail(ErrorKind::format, path.string() + ": implausible layer count");
  IntModel im;
  for (std::uint64_t i = 0; i < count; ++i) {
    IntLayer l;
    const auto len = le::get_u64(is, "name length");
    if (len > 4096) fail(ErrorKind::format, path.string() + ": implausible name length");
    l.name.resize(len);
    if (!is.read(l.name.data(), static_cast<std::streamsize>(len))) fail(ErrorKind::format, "truncated layer name");
    l.post = get_u8(is, "scheme") == 1;
    l.bits_w = get_u8(is, "weight bits");
    l.bits_a = get_u8(is, "activation bits");
    l.literal_floor = get_u8(is, "floor flag") != 0;
    qat::validate_bits(l.bits_w);
    qat::validate_bits(l.bits_a);
    l.weight_scale = le::get_f64(is, "weight scale");
    l.act_step = le::get_f64(is, "activation step");
    const auto rank = le::get_u64(is, "rank");
    if (rank > 8) fail(ErrorKind::format, path.string() + ": implausible rank");
    for (std::uint64_t r = 0; r < rank; ++r) l.weight_shape.push_back(static_cast<std::int64_t>(le::get_u64(is, "extent")));
    const auto numel = static_cast<std::size_t>(shape_numel(l.weight_shape));
    if (l.post) {
      const auto signs = get_bits(is, numel, 1, "sign bitmap");
      const auto exps = get_bits(is, numel, l.bits_w - 1, "exponent codes");
      const auto zeros = get_bits(is, numel, 1, "zero bitmap");
      l.post_weights = {l.weight_shape, {}, l.weight_scale, l.bits_w};
      for (std::size_t j = 0; j < numel; ++j)
        l.post_weights.codes.push_back({signs[j] ? -1 : 1, static_cast<int>(exps[j]), zeros[j] != 0});
    } else {
      const auto raw = get_bits(is, numel, l.bits_w, "weight codes");
      const std::uint32_t sign_bit = 1u << (l.bits_w - 1);
      for (auto v : raw) l.uniform_codes.push_back(static_cast<std::int32_t>((v ^ sign_bit)) - static_cast<std::int32_t>(sign_bit));
    }
    im.layers.push_back(std::move(l));
  }
  auto glue = read_checkpoint(is);
  for (const auto& l : im.layers) glue.push_back({l.name + ".weight", Tensor(l.weight_shape)});
  im.glue = model::load_model(glue);
  for (auto& l : im.layers) {
    auto& q = im.glue.layer(l.name);
    if (l.post) l.lut = build_lut(l.bits_w, q.act_range);
    // The glue layer's float weight is a placeholder; restore the quantised
    // value so simulation and integer paths describe the same network.
    const auto w = l.post ? decode_post(l.post_weights) : std::vector<double>{};
    if (l.post) std::copy(w.begin(), w.end(), q.weight.data().begin());
    else
      for (std::size_t j = 0; j < l.uniform_codes.size(); ++j) q.weight[static_cast<std::int64_t>(j)] = l.uniform_codes[j] * l.weight_scale;
  }
  return im;
}

// ---- benchmark -------------------------------------------------------------

namespace {

template <class F>
double median_ns(F&& f, int repeats, double ops) {
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    const auto stop = std::chrono::steady_clock::now();
    t.push_back(std::chrono::duration<double, std::nano>(stop - start).count() / ops);
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

std::vector<BenchRow> bench_post_vs_uniform(const std::vector<std::int64_t>& sizes, int repeats, std::uint64_t seed) {
  if (repeats < 1) fail(ErrorKind::invalid_argument, "bench needs repeats >= 1");
  constexpr int bits_w = 3;
  const auto range = quant::IntRange::unsigned_range(8);
  const auto lut = build_lut(bits_w, range);
  Rng rng(derive_seed(seed, "bench"));
  std::vector<BenchRow> rows;
  for (auto n : sizes) {
    if (n < 1) fail(ErrorKind::invalid_argument, "bench sizes must be positive");
    std::vector<std::int32_t> a(static_cast<std::size_t>(n * n));
    for (auto& v : a) v = std::uniform_int_distribution<std::int32_t>(0, 255)(rng);
    PostCodedWeights even{{n, n}, {}, 1.0, bits_w}, mixed{{n, n}, {}, 1.0, bits_w};
    std::vector<std::int32_t> ints(static_cast<std::size_t>(n * n));
    for (std::int64_t i = 0; i < n * n; ++i) {
      const int sign = std::uniform_int_distribution<int>(0, 1)(rng) ? 1 : -1;
      even.codes.push_back({sign, 2 * std::uniform_int_distribution<int>(0, 1)(rng), false});
      mixed.codes.push_back({sign, std::uniform_int_distribution<int>(0, 3)(rng), false});
      ints[static_cast<std::size_t>(i)] = std::uniform_int_distribution<std::int32_t>(-4, 3)(rng);
      if (ints[static_cast<std::size_t>(i)] == 0) ints[static_cast<std::size_t>(i)] = 1;
    }
    const double ops = static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(n);
    volatile std::int64_t sink = 0;
    BenchRow row;
    row.size = n;
    row.shift_ns = median_ns([&] { sink = sink + int_matmul(even, a, n, lut)[0]; }, repeats, ops);
    row.lut_ns = median_ns([&] { sink = sink + int_matmul(mixed, a, n, lut)[0]; }, repeats, ops);
    row.int_mul_ns = median_ns([&] { sink = sink + int_matmul_uniform(ints, n, n, a, n)[0]; }, repeats, ops);
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "size,shift_ns_per_mac,lut_mixed_ns_per_mac,int_mul_ns_per_mac\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.6g,%.6g,%.6g\n", static_cast<long long>(r.size), r.shift_ns, r.lut_ns,
                  r.int_mul_ns);
    os << buf;
  }
}

}  // namespace asq::intinf
