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

#include "asq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "asq/trainer.hpp"

namespace asq::analysis {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::int64_t positive_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) fail(ErrorKind::config_schema, where + ": missing field '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
    fail(ErrorKind::config_schema, where + "." + key + ": expected a positive integer");
  return v.get<std::int64_t>();
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) fail(ErrorKind::config_schema, where + ": unknown field '" + k + "'");
}

}  // namespace

ArchSpec arch_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::config_schema, "arch spec must be an object");
  reject_unknown(j, {"model", "layers"}, "arch");
  ArchSpec a;
  a.model = j.value("model", std::string("unnamed"));
  if (!j.contains("layers") || !j.at("layers").is_array()) fail(ErrorKind::config_schema, "arch.layers: expected an array");
  std::size_t i = 0;
  for (const auto& l : j.at("layers")) {
    const std::string where = "arch.layers[" + std::to_string(i++) + "]";
    if (!l.is_object() || !l.contains("type") || !l.at("type").is_string())
      fail(ErrorKind::config_schema, where + ": expected an object with a string 'type'");
    LayerRecord r;
    r.name = l.value("name", std::string());
    const auto type = l.at("type").get<std::string>();
    if (type == "conv") {
      reject_unknown(l, {"type", "name", "C_in", "C_out", "K_w", "K_h", "H_out", "W_out"}, where);
      r.type = LayerType::conv;
      r.c_in = positive_field(l, "C_in", where);
      r.c_out = positive_field(l, "C_out", where);
      r.k_w = positive_field(l, "K_w", where);
      r.k_h = positive_field(l, "K_h", where);
      r.h_out = positive_field(l, "H_out", where);
      r.w_out = positive_field(l, "W_out", where);
    } else if (type == "linear") {
      reject_unknown(l, {"type", "name", "N_in", "N_out"}, where);
      r.type = LayerType::linear;
      r.n_in = positive_field(l, "N_in", where);
      r.n_out = positive_field(l, "N_out", where);
    } else if (type == "other") {
      reject_unknown(l, {"type", "name"}, where);
    } else {
      fail(ErrorKind::config_schema, where + ".type: expected conv, linear or other, got '" + type + "'");
    }
    a.layers.push_back(std::move(r));
  }
  return a;
}

json arch_to_json(const ArchSpec& arch) {
  json layers = json::array();
  for (const auto& r : arch.layers) {
    json l;
    l["name"] = r.name;
    switch (r.type) {
      case LayerType::conv:
        l["type"] = "conv";
        l["C_in"] = r.c_in;
        l["C_out"] = r.c_out;
        l["K_w"] = r.k_w;
        l["K_h"] = r.k_h;
        l["H_out"] = r.h_out;
        l["W_out"] = r.w_out;
        break;
      case LayerType::linear:
        l["type"] = "linear";
        l["N_in"] = r.n_in;
        l["N_out"] = r.n_out;
        break;
      case LayerType::other:
        l["type"] = "other";
        break;
    }
    layers.push_back(std::move(l));
  }
  return {{"model", arch.model}, {"layers", layers}};
}

ArchSpec load_arch_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config_path, "cannot open arch spec " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::config_schema, path.string() + ": " + e.what());
  }
  return arch_from_json(j);
}

ArchSpec resnet18_arch() {
  ArchSpec a;
  a.model = "resnet18";
  auto conv = [&](std::string name, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t hw) {
    a.layers.push_back({LayerType::conv, std::move(name), cin, cout, k, k, hw, hw});
  };
  conv("conv1", 3, 64, 7, 112);
  a.layers.push_back({LayerType::other, "maxpool"});
  std::int64_t cin = 64, hw = 56;
  for (int stage = 1; stage <= 4; ++stage) {
    const std::int64_t cout = 64 << (stage - 1);
    if (stage > 1) hw /= 2;
    for (int block = 0; block < 2; ++block) {
      const auto p = "layer" + std::to_string(stage) + "." + std::to_string(block) + ".";
      conv(p + "conv1", block == 0 ? cin : cout, cout, 3, hw);
      conv(p + "conv2", cout, cout, 3, hw);
      if (stage > 1 && block == 0) conv(p + "downsample", cin, cout, 1, hw);
    }
    cin = cout;
  }
  a.layers.push_back({LayerType::other, "avgpool"});
  LayerRecord fc;
  fc.type = LayerType::linear;
  fc.name = "fc";
  fc.n_in = 512;
  fc.n_out = 1000;
  a.layers.push_back(fc);
  return a;
}

ArchSpec arch_from_model(const model::Model& m) {
  ArchSpec a;
  a.model = std::string(model::arch_name(m.spec.arch));
  std::int64_t hw = m.spec.image_size;
  for (const auto& l : m.layers) {
    LayerRecord r;
    r.name = l.name;
    if (l.kind == qat::LayerKind::conv2d) {
      const auto k = l.weight.dim(2);
      hw = (hw + 2 * l.geometry.padding - k) / l.geometry.stride + 1;
      r.type = LayerType::conv;
      r.c_out = l.weight.dim(0);
      r.c_in = l.weight.dim(1);
      r.k_h = k;
      r.k_w = l.weight.dim(3);
      r.h_out = r.w_out = hw;
    } else {
      r.type = LayerType::linear;
      r.n_out = l.weight.dim(0);
      r.n_in = l.weight.dim(1);
    }
    a.layers.push_back(std::move(r));
  }
  return a;
}

Counts param_count(const ArchSpec& arch) {
  Counts c;
  for (const auto& r : arch.layers) {
    std::int64_t v = 0;
    if (r.type == LayerType::conv) v = r.c_in * r.c_out * r.k_w * r.k_h;
    if (r.type == LayerType::linear) v = r.n_in * r.n_out + r.n_out;
    c.per_layer.push_back(v);
    c.total += v;
  }
  return c;
}

Counts ops_count(const ArchSpec& arch) {
  Counts c;
  for (const auto& r : arch.layers) {
    std::int64_t v = 0;
    if (r.type == LayerType::conv) v = r.c_in * r.c_out * r.h_out * r.w_out * r.k_w * r.k_h;
    if (r.type == LayerType::linear) v = r.n_in * r.n_out;
    c.per_layer.push_back(v);
    c.total += v;
  }
  return c;
}

std::int64_t quantized_storage(std::int64_t params, int bits) {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8 && bits != 32)
    fail(ErrorKind::invalid_argument, "storage bit-width must be one of 2, 3, 4, 8, 32");
  return params * bits;
}

double qops(double ops, int bits) {
  if (bits < 1 || bits > 32) fail(ErrorKind::invalid_argument, "QOPS bit-width must be in [1, 32]");
  return ops * static_cast<double>(bits) / 32.0;
}

AdapterSizing AdapterSizing::from_adapter(int depth, int hidden) {
  constexpr std::int64_t f = 4;
  const std::int64_t h = hidden;
  if (depth == 1) return {f + 1, f};
  return {f * h + h + h + 1, f * h + h};
}

OverheadReport overhead_report(const ArchSpec& arch, const AdapterSizing& sizing, const std::vector<int>& bits) {
  const auto params = param_count(arch);
  const auto ops = ops_count(arch);
  std::int64_t quantized_layers = 0;
  for (const auto& r : arch.layers) quantized_layers += r.type != LayerType::other;
  OverheadReport rep;
  rep.model = arch.model;
  for (int b : bits) {
    OverheadRow row;
    row.bits = b;
    row.base_params = params.total;
    row.adapter_params = sizing.params_per_layer * quantized_layers;
    row.quantized_storage_bits = quantized_storage(params.total, b);
    row.adapter_storage_bits = quantized_storage(row.adapter_params, 32);
    row.param_overhead_pct = row.quantized_storage_bits > 0
                                 ? static_cast<double>(row.adapter_storage_bits) / static_cast<double>(row.quantized_storage_bits) * 100.0
                                 : 0.0;
    row.base_ops = ops.total;
    row.adapter_ops = sizing.ops_per_layer * quantized_layers;
    row.qops = qops(static_cast<double>(ops.total), b);
    row.compute_overhead_qops_pct = row.qops > 0 ? static_cast<double>(row.adapter_ops) / row.qops * 100.0 : 0.0;
    row.compute_overhead_ops_pct =
        ops.total > 0 ? static_cast<double>(row.adapter_ops) / static_cast<double>(ops.total) * 100.0 : 0.0;
    rep.rows.push_back(row);
  }
  return rep;
}

void OverheadReport::write_csv(std::ostream& os) const {
  os << "model,bits,base_params,adapter_params,quantized_storage_bits,adapter_storage_bits,param_overhead_pct,"
        "base_ops,adapter_ops,qops,compute_overhead_qops_pct,compute_overhead_ops_pct\n";
  for (const auto& r : rows)
    os << model << ',' << r.bits << ',' << r.base_params << ',' << r.adapter_params << ',' << r.quantized_storage_bits
       << ',' << r.adapter_storage_bits << ',' << fmt(r.param_overhead_pct) << ',' << r.base_ops << ',' << r.adapter_ops
       << ',' << fmt(r.qops) << ',' << fmt(r.compute_overhead_qops_pct) << ',' << fmt(r.compute_overhead_ops_pct) << '\n';
  os << "# adapter storage counted at 32 bits per parameter; percentages depend on the adapter size, so only "
        "ratios across bit-widths are comparable with published tables\n";
}

// ---- histograms --------------------------------------------------------------

HistogramReport histogram_from_trace(const std::string& layer, int bits, const qat::LayerTrace& trace) {
  HistogramReport h;
  h.layer = layer;
  h.bits = bits;
  h.float_counts.assign(kHistogramBins, 0);
  h.quant_counts.assign(kHistogramBins, 0);
  const auto x = trace.input.data();
  const auto q = trace.dequant.data();
  if (x.empty()) fail(ErrorKind::invalid_argument, "layer '" + layer + "' recorded no activations");
  h.lo = *std::min_element(x.begin(), x.end());
  h.hi = *std::max_element(x.begin(), x.end());
  const double width = (h.hi - h.lo) / kHistogramBins;
  auto bin = [&](double v) {
    if (!(width > 0.0)) return 0;
    const auto b = static_cast<int>(std::floor((v - h.lo) / width));
    return std::clamp(b, 0, kHistogramBins - 1);
  };
  for (double v : x) ++h.float_counts[static_cast<std::size_t>(bin(v))];
  for (double v : q) ++h.quant_counts[static_cast<std::size_t>(bin(v))];
  h.beta = trace.beta;
  h.codes_used = static_cast<std::int64_t>(std::set<std::int32_t>(trace.codes.begin(), trace.codes.end()).size());
  h.utilization = static_cast<double>(h.codes_used) / static_cast<double>(std::int64_t{1} << bits);
  return h;
}

void HistogramReport::write_csv(std::ostream& os) const {
  os << "bin,lo,hi,float_count,quant_count\n";
  const double width = (hi - lo) / kHistogramBins;
  for (int b = 0; b < kHistogramBins; ++b)
    os << b << ',' << fmt(lo + b * width) << ',' << fmt(lo + (b + 1) * width) << ',' << float_counts[static_cast<std::size_t>(b)]
       << ',' << quant_counts[static_cast<std::size_t>(b)] << '\n';
  os << "# layer=" << layer << " bits=" << bits << " codes_used=" << codes_used << " utilization=" << fmt(utilization)
     << '\n';
}

void HistogramReport::write_beta_csv(std::ostream& os) const {
  os << "sample,beta\n";
  for (std::size_t i = 0; i < beta.size(); ++i) os << i << ',' << fmt(beta[i]) << '\n';
}

HistogramReport activation_histogram(model::Model& m, const Tensor& images, const std::string& layer) {
  auto& l = m.layer(layer);
  if (l.act_quantizer == qat::ActQuantizer::none)
    fail(ErrorKind::invalid_argument, "layer '" + layer + "' has no activation quantiser");
  qat::LayerTrace trace;
  l.trace = &trace;
  try {
    NoGradGuard ng;
    m.forward(images, false);
  } catch (...) {
    l.trace = nullptr;
    throw;
  }
  l.trace = nullptr;
  return histogram_from_trace(layer, l.bits_a, trace);
}

// ---- errors ----------------------------------------------------------------

std::vector<double> block_error_l2(model::Model& float_model, model::Model& quant_model, const Tensor& images) {
  NoGradGuard ng;
  std::vector<Tensor> fb, qb;
  float_model.forward(images, false, &fb);
  quant_model.forward(images, false, &qb);
  if (fb.size() != qb.size())
    fail(ErrorKind::dimension, "block-count mismatch: " + std::to_string(fb.size()) + " vs " + std::to_string(qb.size()));
  std::vector<double> out;
  for (std::size_t b = 0; b < fb.size(); ++b) {
    if (fb[b].shape() != qb[b].shape()) fail(ErrorKind::dimension, "block " + std::to_string(b) + " shapes differ");
    const auto n = fb[b].dim(0);
    const auto per = fb[b].numel() / n;
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double ss = 0.0;
      for (std::int64_t j = 0; j < per; ++j) {
        const double d = fb[b][i * per + j] - qb[b][i * per + j];
        ss += d * d;
      }
      acc += std::sqrt(ss);
    }
    out.push_back(acc / static_cast<double>(n));
  }
  return out;
}

void write_block_error_csv(std::ostream& os, const std::vector<double>& errors) {
  os << "block,l2_error\n";
  for (std::size_t i = 0; i < errors.size(); ++i) os << i + 1 << ',' << fmt(errors[i]) << '\n';
}

std::vector<LayerErrorRow> layer_quant_error(model::Model& m, const Tensor& images, const std::vector<std::string>& layers,
                                             std::int64_t batch_size) {
  std::vector<qat::LayerTrace> traces(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = m.layer(layers[i]);
    if (l.act_quantizer == qat::ActQuantizer::none)
      fail(ErrorKind::invalid_argument, "layer '" + layers[i] + "' has no activation quantiser");
  }
  std::vector<LayerErrorRow> rows;
  const auto n = images.dim(0);
  const auto per = images.numel() / n;
  NoGradGuard ng;
  for (auto& name : layers) m.layer(name).trace = &traces[static_cast<std::size_t>(&name - layers.data())];
  std::int64_t batch = 0;
  try {
    for (std::int64_t b = 0; b < n; b += batch_size, ++batch) {
      const auto cnt = std::min(batch_size, n - b);
      Shape s = images.shape();
      s[0] = cnt;
      m.forward(Tensor(s, std::vector<double>(images.storage().begin() + b * per, images.storage().begin() + (b + cnt) * per)),
                false);
      for (std::size_t i = 0; i < layers.size(); ++i) {
        double ss = 0.0;
        const auto a = traces[i].input.data(), q = traces[i].dequant.data();
        for (std::size_t j = 0; j < a.size(); ++j) ss += (a[j] - q[j]) * (a[j] - q[j]);
        rows.push_back({layers[i], batch, std::sqrt(ss)});
      }
    }
  } catch (...) {
    for (auto& name : layers) m.layer(name).trace = nullptr;
    throw;
  }
  for (auto& name : layers) m.layer(name).trace = nullptr;
  return rows;
}

void write_layer_error_csv(std::ostream& os, const std::vector<LayerErrorRow>& rows) {
  os << "layer,batch,l2_error\n";
  std::vector<std::string> order;
  for (const auto& r : rows) {
    os << r.layer << ',' << r.batch << ',' << fmt(r.l2) << '\n';
    if (std::find(order.begin(), order.end(), r.layer) == order.end()) order.push_back(r.layer);
  }
  for (const auto& name : order) {
    double sum = 0.0, sq = 0.0;
    std::int64_t k = 0;
    for (const auto& r : rows)
      if (r.layer == name) {
        sum += r.l2;
        ++k;
      }
    const double mean = sum / static_cast<double>(k);
    for (const auto& r : rows)
      if (r.layer == name) sq += (r.l2 - mean) * (r.l2 - mean);
    os << name << ",mean," << fmt(mean) << '\n' << name << ",variance," << fmt(sq / static_cast<double>(k)) << '\n';
  }
}

// ---- constructed shift case -------------------------------------------------

namespace {

Tensor shift_batch(const ShiftExperimentConfig& c, Rng& rng) {
  Tensor x(Shape{c.samples, c.elements});
  for (std::int64_t i = 0; i < c.samples; ++i) {
    const double sigma = uniform(rng, c.sigma_lo, c.sigma_hi);
    for (std::int64_t j = 0; j < c.elements; ++j) x[i * c.elements + j] = uniform(rng, 0.0, sigma);
  }
  return x;
}

double l2(std::span<const double> a, std::span<const double> b) {
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(ss);
}

}  // namespace

ShiftExperimentResult shift_experiment(const ShiftExperimentConfig& c) {
  const auto range = quant::IntRange::unsigned_range(c.bits);
  const Tensor step = Tensor::scalar(c.step);
  auto params = adapter::adapter_init(2, 16, derive_seed(c.seed, "shift.adapter"));
  std::vector<qat::Param> trainable;
  for (auto& nt : params.named_parameters("adapter.")) {
    const bool bias = nt.name.rfind("adapter.b", 0) == 0;
    trainable.push_back({nt.name, nt.tensor, bias ? qat::ParamRole::adapter_bias : qat::ParamRole::adapter_weight});
  }
  Rng train_rng(derive_seed(c.seed, "shift.train"));
  train::SgdState sgd;
  ShiftExperimentResult res;
  for (int t = 0; t < c.steps; ++t) {
    const Tensor x = shift_batch(c, train_rng);
    const Tensor beta = adapter::adapter_forward(adapter::featurize(x, c.step, range), params);
    const Tensor xq = quant::fake_quant_asq(x, step, beta, range, quant::DequantMode::adaptive, false);
    const Tensor loss = ops::mse(xq, x);
    for (auto& p : trainable) p.tensor.zero_grad();
    backward(loss);
    NoGradGuard ng;
    train::sgd_step(trainable, sgd, c.lr, c.momentum, 0.0);
    res.steps_run = t + 1;
  }

  Rng eval_rng(derive_seed(c.seed, "shift.eval"));
  const Tensor x = shift_batch(c, eval_rng);
  NoGradGuard ng;
  qat::LayerTrace lsq, asq;
  const auto u = quant::quant_dequant_uniform(x.data(), {c.step}, range);
  lsq.input = x;
  lsq.dequant = Tensor(x.shape(), u.values);
  lsq.codes = u.codes;
  lsq.beta.assign(static_cast<std::size_t>(c.samples), 1.0);
  const Tensor beta = adapter::adapter_forward(adapter::featurize(x, c.step, range), params);
  const auto a = quant::asq_forward(x.data(), {c.step}, beta.data(), range, quant::DequantMode::adaptive);
  asq.input = x;
  asq.dequant = Tensor(x.shape(), a.values);
  asq.codes = a.codes;
  asq.beta.assign(beta.data().begin(), beta.data().end());
  res.lsq_hist = histogram_from_trace("shift-lsq", c.bits, lsq);
  res.asq_hist = histogram_from_trace("shift-asq", c.bits, asq);
  res.lsq_codes_used = res.lsq_hist.codes_used;
  res.asq_codes_used = res.asq_hist.codes_used;
  res.code_count = std::int64_t{1} << c.bits;
  res.lsq_error_l2 = l2(x.data(), u.values);
  res.asq_error_l2 = l2(x.data(), a.values);
  double bsum = 0.0;
  for (double b : asq.beta) bsum += b;
  res.mean_beta = bsum / static_cast<double>(asq.beta.size());
  return res;
}

}  // namespace asq::analysis
