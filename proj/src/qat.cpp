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

#include "asq/qat.hpp"

#include <algorithm>
#include <cmath>

namespace asq::qat {

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::float_model: return "float";
    case Scheme::scheme1: return "scheme1";
    case Scheme::scheme2: return "scheme2";
    case Scheme::lsq_baseline: return "lsq-baseline";
    case Scheme::pot_weights: return "pot-weights";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  for (auto s : {Scheme::float_model, Scheme::scheme1, Scheme::scheme2, Scheme::lsq_baseline, Scheme::pot_weights})
    if (scheme_name(s) == name) return s;
  fail(ErrorKind::invalid_argument, "unknown scheme '" + std::string(name) +
                                        "' (expected float, scheme1, scheme2, lsq-baseline, pot-weights)");
}

std::string_view dequant_mode_name(quant::DequantMode mode) {
  return mode == quant::DequantMode::base ? "base" : "adaptive";
}

quant::DequantMode parse_dequant_mode(std::string_view name) {
  if (name == "base") return quant::DequantMode::base;
  if (name == "adaptive") return quant::DequantMode::adaptive;
  fail(ErrorKind::invalid_argument, "unknown dequant mode '" + std::string(name) + "' (expected base, adaptive)");
}

void validate_bits(int bits) {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8)
    fail(ErrorKind::invalid_argument, "bit-width must be one of 2, 3, 4, 8; got " + std::to_string(bits));
}

quant::LevelScheme QLayer::level_scheme() const {
  return weight_quantizer == WeightQuantizer::pot ? quant::LevelScheme::pot : quant::LevelScheme::post;
}

void QLayer::init_weight_param() {
  NoGradGuard ng;
  switch (weight_quantizer) {
    case WeightQuantizer::none:
      return;
    case WeightQuantizer::uniform:
      weight_param[0] = quant::step_init(weight.data(), quant::IntRange::signed_range(bits_w)).s;
      return;
    case WeightQuantizer::post:
    case WeightQuantizer::pot: {
      double m = 0.0;
      for (double v : weight.data()) m = std::max(m, std::abs(v));
      weight_param[0] = m > 0.0 ? m : 1.0;
      return;
    }
  }
}

Tensor QLayer::quantized_weight() const {
  switch (weight_quantizer) {
    case WeightQuantizer::none:
      return weight;
    case WeightQuantizer::uniform:
      return quant::fake_quant_uniform(weight, weight_param, quant::IntRange::signed_range(bits_w), 1, grad_scale);
    case WeightQuantizer::post:
    case WeightQuantizer::pot:
      return quant::fake_quant_levels(weight, weight_param, level_scheme(), bits_w, full_levels, grad_scale);
  }
  return weight;
}

Tensor QLayer::quantize_input(const Tensor& x, bool init_steps) {
  if (act_quantizer == ActQuantizer::none) return x;
  if (!act_step_ready) {
    if (!init_steps) fail(ErrorKind::invalid_argument, "layer '" + name + "': activation step is not initialised");
    act_step[0] = quant::step_init(x.data(), act_range).s;
    act_step_ready = true;
  }
  const auto batch = x.dim(0);
  std::vector<std::int32_t> codes;
  Tensor out;
  std::vector<double> beta_values;
  if (act_quantizer == ActQuantizer::asq) {
    Tensor beta = adapter::adapter_forward(adapter::featurize(x, act_step[0], act_range), *adapter);
    out = quant::fake_quant_asq(x, act_step, beta, act_range, dequant_mode, grad_scale, &codes);
    beta_values.assign(beta.data().begin(), beta.data().end());
    if (grad_enabled()) {
      for (double b : beta_values) beta_sum += b;
      beta_count += batch;
    }
  } else {
    out = quant::fake_quant_uniform(x, act_step, act_range, batch, grad_scale, &codes);
    beta_values.assign(static_cast<std::size_t>(batch), 1.0);
  }
  for (auto c : codes)
    if (!act_range.contains(c))
      fail(ErrorKind::numeric, "layer '" + name + "': activation code " + std::to_string(c) + " outside its range");
  if (trace) {
    trace->input = x.detach();
    trace->dequant = out.detach();
    trace->codes = std::move(codes);
    trace->beta = std::move(beta_values);
    trace->range = act_range;
    trace->step = act_step[0];
  }
  return out;
}

Tensor QLayer::forward(const Tensor& x, bool init_steps) {
  if (int_forward) return int_forward(*this, x);
  const Tensor a = quantize_input(x, init_steps);
  const Tensor w = quantized_weight();
  Tensor y;
  if (kind == LayerKind::conv2d) {
    y = ops::conv2d(a, w, geometry);
    if (bias.defined()) y = ops::add_channel_bias(y, bias);
  } else {
    if (a.rank() != 2) fail(ErrorKind::dimension, "layer '" + name + "' expects [N x F] input, got " + shape_str(a.shape()));
    y = ops::linear(a, w);
    if (bias.defined()) y = ops::add_row_bias(y, bias);
  }
  return y;
}

std::vector<Param> QLayer::parameters() const {
  std::vector<Param> out{{name + ".weight", weight, ParamRole::weight}};
  if (bias.defined()) out.push_back({name + ".bias", bias, ParamRole::bias});
  if (weight_quantizer != WeightQuantizer::none) out.push_back({name + ".weight_param", weight_param, ParamRole::quant_step});
  if (act_quantizer != ActQuantizer::none) out.push_back({name + ".act_step", act_step, ParamRole::quant_step});
  if (adapter)
    for (auto& nt : adapter->named_parameters(name + ".adapter.")) {
      const bool is_bias = nt.name[nt.name.size() - 2] == 'b';  // "...b1", "...b2"
      out.push_back({nt.name, nt.tensor, is_bias ? ParamRole::adapter_bias : ParamRole::adapter_weight});
    }
  return out;
}

std::vector<NamedTensor> QLayer::state() const {
  std::vector<NamedTensor> out;
  for (const auto& p : parameters()) out.push_back({p.name, p.tensor});
  if (act_quantizer != ActQuantizer::none)
    out.push_back({name + ".act_step_ready", Tensor::scalar(act_step_ready ? 1.0 : 0.0)});
  return out;
}

void QLayer::load_state(const std::vector<NamedTensor>& tensors) {
  for (const auto& p : parameters()) {
    const Tensor& src = find_tensor(tensors, p.name);
    if (src.shape() != p.tensor.shape())
      fail(ErrorKind::checkpoint, "tensor '" + p.name + "' has shape " + shape_str(src.shape()) + ", expected " +
                                      shape_str(p.tensor.shape()));
    auto dst = p.tensor;
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
  if (act_quantizer != ActQuantizer::none) act_step_ready = find_tensor(tensors, name + ".act_step_ready")[0] != 0.0;
}

void configure_layer(QLayer& layer, const QuantPolicy& policy, bool first_or_last, bool input_after_relu,
                     std::uint64_t adapter_seed) {
  layer.weight_quantizer = WeightQuantizer::none;
  layer.act_quantizer = ActQuantizer::none;
  layer.adapter.reset();
  layer.bits_w = layer.bits_a = 32;
  layer.act_step_ready = false;
  if (policy.scheme == Scheme::float_model) return;

  const int bits = first_or_last ? policy.first_last_bits : policy.bits;
  validate_bits(bits);
  layer.bits_w = layer.bits_a = bits;
  layer.dequant_mode = policy.dequant_mode;
  layer.full_levels = policy.full_levels;
  layer.grad_scale = policy.grad_scale;

  switch (policy.scheme) {
    case Scheme::scheme2: layer.weight_quantizer = first_or_last ? WeightQuantizer::uniform : WeightQuantizer::post; break;
    case Scheme::pot_weights: layer.weight_quantizer = first_or_last ? WeightQuantizer::uniform : WeightQuantizer::pot; break;
    default: layer.weight_quantizer = WeightQuantizer::uniform; break;
  }
  layer.act_quantizer = policy.scheme == Scheme::lsq_baseline ? ActQuantizer::lsq : ActQuantizer::asq;
  layer.act_range = input_after_relu ? quant::IntRange::unsigned_range(bits) : quant::IntRange::signed_range(bits);

  layer.weight_param = Tensor::scalar(1.0);
  layer.weight_param.set_requires_grad(true);
  layer.init_weight_param();
  layer.act_step = Tensor::scalar(1.0);
  layer.act_step.set_requires_grad(true);
  if (layer.act_quantizer == ActQuantizer::asq)
    layer.adapter = adapter::adapter_init(policy.adapter_depth, policy.adapter_hidden, adapter_seed, policy.output_map);
}

}  // namespace asq::qat
