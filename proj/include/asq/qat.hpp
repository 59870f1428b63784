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

// Quantised convolution and linear layers. Each layer owns its float weights,
// a weight quantiser (uniform step or POST/POT clip threshold), an activation
// quantiser (LSQ or ASQ with its adapter) and the bit-widths chosen by the
// policy.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asq/adapter.hpp"
#include "asq/checkpoint.hpp"
#include "asq/ops.hpp"
#include "asq/quantizers.hpp"
#include "asq/tensor.hpp"

namespace asq::qat {

enum class LayerKind { conv2d, linear };
enum class WeightQuantizer { none, uniform, post, pot };
enum class ActQuantizer { none, lsq, asq };

/// float: no quantisation (used to train the float checkpoint).
/// scheme1: ASQ activations, uniform weights.
/// scheme2: ASQ activations, POST weights.
/// lsq-baseline: LSQ activations, uniform weights.
/// pot-weights: ASQ activations, POT weights.
enum class Scheme { float_model, scheme1, scheme2, lsq_baseline, pot_weights };

std::string_view scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);
std::string_view dequant_mode_name(quant::DequantMode mode);
quant::DequantMode parse_dequant_mode(std::string_view name);

struct QuantPolicy {
  Scheme scheme = Scheme::scheme2;
  int bits = 4;
  int first_last_bits = 8;
  quant::DequantMode dequant_mode = quant::DequantMode::base;
  /// Keep all 2^b + 1 nominal levels instead of the b-bit code book.
  bool full_levels = false;
  bool grad_scale = true;
  int adapter_depth = 2;
  int adapter_hidden = 16;
  adapter::OutputMap output_map = adapter::OutputMap::exp;
};

/// Rejects bit-widths outside {2, 3, 4, 8}.
void validate_bits(int bits);

/// What one forward pass saw at a layer's activation quantiser.
struct LayerTrace {
  Tensor input;
  Tensor dequant;
  std::vector<std::int32_t> codes;
  std::vector<double> beta;  // one per sample; all 1 for LSQ
  quant::IntRange range;
  double step = 0.0;
};

enum class ParamRole { weight, bias, norm, quant_step, adapter_weight, adapter_bias };

struct Param {
  std::string name;
  Tensor tensor;
  ParamRole role;
};

class QLayer {
 public:
  std::string name;
  LayerKind kind = LayerKind::conv2d;
  ops::Conv2dGeometry geometry;
  Tensor weight;  // [Cout x Cin x K x K] or [Out x In]
  Tensor bias;    // optional, [Cout]

  WeightQuantizer weight_quantizer = WeightQuantizer::none;
  int bits_w = 32;
  Tensor weight_param;  // step s (uniform) or clip alpha (POST/POT); scalar

  ActQuantizer act_quantizer = ActQuantizer::none;
  int bits_a = 32;
  quant::IntRange act_range;
  Tensor act_step;  // scalar
  bool act_step_ready = false;
  std::optional<adapter::AdapterParams> adapter;

  quant::DequantMode dequant_mode = quant::DequantMode::base;
  bool full_levels = false;
  bool grad_scale = true;

  /// When set, forward() fills it with the activation quantiser's view.
  LayerTrace* trace = nullptr;
  /// Replaces the simulated forward (installed by the integer path).
  std::function<Tensor(const QLayer&, const Tensor&)> int_forward;

  /// Running sum of per-sample beta over training forwards since the last reset.
  double beta_sum = 0.0;
  std::int64_t beta_count = 0;

  /// Fake-quantises the input, the weights, and applies the layer.
  /// Uninitialised activation steps are set from x when `init_steps` is true
  /// and are an error otherwise.
  Tensor forward(const Tensor& x, bool init_steps);

  /// Returns the input after the activation quantiser (x itself when none).
  Tensor quantize_input(const Tensor& x, bool init_steps);
  Tensor quantized_weight() const;

  /// s = step_init(W) for uniform weights, alpha = max|W| for POST/POT.
  void init_weight_param();

  quant::LevelScheme level_scheme() const;
  bool quantized() const { return weight_quantizer != WeightQuantizer::none || act_quantizer != ActQuantizer::none; }

  std::vector<Param> parameters() const;
  /// Everything needed to restore the layer, including step-readiness flags.
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);
};

/// Applies the per-layer effect of a scheme; first/last layers get
/// first_last_bits and uniform weights.
void configure_layer(QLayer& layer, const QuantPolicy& policy, bool first_or_last, bool input_after_relu,
                     std::uint64_t adapter_seed);

}  // namespace asq::qat
