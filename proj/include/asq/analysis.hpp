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

// Model accounting (parameters, operations, storage, QOPS, adapter overhead)
// and activation diagnostics (histograms, code utilisation, block and layer
// quantisation errors). All reports are CSV.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "asq/model.hpp"
#include "json.hpp"

namespace asq::analysis {

enum class LayerType { conv, linear, other };

/// Field names follow the accounting formulas: conv layers use
/// C_in, C_out, K_w, K_h, H_out, W_out; linear layers N_in, N_out.
struct LayerRecord {
  LayerType type = LayerType::other;
  std::string name;
  std::int64_t c_in = 0, c_out = 0, k_w = 0, k_h = 0, h_out = 0, w_out = 0;
  std::int64_t n_in = 0, n_out = 0;
};

struct ArchSpec {
  std::string model;
  std::vector<LayerRecord> layers;
};

ArchSpec arch_from_json(const nlohmann::json& j);
nlohmann::json arch_to_json(const ArchSpec& arch);
ArchSpec load_arch_spec(const std::filesystem::path& path);
/// ImageNet ResNet18 (224x224 input), the model of the overhead table.
ArchSpec resnet18_arch();
/// Conv/linear layers of a model at its configured input size.
ArchSpec arch_from_model(const model::Model& m);

struct Counts {
  std::vector<std::int64_t> per_layer;
  std::int64_t total = 0;
};

/// conv: C_in C_out K_w K_h; linear: N_in N_out + N_out; other: 0.
Counts param_count(const ArchSpec& arch);
/// conv: C_in C_out H_out W_out K_w K_h; linear: N_in N_out; other: 0.
Counts ops_count(const ArchSpec& arch);
/// params * B bits, B in {2, 3, 4, 8, 32}.
std::int64_t quantized_storage(std::int64_t params, int bits);
/// ops * B / 32.
double qops(double ops, int bits);

/// One adapter per conv/linear layer with this many parameters and
/// multiply-accumulates per forward pass.
struct AdapterSizing {
  std::int64_t params_per_layer = 0;
  std::int64_t ops_per_layer = 0;

  /// Sizing of adapter_init(depth, hidden): F*H + H + H + 1 parameters and
  /// F*H + H multiply-accumulates (depth 2), F + 1 and F (depth 1).
  static AdapterSizing from_adapter(int depth, int hidden);
};

struct OverheadRow {
  int bits = 0;
  std::int64_t base_params = 0;
  std::int64_t adapter_params = 0;
  std::int64_t quantized_storage_bits = 0;
  std::int64_t adapter_storage_bits = 0;
  double param_overhead_pct = 0.0;
  std::int64_t base_ops = 0;
  std::int64_t adapter_ops = 0;
  double qops = 0.0;
  double compute_overhead_qops_pct = 0.0;
  double compute_overhead_ops_pct = 0.0;
};

struct OverheadReport {
  std::string model;
  std::vector<OverheadRow> rows;
  void write_csv(std::ostream& os) const;
};

/// Adapter storage is counted at 32 bits per parameter.
OverheadReport overhead_report(const ArchSpec& arch, const AdapterSizing& sizing, const std::vector<int>& bits);

// ---- activation diagnostics -------------------------------------------------

inline constexpr int kHistogramBins = 64;

struct HistogramReport {
  std::string layer;
  int bits = 0;
  double lo = 0.0, hi = 0.0;  // bin range = [min, max] of the float activations
  std::vector<std::int64_t> float_counts;
  std::vector<std::int64_t> quant_counts;
  std::vector<double> beta;
  std::int64_t codes_used = 0;
  double utilization = 0.0;  // codes_used / 2^bits

  /// bin,lo,hi,float_count,quant_count
  void write_csv(std::ostream& os) const;
  /// sample,beta
  void write_beta_csv(std::ostream& os) const;
};

HistogramReport histogram_from_trace(const std::string& layer, int bits, const qat::LayerTrace& trace);
/// Runs the model on `images` and reports the named layer's activation quantiser.
HistogramReport activation_histogram(model::Model& m, const Tensor& images, const std::string& layer);

/// Per block (residual block, or conv stage for tinynet): mean over samples
/// of ||float_out - quant_out||_2.
std::vector<double> block_error_l2(model::Model& float_model, model::Model& quant_model, const Tensor& images);
void write_block_error_csv(std::ostream& os, const std::vector<double>& errors);

struct LayerErrorRow {
  std::string layer;
  std::int64_t batch = 0;
  double l2 = 0.0;
};

/// ||A - A_hat||_2 of each selected layer's activation quantiser, per batch.
std::vector<LayerErrorRow> layer_quant_error(model::Model& m, const Tensor& images, const std::vector<std::string>& layers,
                                             std::int64_t batch_size);
/// layer,batch,l2 rows followed by per-layer mean/variance rows.
void write_layer_error_csv(std::ostream& os, const std::vector<LayerErrorRow>& rows);

/// Constructed distribution-shift case: a 2-bit unsigned quantiser with a
/// fixed step s sees samples drawn from U[0, sigma_i] with sigma_i below
/// s*p/2, so a fixed step never reaches the top code. The adapter alone is
/// then trained (step fixed, adaptive dequantisation, MSE reconstruction).
struct ShiftExperimentConfig {
  int bits = 2;
  double step = 1.0;
  std::int64_t samples = 32;
  std::int64_t elements = 64;
  double sigma_lo = 0.4;
  double sigma_hi = 1.5;
  int steps = 200;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct ShiftExperimentResult {
  std::int64_t lsq_codes_used = 0;
  std::int64_t asq_codes_used = 0;
  std::int64_t code_count = 0;
  double lsq_error_l2 = 0.0;
  double asq_error_l2 = 0.0;
  double mean_beta = 0.0;
  int steps_run = 0;
  HistogramReport lsq_hist, asq_hist;
};

ShiftExperimentResult shift_experiment(const ShiftExperimentConfig& config);

}  // namespace asq::analysis
