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

#include "cli_config.hpp"

#include <fstream>

namespace asq::cli {

json default_config() {
  return json::parse(R"({
  "seed": 0,
  "model": {"arch": "tinynet", "width": 16},
  "quant": {
    "scheme": "scheme2",
    "bits": 4,
    "first_last_bits": 8,
    "dequant_mode": "base",
    "full_levels": false,
    "grad_scale": true,
    "adapter_depth": 2,
    "adapter_hidden": 16,
    "output_map": "exp"
  },
  "data": {
    "kind": "synthetic",
    "dir": "",
    "train_files": [],
    "test_files": [],
    "train_images": "",
    "train_labels": "",
    "test_images": "",
    "test_labels": "",
    "train_limit": -1,
    "test_limit": -1,
    "synthetic": {"train_samples": 256, "test_samples": 128, "classes": 4, "channels": 3, "size": 16, "noise": 0.5, "seed": 0}
  },
  "train": {
    "epochs": 1,
    "batch_size": 32,
    "lr0": 0.01,
    "momentum": 0.9,
    "weight_decay": 0.0001,
    "augment_crop": false,
    "augment_flip": false,
    "freeze_adapter": false,
    "eval_batch_size": 256,
    "init_checkpoint": ""
  },
  "checkpoint": "",
  "int_model": "",
  "export": {"literal_floor": false},
  "bench": {"sizes": [64, 128, 256], "repeats": 5},
  "analyze": {
    "reports": ["overhead"],
    "arch_spec": "resnet18",
    "bits": [8, 4, 3, 2],
    "layer": "",
    "layers": [],
    "float_checkpoint": "",
    "samples": 256,
    "batch_size": 64,
    "shift": {"steps": 200, "lr": 0.05, "samples": 32, "elements": 64, "sigma_lo": 0.4, "sigma_hi": 1.5}
  }
})");
}

namespace {

std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && !b.is_number_integer());
  return a.type() == b.type();
}

const char* kind_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

}  // namespace

void merge_checked(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) fail(ErrorKind::config_schema, (where.empty() ? "config" : where) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const auto path = join(where, key);
    if (!base.contains(key)) fail(ErrorKind::config_schema, "unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
      continue;
    }
    if (!same_kind(slot, value))
      fail(ErrorKind::config_schema, "config key '" + path + "' expects " + kind_name(slot) + ", got " + kind_name(value));
    if (slot.is_number_float()) slot = value.get<double>();
    else slot = value;
  }
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config_path, "cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config_schema, path.string() + ": " + e.what());
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::config_schema, "override '" + assignment + "' is not key.path=value");
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const auto start = dot == std::string::npos ? 0 : dot + 1;
    patch = json{{path.substr(start, end - start), patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_checked(config, patch);
}

const json& at_path(const json& config, const std::string& path) {
  const json* cur = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) fail(ErrorKind::config_schema, "missing config key '" + path + "'");
    cur = &(*cur)[key];
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config_path: return 3;
    case ErrorKind::config_schema: return 4;
    case ErrorKind::dataset_missing: return 5;
    case ErrorKind::unsupported_scheme: return 6;
    case ErrorKind::format: return 7;
    case ErrorKind::checkpoint: return 8;
    case ErrorKind::io: return 9;
    case ErrorKind::numeric: return 10;
    case ErrorKind::overflow: return 11;
    case ErrorKind::dimension: return 12;
    case ErrorKind::invalid_argument: return 13;
  }
  return 1;
}

}  // namespace asq::cli
