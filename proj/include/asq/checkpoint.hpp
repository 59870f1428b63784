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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "asq/tensor.hpp"

namespace asq {

/// Checkpoint layout (all integers little-endian):
///
///   "ASQCKPT1"
///   repeated until end of stream:
///     u64 name length, name bytes (UTF-8)
///     u64 rank, rank x u64 extents
///     product(extents) x f64 payload
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr char kCheckpointMagic[9] = "ASQCKPT1";

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Finds a tensor by name; throws a checkpoint error naming it when absent.
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
const Tensor* try_find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

namespace le {
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint64_t get_u64(std::istream& is, const char* what);
double get_f64(std::istream& is, const char* what);
}  // namespace le

}  // namespace asq
