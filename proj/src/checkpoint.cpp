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

#include "asq/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace asq {

namespace le {

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b.data(), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& is, const char* what) {
  std::array<unsigned char, 8> b{};
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(b.data()), 8))
    fail(ErrorKind::format, std::string("truncated stream reading ") + what + " at byte offset " +
                                std::to_string(offset));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const char* what) { return std::bit_cast<double>(get_u64(is, what)); }

}  // namespace le

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kCheckpointMagic, 8);
  for (const auto& [name, t] : tensors) {
    le::put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    le::put_u64(os, t.rank());
    for (auto e : t.shape()) le::put_u64(os, static_cast<std::uint64_t>(e));
    for (double v : t.data()) le::put_f64(os, v);
  }
  if (!os) fail(ErrorKind::io, "failed writing checkpoint stream");
}

std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    fail(ErrorKind::format, "bad checkpoint magic at byte offset 0 (expected ASQCKPT1)");
  std::vector<NamedTensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto name_len = le::get_u64(is, "tensor name length");
    if (name_len > (1u << 20)) fail(ErrorKind::format, "implausible tensor name length in checkpoint");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      fail(ErrorKind::format, "truncated tensor name in checkpoint");
    const auto rank = le::get_u64(is, "tensor rank");
    if (rank > 8) fail(ErrorKind::format, "tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(le::get_u64(is, "extent")));
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = le::get_f64(is, "tensor payload");
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  write_checkpoint(os, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::checkpoint, "cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

const Tensor* try_find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return &nt.tensor;
  return nullptr;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  if (const auto* t = try_find_tensor(tensors, name)) return *t;
  fail(ErrorKind::checkpoint, "checkpoint has no tensor named '" + name + "'");
}

}  // namespace asq
