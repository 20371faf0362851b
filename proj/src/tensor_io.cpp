// Copyright 2026 The StylePrompt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "styleprompt/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "styleprompt/errors.hpp"

namespace styleprompt {

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  require(in.gcount() == 8, ErrorKind::kIntegrity, "unexpected end of data");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic, sizeof(kTensorMagic));
  write_u64(out, t.rank());
  for (auto d : t.shape()) write_u64(out, d);
  for (double v : t.data()) write_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  require(in.gcount() == 8 && std::memcmp(magic, kTensorMagic, 8) == 0, ErrorKind::kIntegrity,
          "bad tensor magic");
  const std::uint64_t rank = read_u64(in);
  require(rank >= 1 && rank <= 8, ErrorKind::kIntegrity, "implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& d : shape) {
    d = read_u64(in);
    require(d > 0 && d < (1ULL << 32), ErrorKind::kIntegrity, "implausible tensor dimension");
    numel *= d;
    require(numel < (1ULL << 32), ErrorKind::kIntegrity, "implausible tensor size");
  }
  std::vector<double> data(numel);
  for (auto& v : data) v = read_f64(in);
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_tensor(out, t);
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  try {
    Tensor t = read_tensor(in);
    require(in.peek() == std::char_traits<char>::eof(), ErrorKind::kIntegrity, "trailing bytes");
    return t;
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace styleprompt
