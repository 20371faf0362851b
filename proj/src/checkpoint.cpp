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

#include "styleprompt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "styleprompt/errors.hpp"
#include "styleprompt/tensor_io.hpp"

namespace styleprompt {

namespace {
constexpr char kMagic[8] = {'S', 'P', 'C', 'H', 'K', 'P', 'T', '1'};
}

std::uint64_t fnv1a_bytes(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  fail(ErrorKind::kIntegrity, "checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::put(std::string name, Tensor value) {
  for (auto& [n, t] : tensors)
    if (n == name) {
      t = std::move(value);
      return;
    }
  tensors.emplace_back(std::move(name), std::move(value));
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, kCheckpointVersion);
  const std::string header = checkpoint.header.dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_u64(out, checkpoint.tensors.size());
  for (const auto& [name, t] : checkpoint.tensors) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
  std::string bytes = out.str();
  std::ostringstream trailer(std::ios::binary);
  write_u64(trailer, fnv1a_bytes(bytes));
  return bytes + trailer.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  require(bytes.size() >= 24 && std::memcmp(bytes.data(), kMagic, 8) == 0, ErrorKind::kIntegrity,
          origin + ": not a checkpoint (bad magic)");
  std::istringstream in(bytes, std::ios::binary);
  in.seekg(8);
  const auto version = read_u64(in);
  require(version == kCheckpointVersion, ErrorKind::kCompatibility,
          origin + ": checkpoint version " + std::to_string(version) + " unsupported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  std::istringstream tail(bytes.substr(bytes.size() - 8), std::ios::binary);
  require(read_u64(tail) == fnv1a_bytes(body), ErrorKind::kIntegrity, origin + ": checksum mismatch");

  Checkpoint ck;
  try {
    const auto header_len = read_u64(in);
    require(header_len <= body.size(), ErrorKind::kIntegrity, origin + ": header length out of range");
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    ck.header = nlohmann::json::parse(header);
    const auto count = read_u64(in);
    require(count < (1u << 20), ErrorKind::kIntegrity, origin + ": implausible record count");
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto len = read_u64(in);
      require(len < 4096, ErrorKind::kIntegrity, origin + ": implausible record name length");
      std::string name(len, '\0');
      in.read(name.data(), static_cast<std::streamsize>(len));
      ck.tensors.emplace_back(std::move(name), read_tensor(in));
    }
    require(static_cast<std::size_t>(in.tellg()) == body.size(), ErrorKind::kIntegrity,
            origin + ": trailing bytes after records");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIntegrity, origin + ": bad header: " + e.what());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kIntegrity) throw;
    const std::string msg = e.what();
    fail(ErrorKind::kIntegrity, msg.rfind(origin, 0) == 0 ? msg : origin + ": " + msg);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    const std::string bytes = serialize_checkpoint(checkpoint);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path.string());
}

}  // namespace styleprompt
