#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cgt/grad/tensor.hpp"

namespace cgt::train {

/// Self-describing container: a string metadata header plus named tensors
/// (name, shape, raw little-endian 64-bit floats). Entries are stored sorted
/// by key, so serialize -> deserialize -> serialize is byte-identical.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::map<std::string, std::string> meta;
  std::map<std::string, grad::Tensor> tensors;

  std::vector<char> to_bytes() const;
  static Checkpoint from_bytes(const std::vector<char>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const std::string& require_meta(const std::string& key) const;
  const grad::Tensor& require_tensor(const std::string& name) const;
};

}  // namespace cgt::train
