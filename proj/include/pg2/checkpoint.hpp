#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pg2/adam.hpp"
#include "pg2/config.hpp"

namespace pg2 {

/// On-disk unit of a training run.
///
/// Layout (little-endian):
///   "PG2CKPT\0" | u32 version | u64 training_hash | u64 model_hash | i64 iteration
///   | str kind | str config_json | u64 n | n x tensor | u64 fnv1a64(all preceding bytes)
/// with str = u64 length + bytes and
/// tensor = str name | u8 dtype | u32 ndim | ndim x i64 | u64 nbytes | raw bytes.
/// Tensors are stored contiguous and round-trip bit-exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;  // stage1 | stage2 | one-stage
  json config;
  std::uint64_t training_hash = 0;
  std::uint64_t model_hash = 0;
  std::int64_t iteration = 0;
  TensorMap tensors;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pg2
