#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reem/nn/tensor.hpp"

namespace reem::nn {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::int64_t epoch = -1;
  double val_loss = 0.0;
  std::string tag;
  // Free-form numeric side data (e.g. feature standardization statistics).
  std::map<std::string, double> extra;
};

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

/// Little-endian binary container: magic, format version, metadata, named
/// arrays with shapes, 64-bit float payloads, and a trailing content digest.
/// Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedArray>& arrays,
                     const CheckpointMeta& meta);

/// Throws IoError on truncation or digest mismatch and ValidationError on a
/// version the reader does not understand. Never returns a partial load.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot helpers between parameter views and named arrays.
std::vector<NamedArray> snapshot_params(const std::vector<ParamView>& params);
void restore_params(const Checkpoint& checkpoint,
                    const std::vector<ParamView>& params);

}  // namespace reem::nn
