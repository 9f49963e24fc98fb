#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pagedep/tensor.hpp"

namespace pagedep {

/// Versioned binary checkpoint: a metadata string (JSON in practice) followed
/// by named tensors with raw 64-bit values. Round-trips are bit-exact.
struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

struct LoadedCheckpoint {
  std::string metadata;
  std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& metadata,
                     const std::vector<std::pair<std::string, ad::TensorPtr>>& entries);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pagedep
