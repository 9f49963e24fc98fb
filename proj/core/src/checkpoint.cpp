#include "pagedep/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pagedep {

namespace {

constexpr char kMagic[8] = {'P', 'D', 'E', 'P', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& metadata,
                     const std::vector<std::pair<std::string, ad::TensorPtr>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u64(out, metadata.size());
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  write_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(tensor->shape.size()));
    for (int d : tensor->shape) write_u32(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(tensor->value.data()),
              static_cast<std::streamsize>(tensor->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write to '" + path.string() + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("'" + path.string() + "' is not a pagedep checkpoint");
  uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint ckpt;
  uint64_t meta_len = read_u64(in);
  ckpt.metadata.resize(meta_len);
  in.read(ckpt.metadata.data(), static_cast<std::streamsize>(meta_len));
  uint32_t n_entries = read_u32(in);
  for (uint32_t i = 0; i < n_entries; ++i) {
    CheckpointEntry entry;
    uint32_t name_len = read_u32(in);
    entry.name.resize(name_len);
    in.read(entry.name.data(), static_cast<std::streamsize>(name_len));
    uint32_t rank = read_u32(in);
    size_t count = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      int dim = static_cast<int>(read_u32(in));
      entry.shape.push_back(dim);
      count *= static_cast<size_t>(dim);
    }
    entry.values.resize(count);
    in.read(reinterpret_cast<char*>(entry.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint '" + path.string() + "'");
    ckpt.entries.push_back(std::move(entry));
  }
  return ckpt;
}

}  // namespace pagedep
