#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "logonet/network.hpp"

namespace logonet {

inline constexpr uint32_t kCheckpointVersion = 1;

// On-disk layout (little-endian):
//   "DLCK" | u32 version | 32-byte spec fingerprint | u64 iteration |
//   u32 spec-json length | spec json | u32 record count |
//   records: u32 name length | name | u32 rank (4) | 4 x u64 dims |
//            u64 value count | values as f64
// Buffers are stored as records whose names start with "buffer:".
void save_checkpoint(const Network& net, const std::filesystem::path& path);

// The raw file contents, for models that are not a single Network.
struct CheckpointFile {
  Fingerprint fingerprint{};
  uint64_t iteration = 0;
  std::string spec_json;
  std::vector<std::pair<std::string, Tensor>> records;
};
void write_checkpoint_file(const CheckpointFile& file, const std::filesystem::path& path);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

struct LoadOptions {
  // Parameter names, layer names or head names whose parameters may differ
  // from the file. Their values are taken from a fresh build with `seed`.
  std::vector<std::string> allowlist;
  uint64_t seed = 0;
  InitOptions init;
};

// Loads parameters into a network built from `expected`. The stored
// fingerprint must equal fingerprint(expected) unless an allowlist is given;
// with an allowlist, every stored parameter that is not allowlisted must
// exist in `expected` with the same shape.
Network load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected,
                        const LoadOptions& options = {});

// Loads a checkpoint with the spec stored inside it.
Network load_checkpoint(const std::filesystem::path& path);

// The spec recorded in a checkpoint file.
NetworkSpec read_checkpoint_spec(const std::filesystem::path& path);

}  // namespace logonet
