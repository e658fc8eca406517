#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "logonet/data/synthetic.hpp"
#include "logonet/network.hpp"

namespace logonet::fixture {

// A fresh scratch directory per test name, emptied on creation.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "logonet_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline SyntheticConfig small_synthetic(int classes, int train_per_class, int test_per_class) {
  SyntheticConfig c;
  c.num_classes = classes;
  c.train_per_class = train_per_class;
  c.test_per_class = test_per_class;
  c.image_size = 64;
  c.scale_min = 0.4;
  c.scale_max = 0.8;
  return c;
}

// Synthetic data rendered once per (name, config) and reused across tests.
inline const SyntheticDataset& cached_synthetic(const std::string& name,
                                                const SyntheticConfig& config,
                                                uint64_t seed = 1) {
  static std::map<std::string, SyntheticDataset> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    it = cache.emplace(name, generate_synthetic(config, seed, scratch("data_" + name))).first;
  }
  return it->second;
}

inline std::string tensor_hash(const Tensor& t) {
  return to_hex(sha256({reinterpret_cast<const char*>(t.ptr()),
                        static_cast<size_t>(t.size()) * sizeof(double)}));
}

inline std::map<std::string, std::string> parameter_hashes(const Network& net) {
  std::map<std::string, std::string> out;
  for (const Parameter& p : net.parameters()) out[p.name] = tensor_hash(p.value.value());
  return out;
}

}  // namespace logonet::fixture
