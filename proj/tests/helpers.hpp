#pragma once

// Shared builders for the test suites: synthetic bundles, deterministic
// random weights (never exactly zero, so density assumptions hold), and a
// scratch directory that cleans up after itself.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rtoss/rtoss.hpp"

namespace rtoss::testing {

class TempDir {
public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    path_ = base / ("rtoss-test-" + std::to_string(rd()) + "-" + std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path file(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

// Uniform in [0.25, 1.5] with random sign: dense by construction.
inline float nonzero_weight(std::mt19937& rng) {
  double u = rng() * (1.0 / 4294967296.0);
  float magnitude = static_cast<float>(0.25 + 1.25 * u);
  return (rng() & 1) ? magnitude : -magnitude;
}

inline float signed_unit(std::mt19937& rng) {
  return static_cast<float>(rng() * (2.0 / 4294967296.0) - 1.0);
}

struct LayerSpec {
  std::string name;
  int out_channels = 1;
  int in_channels = 1;
  int kernel_h = 3;
  int kernel_w = 3;
  std::vector<std::string> parents;
};

inline ModelBundle make_bundle(const std::vector<LayerSpec>& specs, uint32_t seed = 7) {
  std::mt19937 rng(seed);
  ModelBundle bundle;
  for (const auto& spec : specs) {
    LayerDescriptor layer;
    layer.name = spec.name;
    layer.out_channels = spec.out_channels;
    layer.in_channels = spec.in_channels;
    layer.kernel_h = spec.kernel_h;
    layer.kernel_w = spec.kernel_w;
    layer.parents = spec.parents;

    WeightTensor tensor;
    tensor.layer = spec.name;
    tensor.out_channels = spec.out_channels;
    tensor.in_channels = spec.in_channels;
    tensor.kernel_h = spec.kernel_h;
    tensor.kernel_w = spec.kernel_w;
    tensor.values.resize(tensor.element_count());
    for (auto& v : tensor.values) v = nonzero_weight(rng);

    bundle.layers.push_back(std::move(layer));
    bundle.weights.push_back(std::move(tensor));
  }
  return bundle;
}

// Dictionary holding every filtered candidate of the variant (uncalibrated).
inline PatternDictionary full_dictionary(
    Variant variant, AdjacencyMode mode = AdjacencyMode::connected_component) {
  PatternDictionary dict;
  dict.variant = variant;
  dict.masks = filter_adjacent(generate_candidates(entry_count(variant)), mode);
  dict.calibration.adjacency = mode;
  dict.calibration.degenerate = true;
  dict.calibration.wins.assign(dict.masks.size(), 0);
  return dict;
}

inline FeatureMap random_feature_map(int channels, int height, int width, std::mt19937& rng) {
  FeatureMap map = make_feature_map(channels, height, width);
  for (auto& v : map.values) v = signed_unit(rng);
  return map;
}

} // namespace rtoss::testing
