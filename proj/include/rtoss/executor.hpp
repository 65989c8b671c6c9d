#pragma once

// Reference forward pass in two interchangeable forms.
//
// conv2d_dense is the oracle: stride 1, zero same-padding for 3x3 (and any
// odd kernel), no padding for 1x1. Accumulation is float32 in a fixed order:
// in-channel outer, kernel row-major inner, in-bounds taps only.
//
// conv2d_pattern_sparse walks only the kept positions of each kernel's
// assigned pattern, sharing one precomputed tap list per pattern id. Skipped
// taps contribute exactly nothing, and the kept taps are visited in the same
// relative order as the dense path, so the two outputs are bit-identical.
// The trace counts the skipped (mask-zeroed) MACs.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtoss/error.hpp"
#include "rtoss/model.hpp"
#include "rtoss/pruning.hpp"

namespace rtoss {

struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values; // (channel, y, x) row-major

  float at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

inline FeatureMap make_feature_map(int channels, int height, int width) {
  if (channels <= 0 || height <= 0 || width <= 0)
    throw Error(ErrorKind::invalid_argument, "feature map dimensions must be positive");
  FeatureMap map{channels, height, width, {}};
  map.values.assign(static_cast<std::size_t>(channels) * height * width, 0.0f);
  return map;
}

struct LayerTrace {
  std::string layer;
  uint64_t macs_performed = 0;
  uint64_t macs_skipped = 0;
};

struct ExecutionTrace {
  uint64_t macs_performed = 0;
  uint64_t macs_skipped = 0;
  std::vector<LayerTrace> per_layer;
};

namespace detail {

inline void check_conv_input(const FeatureMap& input, const WeightTensor& weights) {
  if (input.channels != weights.in_channels)
    throw Error(ErrorKind::shape_mismatch,
                "input has " + std::to_string(input.channels) + " channels, layer '" +
                    weights.layer + "' expects " + std::to_string(weights.in_channels));
  if (weights.kernel_h % 2 == 0 || weights.kernel_w % 2 == 0)
    throw Error(ErrorKind::unsupported,
                "even kernel sizes are outside the executor's scope");
  if (static_cast<std::size_t>(input.channels) * input.height * input.width !=
      input.values.size())
    throw Error(ErrorKind::shape_mismatch, "feature map value count does not match its shape");
}

} // namespace detail

inline FeatureMap conv2d_dense(const FeatureMap& input, const WeightTensor& weights) {
  detail::check_conv_input(input, weights);
  const int pad_y = weights.kernel_h / 2;
  const int pad_x = weights.kernel_w / 2;
  FeatureMap output = make_feature_map(weights.out_channels, input.height, input.width);
  for (int oc = 0; oc < weights.out_channels; ++oc)
    for (int oy = 0; oy < input.height; ++oy)
      for (int ox = 0; ox < input.width; ++ox) {
        float acc = 0.0f;
        for (int ic = 0; ic < weights.in_channels; ++ic) {
          std::span<const float> kernel = weights.kernel(oc, ic);
          for (int kr = 0; kr < weights.kernel_h; ++kr) {
            int iy = oy + kr - pad_y;
            if (iy < 0 || iy >= input.height) continue;
            for (int kc = 0; kc < weights.kernel_w; ++kc) {
              int ix = ox + kc - pad_x;
              if (ix < 0 || ix >= input.width) continue;
              acc += kernel[static_cast<std::size_t>(kr) * weights.kernel_w + kc] *
                     input.at(ic, iy, ix);
            }
          }
        }
        output.at(oc, oy, ox) = acc;
      }
  return output;
}

inline std::pair<FeatureMap, ExecutionTrace> conv2d_pattern_sparse(
    const FeatureMap& input, const WeightTensor& weights,
    const LayerAssignments& assignments, const PatternDictionary& dictionary) {
  detail::check_conv_input(input, weights);
  const bool is_3x3 = weights.kernel_h == 3 && weights.kernel_w == 3;
  const bool is_1x1 = weights.kernel_h == 1 && weights.kernel_w == 1;
  if (!is_3x3 && !is_1x1)
    throw Error(ErrorKind::wrong_kernel_shape,
                "pattern-sparse execution covers 1x1 and 3x3 kernels only");
  if (assignments.kernels.size() != weights.kernel_count())
    throw Error(ErrorKind::missing_assignment,
                "layer '" + weights.layer + "' needs " +
                    std::to_string(weights.kernel_count()) + " assignments, got " +
                    std::to_string(assignments.kernels.size()));
  for (std::size_t flat = 0; flat < assignments.kernels.size(); ++flat) {
    const auto& a = assignments.kernels[flat];
    if (static_cast<std::size_t>(a.out_index) * weights.in_channels + a.in_index != flat)
      throw Error(ErrorKind::missing_assignment,
                  "assignments for '" + weights.layer + "' are not in flat kernel order");
  }

  // One kept-cell tap list per pattern id; kernels sharing a pattern share it.
  std::map<int, std::vector<int>> taps_by_pattern;
  for (const auto& mask : dictionary.masks) {
    auto& taps = taps_by_pattern[mask.id];
    for (int cell = 0; cell < 9; ++cell)
      if (mask.keeps_cell(cell)) taps.push_back(cell);
  }
  static const std::vector<int> no_taps;

  // Kept-tap list per kernel. For 1x1 kernels the mask cell is the kernel's
  // position inside its pooling chunk, so the single tap is kept or dropped.
  std::vector<const std::vector<int>*> kernel_taps(weights.kernel_count());
  static const std::vector<int> single_tap{0};
  for (std::size_t flat = 0; flat < assignments.kernels.size(); ++flat) {
    const auto& a = assignments.kernels[flat];
    if (a.origin == MaskOrigin::leftover_zeroed) {
      kernel_taps[flat] = &no_taps;
      continue;
    }
    auto it = taps_by_pattern.find(a.pattern_id);
    if (it == taps_by_pattern.end())
      throw Error(ErrorKind::missing_assignment,
                  "pattern id " + std::to_string(a.pattern_id) +
                      " is not in the supplied dictionary");
    if (is_3x3) {
      kernel_taps[flat] = &it->second;
    } else {
      const PatternMask& mask = *dictionary.find(a.pattern_id);
      kernel_taps[flat] = mask.keeps_cell(static_cast<int>(flat % 9)) ? &single_tap : &no_taps;
    }
  }

  const int pad = is_3x3 ? 1 : 0;
  FeatureMap output = make_feature_map(weights.out_channels, input.height, input.width);
  ExecutionTrace trace;
  const uint64_t spatial = static_cast<uint64_t>(input.height) * input.width;
  const uint64_t cells = weights.kernel_size();

  for (int oc = 0; oc < weights.out_channels; ++oc)
    for (int oy = 0; oy < input.height; ++oy)
      for (int ox = 0; ox < input.width; ++ox) {
        float acc = 0.0f;
        for (int ic = 0; ic < weights.in_channels; ++ic) {
          std::size_t flat = static_cast<std::size_t>(oc) * weights.in_channels + ic;
          std::span<const float> kernel = weights.kernel(oc, ic);
          for (int cell : *kernel_taps[flat]) {
            int iy = oy + cell / 3 - pad;
            int ix = ox + cell % 3 - pad;
            if (iy < 0 || iy >= input.height || ix < 0 || ix >= input.width) continue;
            acc += kernel[cell] * input.at(ic, iy, ix);
          }
        }
        output.at(oc, oy, ox) = acc;
      }

  for (std::size_t flat = 0; flat < kernel_taps.size(); ++flat) {
    uint64_t kept = kernel_taps[flat]->size();
    trace.macs_performed += kept * spatial;
    trace.macs_skipped += (cells - kept) * spatial;
  }
  trace.per_layer.push_back({weights.layer, trace.macs_performed, trace.macs_skipped});
  return {std::move(output), std::move(trace)};
}

struct LayerVerdict {
  std::string layer;
  bool sparse_path_exercised = false;
  bool executors_bit_equal = true;
  double max_abs_diff_executors = 0.0;
  bool mask_subset_ok = true;
  double deviation_vs_original = 0.0; // informational
};

struct VerifyReport {
  bool executors_equal = true;
  bool masks_ok = true;
  double max_deviation_vs_original = 0.0;
  std::vector<LayerVerdict> layers;
  ExecutionTrace trace;
};

// Nonzero positions of every assigned kernel must lie inside its pattern.
inline bool check_mask_subset(const WeightTensor& pruned, const LayerAssignments& assignments,
                              const PatternDictionary& dictionary) {
  for (const auto& a : assignments.kernels) {
    std::span<const float> kernel = pruned.kernel(a.out_index, a.in_index);
    if (a.origin == MaskOrigin::leftover_zeroed) {
      for (float v : kernel)
        if (v != 0.0f) return false;
      continue;
    }
    const PatternMask* mask = dictionary.find(a.pattern_id);
    if (!mask) return false;
    if (pruned.kernel_size() == 9) {
      for (int cell = 0; cell < 9; ++cell)
        if (kernel[cell] != 0.0f && !mask->keeps_cell(cell)) return false;
    } else {
      std::size_t flat =
          static_cast<std::size_t>(a.out_index) * pruned.in_channels + a.in_index;
      if (kernel[0] != 0.0f && !mask->keeps_cell(static_cast<int>(flat % 9))) return false;
    }
  }
  return true;
}

namespace detail {

inline bool bit_equal(const FeatureMap& a, const FeatureMap& b) {
  return a.channels == b.channels && a.height == b.height && a.width == b.width &&
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

inline double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
  return worst;
}

// The executor verifies single layers and linear chains; anything else is out
// of its scope.
inline void check_linear_chain(const ModelBundle& bundle) {
  for (std::size_t i = 1; i < bundle.layers.size(); ++i) {
    const auto& layer = bundle.layers[i];
    if (layer.parents.size() != 1 || layer.parents[0] != bundle.layers[i - 1].name ||
        layer.in_channels != bundle.layers[i - 1].out_channels)
      throw Error(ErrorKind::unsupported,
                  "verification requires a single layer or a linear chain");
  }
  if (!bundle.layers.empty() && !bundle.layers[0].parents.empty())
    throw Error(ErrorKind::unsupported, "the first chain layer must have no parent");
}

} // namespace detail

// Runs dense and pattern-sparse executors layer by layer over the pruned
// weights, asserting bit-equality (or closeness under a relaxed tolerance),
// and reports the informational deviation against the original model.
inline VerifyReport verify_equivalence(const ModelBundle& original, const PruneResult& pruned,
                                       const FeatureMap& input, double tolerance = 0.0) {
  if (original.layers.size() != pruned.bundle.layers.size())
    throw Error(ErrorKind::inconsistent_inputs,
                "original and pruned bundles have different layer counts");
  for (std::size_t i = 0; i < original.layers.size(); ++i)
    if (original.layers[i].name != pruned.bundle.layers[i].name)
      throw Error(ErrorKind::inconsistent_inputs,
                  "original and pruned bundles disagree at layer " + std::to_string(i));
  detail::check_linear_chain(original);

  VerifyReport report;
  FeatureMap original_map = input;
  FeatureMap pruned_map = input;
  for (std::size_t i = 0; i < original.layers.size(); ++i) {
    const auto& name = original.layers[i].name;
    LayerVerdict verdict;
    verdict.layer = name;

    FeatureMap dense_out = conv2d_dense(pruned_map, pruned.bundle.weights[i]);
    if (const LayerAssignments* assignments = pruned.find_assignments(name)) {
      auto [sparse_out, trace] = conv2d_pattern_sparse(pruned_map, pruned.bundle.weights[i],
                                                       *assignments, pruned.dictionary);
      verdict.sparse_path_exercised = true;
      verdict.executors_bit_equal = detail::bit_equal(dense_out, sparse_out);
      verdict.max_abs_diff_executors = detail::max_abs_diff(dense_out, sparse_out);
      verdict.mask_subset_ok =
          check_mask_subset(pruned.bundle.weights[i], *assignments, pruned.dictionary);
      report.trace.macs_performed += trace.macs_performed;
      report.trace.macs_skipped += trace.macs_skipped;
      report.trace.per_layer.push_back(trace.per_layer.front());
    }
    bool layer_ok = tolerance == 0.0 ? verdict.executors_bit_equal
                                     : verdict.max_abs_diff_executors <= tolerance;
    report.executors_equal = report.executors_equal && layer_ok;
    report.masks_ok = report.masks_ok && verdict.mask_subset_ok;

    FeatureMap original_out = conv2d_dense(original_map, original.weights[i]);
    verdict.deviation_vs_original = detail::max_abs_diff(original_out, dense_out);
    report.max_deviation_vs_original =
        std::max(report.max_deviation_vs_original, verdict.deviation_vs_original);

    report.layers.push_back(std::move(verdict));
    original_map = std::move(original_out);
    pruned_map = std::move(dense_out);
  }
  return report;
}

// Feature map file: three uint32 little-endian dims (channels, height,
// width) followed by the values as little-endian float32.
inline void save_feature_map(const FeatureMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot open '" + path.string() + "' for writing");
  auto write_u32 = [&](uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 4);
  };
  write_u32(static_cast<uint32_t>(map.channels));
  write_u32(static_cast<uint32_t>(map.height));
  write_u32(static_cast<uint32_t>(map.width));
  for (float f : map.values) write_u32(std::bit_cast<uint32_t>(f));
  if (!out) throw Error(ErrorKind::io_error, "write to '" + path.string() + "' failed");
}

inline FeatureMap load_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (blob.size() < 12)
    throw Error(ErrorKind::shape_mismatch, "feature map file is too short");
  auto read_u32 = [&](std::size_t offset) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(blob[offset + i]) << (8 * i);
    return v;
  };
  uint32_t channels = read_u32(0), height = read_u32(4), width = read_u32(8);
  uint64_t count = static_cast<uint64_t>(channels) * height * width;
  if (channels == 0 || height == 0 || width == 0 || blob.size() != 12 + count * 4)
    throw Error(ErrorKind::shape_mismatch, "feature map byte count does not match its header");
  FeatureMap map{static_cast<int>(channels), static_cast<int>(height),
                 static_cast<int>(width), {}};
  map.values.resize(count);
  for (uint64_t i = 0; i < count; ++i)
    map.values[i] = std::bit_cast<float>(read_u32(12 + i * 4));
  return map;
}

} // namespace rtoss
