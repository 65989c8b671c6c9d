#pragma once

// Pattern pruning passes.
//
// 3x3 layers: every kernel is masked with its best-fit dictionary pattern
// (the one retaining the most L2 energy; ties break toward the lowest mask
// id). Kept positions carry the original weight bits; everything else
// becomes exactly +0.0f.
//
// 1x1 layers: the layer's weights are flattened row-major over (out, in),
// regrouped into consecutive chunks of 9, and each full chunk is pruned as a
// temporary 3x3 matrix. A trailing chunk of fewer than 9 weights is zeroed
// outright; layers with fewer than 9 weights in total would be erased by that
// rule, so by default they are exempted and left dense (with a warning).
//
// Groups share patterns: a 3x3 child kernel at flat index t inherits the
// parent pattern at t mod P (P = parent kernel count); a 1x1 child whose full
// chunk count equals the parent's pattern count inherits positionally,
// otherwise it falls back to its own best fit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtoss/dictionary.hpp"
#include "rtoss/error.hpp"
#include "rtoss/layer_graph.hpp"
#include "rtoss/model.hpp"
#include "rtoss/pattern.hpp"

namespace rtoss {

enum class MaskOrigin { best_fit, inherited, leftover_zeroed };

inline std::string_view to_string(MaskOrigin origin) {
  switch (origin) {
  case MaskOrigin::best_fit: return "best_fit";
  case MaskOrigin::inherited: return "inherited";
  case MaskOrigin::leftover_zeroed: return "leftover_zeroed";
  }
  return "?";
}

// Pattern id used for leftover-zeroed kernels, which have no dictionary mask.
constexpr int kNoPattern = -1;

struct KernelMaskAssignment {
  int out_index = 0;
  int in_index = 0;
  int pattern_id = kNoPattern;
  MaskOrigin origin = MaskOrigin::best_fit;
};

// Assignments for one layer, ordered by flat kernel index (out * in_ch + in).
struct LayerAssignments {
  std::string layer;
  std::vector<KernelMaskAssignment> kernels;
};

enum class MaskSharingMode {
  per_kernel,   // each parent kernel keeps its own best fit (default)
  layer_shared, // one mask per layer: the majority best fit of its kernels
};

inline std::string_view to_string(MaskSharingMode mode) {
  return mode == MaskSharingMode::per_kernel ? "per_kernel" : "layer_shared";
}

struct PruneOptions {
  MaskSharingMode sharing = MaskSharingMode::per_kernel;
  // Skip 1x1 layers whose total weight count is below one chunk; pruning them
  // would zero the whole layer.
  bool exempt_small_1x1 = true;
};

struct PruneResult {
  ModelBundle bundle;
  std::vector<LayerAssignments> assignments; // bundle layer order, pruned layers only
  PatternDictionary dictionary;
  LayerGroupSet groups;
  std::vector<std::string> warnings;

  const LayerAssignments* find_assignments(std::string_view layer) const {
    for (const auto& a : assignments)
      if (a.layer == layer) return &a;
    return nullptr;
  }
};

struct BestFit {
  int pattern_id = kNoPattern;
  double retained_l2 = 0.0;
};

// Dictionary mask maximizing the masked kernel's L2 norm. The energy sum is
// accumulated in cell order, in double, so ties are exact and reproducible.
inline BestFit best_fit(std::span<const float> kernel, const PatternDictionary& dictionary) {
  if (dictionary.masks.empty())
    throw Error(ErrorKind::empty_dictionary, "best_fit needs at least one mask");
  if (kernel.size() != 9)
    throw Error(ErrorKind::wrong_kernel_shape, "best_fit expects a 3x3 kernel");
  int best_id = kNoPattern;
  double best_energy = -1.0;
  for (const auto& mask : dictionary.masks) {
    double energy = 0.0;
    for (int cell = 0; cell < 9; ++cell)
      if (mask.keeps_cell(cell))
        energy += static_cast<double>(kernel[cell]) * kernel[cell];
    if (energy > best_energy || (energy == best_energy && mask.id < best_id)) {
      best_energy = energy;
      best_id = mask.id;
    }
  }
  return {best_id, std::sqrt(best_energy)};
}

inline void apply_mask_inplace(std::span<float> kernel, const PatternMask& mask) {
  for (int cell = 0; cell < 9; ++cell)
    if (!mask.keeps_cell(cell)) kernel[cell] = 0.0f;
}

inline std::array<float, 9> apply_mask(std::span<const float> kernel, const PatternMask& mask) {
  std::array<float, 9> out{};
  for (int cell = 0; cell < 9; ++cell)
    out[cell] = mask.keeps_cell(cell) ? kernel[cell] : 0.0f;
  return out;
}

struct PrunedLayer {
  WeightTensor tensor;
  std::vector<KernelMaskAssignment> kernels;
};

namespace detail {

inline const PatternMask& mask_by_id(const PatternDictionary& dictionary, int id) {
  const PatternMask* mask = dictionary.find(id);
  if (!mask)
    throw Error(ErrorKind::inconsistent_inputs,
                "pattern id " + std::to_string(id) + " is not in the dictionary");
  return *mask;
}

// Majority pattern id among per-kernel best fits; ties toward the lowest id.
inline int majority_pattern(const std::vector<int>& pattern_ids) {
  std::map<int, std::size_t> counts;
  for (int id : pattern_ids) counts[id]++;
  int winner = pattern_ids.front();
  std::size_t best = 0;
  for (const auto& [id, count] : counts)
    if (count > best) { best = count; winner = id; } // map is id-ascending
  return winner;
}

} // namespace detail

inline PrunedLayer prune_3x3_layer(const WeightTensor& weights,
                                   const PatternDictionary& dictionary,
                                   MaskSharingMode sharing = MaskSharingMode::per_kernel) {
  if (weights.kernel_h != 3 || weights.kernel_w != 3)
    throw Error(ErrorKind::wrong_kernel_shape,
                "layer '" + weights.layer + "' does not have 3x3 kernels");
  PrunedLayer result{weights, {}};
  std::vector<int> pattern_ids;
  pattern_ids.reserve(weights.kernel_count());
  for (int o = 0; o < weights.out_channels; ++o)
    for (int i = 0; i < weights.in_channels; ++i)
      pattern_ids.push_back(best_fit(weights.kernel(o, i), dictionary).pattern_id);

  if (sharing == MaskSharingMode::layer_shared) {
    int shared = detail::majority_pattern(pattern_ids);
    std::fill(pattern_ids.begin(), pattern_ids.end(), shared);
  }

  std::size_t flat = 0;
  for (int o = 0; o < weights.out_channels; ++o)
    for (int i = 0; i < weights.in_channels; ++i, ++flat) {
      apply_mask_inplace(result.tensor.kernel(o, i),
                         detail::mask_by_id(dictionary, pattern_ids[flat]));
      result.kernels.push_back({o, i, pattern_ids[flat], MaskOrigin::best_fit});
    }
  return result;
}

// Child kernels inherit the parent's patterns cyclically by flat index.
inline PrunedLayer propagate_to_child(const WeightTensor& child,
                                      const std::vector<KernelMaskAssignment>& parent_kernels,
                                      const PatternDictionary& dictionary) {
  if (child.kernel_h != 3 || child.kernel_w != 3)
    throw Error(ErrorKind::wrong_kernel_shape,
                "layer '" + child.layer + "' does not have 3x3 kernels");
  if (parent_kernels.empty())
    throw Error(ErrorKind::inconsistent_inputs, "parent has no assignments to propagate");
  PrunedLayer result{child, {}};
  std::size_t flat = 0;
  for (int o = 0; o < child.out_channels; ++o)
    for (int i = 0; i < child.in_channels; ++i, ++flat) {
      int pattern = parent_kernels[flat % parent_kernels.size()].pattern_id;
      apply_mask_inplace(result.tensor.kernel(o, i), detail::mask_by_id(dictionary, pattern));
      result.kernels.push_back({o, i, pattern, MaskOrigin::inherited});
    }
  return result;
}

// Propagates a 3x3 parent's per-kernel patterns to every 3x3 child in the
// group. Children of other kernel sizes are skipped; pooling handles them.
inline std::vector<std::pair<std::string, PrunedLayer>> propagate_to_children(
    const LayerGroup& group, const std::vector<KernelMaskAssignment>& parent_kernels,
    const ModelBundle& bundle, const PatternDictionary& dictionary) {
  std::vector<std::pair<std::string, PrunedLayer>> pruned_children;
  for (const auto& child_name : group.children) {
    int index = bundle.layer_index(child_name);
    if (index < 0)
      throw Error(ErrorKind::inconsistent_inputs,
                  "group child '" + child_name + "' is not in the bundle");
    const auto& child = bundle.weights[index];
    if (child.kernel_h != 3 || child.kernel_w != 3) continue;
    pruned_children.emplace_back(child_name,
                                 propagate_to_child(child, parent_kernels, dictionary));
  }
  return pruned_children;
}

struct ChunkPattern {
  int pattern_id = kNoPattern;
  MaskOrigin origin = MaskOrigin::best_fit;
};

// 1x1 pooling. When `inherited` is non-empty it must hold one pattern per
// full chunk; otherwise each chunk gets its own best fit.
inline PrunedLayer pool_1x1_layer(const WeightTensor& weights,
                                  const PatternDictionary& dictionary,
                                  MaskSharingMode sharing = MaskSharingMode::per_kernel,
                                  std::span<const int> inherited = {}) {
  if (weights.kernel_h != 1 || weights.kernel_w != 1)
    throw Error(ErrorKind::wrong_kernel_shape,
                "layer '" + weights.layer + "' does not have 1x1 kernels");
  const std::size_t total = weights.values.size();
  const std::size_t full_chunks = total / 9;
  if (!inherited.empty() && inherited.size() != full_chunks)
    throw Error(ErrorKind::inconsistent_inputs,
                "inherited pattern count does not match chunk count");

  PrunedLayer result{weights, {}};
  std::vector<ChunkPattern> chunks(full_chunks);

  if (!inherited.empty()) {
    for (std::size_t c = 0; c < full_chunks; ++c)
      chunks[c] = {inherited[c], MaskOrigin::inherited};
  } else {
    for (std::size_t c = 0; c < full_chunks; ++c) {
      std::span<const float> chunk(weights.values.data() + c * 9, 9);
      chunks[c] = {best_fit(chunk, dictionary).pattern_id, MaskOrigin::best_fit};
    }
    if (sharing == MaskSharingMode::layer_shared && full_chunks > 0) {
      std::vector<int> ids;
      ids.reserve(full_chunks);
      for (const auto& chunk : chunks) ids.push_back(chunk.pattern_id);
      int shared = detail::majority_pattern(ids);
      for (auto& chunk : chunks) chunk.pattern_id = shared;
    }
  }

  for (std::size_t c = 0; c < full_chunks; ++c) {
    std::span<float> chunk(result.tensor.values.data() + c * 9, 9);
    apply_mask_inplace(chunk, detail::mask_by_id(dictionary, chunks[c].pattern_id));
  }
  for (std::size_t v = full_chunks * 9; v < total; ++v)
    result.tensor.values[v] = 0.0f; // short trailing chunk

  for (int o = 0; o < weights.out_channels; ++o)
    for (int i = 0; i < weights.in_channels; ++i) {
      std::size_t flat = static_cast<std::size_t>(o) * weights.in_channels + i;
      if (flat < full_chunks * 9) {
        const auto& chunk = chunks[flat / 9];
        result.kernels.push_back({o, i, chunk.pattern_id, chunk.origin});
      } else {
        result.kernels.push_back({o, i, kNoPattern, MaskOrigin::leftover_zeroed});
      }
    }
  return result;
}

inline PruneResult prune_model(const ModelBundle& bundle, const LayerGroupSet& groups,
                               const PatternDictionary& dictionary,
                               const PruneOptions& options = {}) {
  if (dictionary.masks.empty())
    throw Error(ErrorKind::empty_dictionary, "prune_model needs a calibrated dictionary");
  for (const auto& group : groups.groups) {
    if (bundle.layer_index(group.parent) < 0)
      throw Error(ErrorKind::inconsistent_inputs,
                  "group parent '" + group.parent + "' is not in the bundle");
    for (const auto& child : group.children)
      if (bundle.layer_index(child) < 0)
        throw Error(ErrorKind::inconsistent_inputs,
                    "group child '" + child + "' is not in the bundle");
  }

  PruneResult result;
  result.bundle = bundle;
  result.dictionary = dictionary;
  result.groups = groups;

  std::map<int, LayerAssignments> by_layer_index; // keeps bundle layer order

  auto install = [&](int layer_index, PrunedLayer pruned) {
    result.bundle.weights[layer_index] = std::move(pruned.tensor);
    by_layer_index[layer_index] =
        LayerAssignments{bundle.layers[layer_index].name, std::move(pruned.kernels)};
  };

  auto is_small_1x1 = [&](const LayerDescriptor& layer) {
    return layer.kernel_h == 1 && layer.kernel_w == 1 &&
           static_cast<std::size_t>(layer.out_channels) * layer.in_channels < 9;
  };

  for (const auto& group : groups.groups) {
    int parent_index = bundle.layer_index(group.parent);
    const auto& parent_layer = bundle.layers[parent_index];
    const bool parent_is_3x3 = parent_layer.kernel_h == 3 && parent_layer.kernel_w == 3;

    // Patterns selected at the parent, one per kernel (3x3) or per chunk (1x1).
    std::vector<int> parent_patterns;
    std::vector<KernelMaskAssignment> parent_kernels;

    if (parent_is_3x3) {
      auto pruned = prune_3x3_layer(bundle.weights[parent_index], dictionary, options.sharing);
      parent_kernels = pruned.kernels;
      for (const auto& k : pruned.kernels) parent_patterns.push_back(k.pattern_id);
      install(parent_index, std::move(pruned));
    } else if (options.exempt_small_1x1 && is_small_1x1(parent_layer)) {
      result.warnings.push_back("layer '" + parent_layer.name +
                                "' has fewer than 9 weights; exempted from pooling");
    } else {
      auto pruned = pool_1x1_layer(bundle.weights[parent_index], dictionary, options.sharing);
      for (std::size_t c = 0; c * 9 < pruned.kernels.size(); ++c) {
        if (pruned.kernels[c * 9].origin != MaskOrigin::leftover_zeroed)
          parent_patterns.push_back(pruned.kernels[c * 9].pattern_id);
      }
      install(parent_index, std::move(pruned));
    }

    if (parent_is_3x3 && !parent_kernels.empty())
      for (auto& [child_name, pruned] :
           propagate_to_children(group, parent_kernels, bundle, dictionary))
        install(bundle.layer_index(child_name), std::move(pruned));

    for (const auto& child_name : group.children) {
      int child_index = bundle.layer_index(child_name);
      const auto& child_layer = bundle.layers[child_index];
      const bool child_is_3x3 = child_layer.kernel_h == 3 && child_layer.kernel_w == 3;

      if (child_is_3x3) {
        if (parent_is_3x3 && !parent_kernels.empty()) continue; // inherited above
        install(child_index,
                prune_3x3_layer(bundle.weights[child_index], dictionary, options.sharing));
      } else {
        if (options.exempt_small_1x1 && is_small_1x1(child_layer)) {
          result.warnings.push_back("layer '" + child_layer.name +
                                    "' has fewer than 9 weights; exempted from pooling");
          continue;
        }
        std::size_t child_chunks = bundle.weights[child_index].values.size() / 9;
        if (!parent_patterns.empty() && parent_patterns.size() == child_chunks) {
          install(child_index, pool_1x1_layer(bundle.weights[child_index], dictionary,
                                              options.sharing, parent_patterns));
        } else {
          install(child_index, pool_1x1_layer(bundle.weights[child_index], dictionary,
                                              options.sharing));
        }
      }
    }
  }

  for (auto& [index, assignments] : by_layer_index)
    result.assignments.push_back(std::move(assignments));
  return result;
}

inline std::optional<MaskOrigin> parse_origin(std::string_view text) {
  if (text == "best_fit") return MaskOrigin::best_fit;
  if (text == "inherited") return MaskOrigin::inherited;
  if (text == "leftover_zeroed") return MaskOrigin::leftover_zeroed;
  return std::nullopt;
}

// Audit export: one row per kernel. Leftover-zeroed kernels have no mask and
// carry pattern_id -1.
inline std::string format_assignments(const PruneResult& result) {
  std::string out = "# rtoss-assignments v1\n";
  out += "# variant=" + std::string(to_string(result.dictionary.variant)) + "\n";
  out += "layer\tout_index\tin_index\tpattern_id\torigin\n";
  for (const auto& layer : result.assignments)
    for (const auto& kernel : layer.kernels) {
      out += layer.layer + "\t" + std::to_string(kernel.out_index) + "\t" +
             std::to_string(kernel.in_index) + "\t" + std::to_string(kernel.pattern_id) +
             "\t" + std::string(to_string(kernel.origin)) + "\n";
    }
  return out;
}

inline std::vector<LayerAssignments> parse_assignments(std::istream& in) {
  std::vector<LayerAssignments> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.rfind("layer\t", 0) == 0) continue;
    std::array<std::string, 5> fields;
    std::size_t start = 0;
    for (int f = 0; f < 5; ++f) {
      std::size_t tab = line.find('\t', start);
      if (f < 4 && tab == std::string::npos)
        throw Error(ErrorKind::manifest_parse,
                    "assignments line " + std::to_string(line_no) + " has too few fields");
      fields[f] = line.substr(start, tab == std::string::npos ? tab : tab - start);
      start = tab + 1;
    }
    auto origin = parse_origin(fields[4]);
    if (!origin)
      throw Error(ErrorKind::manifest_parse,
                  "unknown origin '" + fields[4] + "' on line " + std::to_string(line_no));
    KernelMaskAssignment kernel;
    try {
      kernel.out_index = std::stoi(fields[1]);
      kernel.in_index = std::stoi(fields[2]);
      kernel.pattern_id = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::manifest_parse,
                  "bad integer field on line " + std::to_string(line_no));
    }
    kernel.origin = *origin;
    if (result.empty() || result.back().layer != fields[0])
      result.push_back(LayerAssignments{fields[0], {}});
    result.back().kernels.push_back(kernel);
  }
  return result;
}

inline std::vector<LayerAssignments> load_assignments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open '" + path.string() + "'");
  return parse_assignments(in);
}

} // namespace rtoss
