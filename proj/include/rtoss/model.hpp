#pragma once

// In-memory form of the serialized convolution model: layer descriptors with
// explicit parent edges plus one dense float32 weight tensor per layer.
// Only 1x1 and 3x3 conv kernels are prunable; other sizes load fine but are
// flagged by validate_model and left untouched by the pruning passes.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rtoss/error.hpp"

namespace rtoss {

enum class LayerKind { conv2d };

struct LayerDescriptor {
  std::string name;
  LayerKind kind = LayerKind::conv2d;
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  std::vector<std::string> parents;
  // Opaque per-layer attributes (biases, norm parameters, ...) carried
  // through load/save untouched.
  nlohmann::ordered_json attrs;
};

inline bool is_prunable(const LayerDescriptor& layer) {
  if (layer.kind != LayerKind::conv2d) return false;
  return (layer.kernel_h == 3 && layer.kernel_w == 3) ||
         (layer.kernel_h == 1 && layer.kernel_w == 1);
}

// Dense weights, row-major (out_channels, in_channels, kernel_h, kernel_w).
struct WeightTensor {
  std::string layer;
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  std::vector<float> values;

  std::size_t kernel_size() const {
    return static_cast<std::size_t>(kernel_h) * kernel_w;
  }
  std::size_t kernel_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels;
  }
  std::size_t element_count() const { return kernel_count() * kernel_size(); }

  std::size_t kernel_offset(int out_index, int in_index) const {
    return (static_cast<std::size_t>(out_index) * in_channels + in_index) *
           kernel_size();
  }
  std::span<const float> kernel(int out_index, int in_index) const {
    return {values.data() + kernel_offset(out_index, in_index), kernel_size()};
  }
  std::span<float> kernel(int out_index, int in_index) {
    return {values.data() + kernel_offset(out_index, in_index), kernel_size()};
  }
  float at(int o, int i, int r, int c) const {
    return values[kernel_offset(o, i) + static_cast<std::size_t>(r) * kernel_w + c];
  }
};

struct ModelBundle {
  int manifest_version = 1;
  std::vector<LayerDescriptor> layers;
  std::vector<WeightTensor> weights; // parallel to layers

  int layer_index(std::string_view name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].name == name) return static_cast<int>(i);
    return -1;
  }
  const LayerDescriptor* find_layer(std::string_view name) const {
    int idx = layer_index(name);
    return idx < 0 ? nullptr : &layers[idx];
  }
};

enum class Severity { warning, error };

enum class DiagnosticKind {
  duplicate_layer_name,
  bad_dimension,
  shape_mismatch,
  dangling_parent,
  cycle_detected,
  non_finite_weight,
  non_prunable_kernel_size,
};

inline std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
  case DiagnosticKind::duplicate_layer_name: return "DuplicateLayerName";
  case DiagnosticKind::bad_dimension: return "BadDimension";
  case DiagnosticKind::shape_mismatch: return "ShapeMismatch";
  case DiagnosticKind::dangling_parent: return "DanglingParent";
  case DiagnosticKind::cycle_detected: return "CycleDetected";
  case DiagnosticKind::non_finite_weight: return "NonFiniteWeight";
  case DiagnosticKind::non_prunable_kernel_size: return "NonPrunableKernelSize";
  }
  return "Unknown";
}

struct Diagnostic {
  Severity severity = Severity::error;
  DiagnosticKind kind = DiagnosticKind::shape_mismatch;
  std::string layer;
  std::string message;
};

// Returns one diagnostic per violated invariant; empty means the bundle is
// valid. Non-prunable kernel sizes are reported as warnings, not errors.
inline std::vector<Diagnostic> validate_model(const ModelBundle& bundle) {
  std::vector<Diagnostic> diags;
  auto add = [&](Severity sev, DiagnosticKind kind, const std::string& layer,
                 std::string message) {
    diags.push_back({sev, kind, layer, std::move(message)});
  };

  std::unordered_set<std::string> seen;
  for (const auto& layer : bundle.layers) {
    if (!seen.insert(layer.name).second)
      add(Severity::error, DiagnosticKind::duplicate_layer_name, layer.name,
          "layer name declared more than once");
  }

  if (bundle.weights.size() != bundle.layers.size())
    add(Severity::error, DiagnosticKind::shape_mismatch, "",
        "bundle has " + std::to_string(bundle.layers.size()) + " layers but " +
            std::to_string(bundle.weights.size()) + " weight tensors");

  for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
    const auto& layer = bundle.layers[i];
    if (layer.out_channels <= 0 || layer.in_channels <= 0 ||
        layer.kernel_h <= 0 || layer.kernel_w <= 0) {
      add(Severity::error, DiagnosticKind::bad_dimension, layer.name,
          "all dimensions must be positive");
      continue;
    }
    if (!is_prunable(layer))
      add(Severity::warning, DiagnosticKind::non_prunable_kernel_size,
          layer.name,
          "kernel " + std::to_string(layer.kernel_h) + "x" +
              std::to_string(layer.kernel_w) +
              " is not prunable (only 1x1 and 3x3 are)");

    for (const auto& parent : layer.parents)
      if (bundle.layer_index(parent) < 0)
        add(Severity::error, DiagnosticKind::dangling_parent, layer.name,
            "parent '" + parent + "' is not declared in the bundle");

    if (i < bundle.weights.size()) {
      const auto& tensor = bundle.weights[i];
      if (tensor.layer != layer.name ||
          tensor.out_channels != layer.out_channels ||
          tensor.in_channels != layer.in_channels ||
          tensor.kernel_h != layer.kernel_h ||
          tensor.kernel_w != layer.kernel_w ||
          tensor.values.size() != tensor.element_count()) {
        add(Severity::error, DiagnosticKind::shape_mismatch, layer.name,
            "weight tensor does not match the declared layer shape");
        continue;
      }
      for (std::size_t v = 0; v < tensor.values.size(); ++v) {
        if (!std::isfinite(tensor.values[v])) {
          add(Severity::error, DiagnosticKind::non_finite_weight, layer.name,
              "non-finite weight at flat index " + std::to_string(v));
          break;
        }
      }
    }
  }

  // Cycle check over the parent-edge relation (iterative three-color DFS).
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < bundle.layers.size(); ++i)
    index.emplace(bundle.layers[i].name, static_cast<int>(i));
  enum : uint8_t { white, grey, black };
  std::vector<uint8_t> color(bundle.layers.size(), white);
  bool cyclic = false;
  std::string cycle_layer;
  for (std::size_t start = 0; start < bundle.layers.size() && !cyclic; ++start) {
    if (color[start] != white) continue;
    std::vector<std::pair<int, std::size_t>> stack{{static_cast<int>(start), 0}};
    color[start] = grey;
    while (!stack.empty() && !cyclic) {
      auto& [node, next_edge] = stack.back();
      const auto& parents = bundle.layers[node].parents;
      if (next_edge == parents.size()) {
        color[node] = black;
        stack.pop_back();
        continue;
      }
      auto it = index.find(parents[next_edge++]);
      if (it == index.end()) continue; // dangling, reported above
      if (color[it->second] == grey) {
        cyclic = true;
        cycle_layer = bundle.layers[it->second].name;
      } else if (color[it->second] == white) {
        color[it->second] = grey;
        stack.emplace_back(it->second, 0);
      }
    }
  }
  if (cyclic)
    add(Severity::error, DiagnosticKind::cycle_detected, cycle_layer,
        "parent edges form a cycle through '" + cycle_layer + "'");

  return diags;
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::error) return true;
  return false;
}

} // namespace rtoss
