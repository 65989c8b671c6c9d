#pragma once

// Sparsity and MAC accounting. The cost model is shape-only: stride 1 and
// same-padding, so a layer's dense MAC count is
// out_ch * in_ch * kh * kw * out_h * out_w and the sparse count scales with
// the nonzero weight fraction (exactly nonzero * out_h * out_w).
//
// The reduction ratio is parameter-count based (total prunable weights over
// surviving nonzeros); non-prunable layers are reported but excluded from the
// ratio unless requested.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtoss/error.hpp"
#include "rtoss/model.hpp"
#include "rtoss/pruning.hpp"

namespace rtoss {

struct LayerStats {
  std::string layer;
  bool prunable = false;
  uint64_t total_weights = 0;
  uint64_t nonzero_weights = 0;
  uint64_t kernels_total = 0;
  uint64_t kernels_fully_zero = 0;
  uint64_t mac_dense = 0;
  uint64_t mac_sparse = 0;
};

struct PruneReport {
  std::vector<LayerStats> per_layer;
  uint64_t prunable_layer_count = 0;
  uint64_t model_total_weights = 0;   // prunable layers
  uint64_t model_nonzero = 0;         // prunable layers
  uint64_t nonprunable_total = 0;
  uint64_t nonprunable_nonzero = 0;
  double reduction_ratio = 1.0;
  std::vector<std::string> diagnostics;
};

struct InputSpatial {
  int height = 64;
  int width = 64;
};

inline LayerStats layer_stats(const WeightTensor& original, const WeightTensor& pruned,
                              InputSpatial spatial) {
  if (original.out_channels != pruned.out_channels ||
      original.in_channels != pruned.in_channels ||
      original.kernel_h != pruned.kernel_h || original.kernel_w != pruned.kernel_w ||
      original.values.size() != pruned.values.size())
    throw Error(ErrorKind::shape_mismatch,
                "original and pruned tensors for '" + original.layer + "' differ in shape");

  LayerStats stats;
  stats.layer = pruned.layer;
  stats.prunable = (pruned.kernel_h == 3 && pruned.kernel_w == 3) ||
                   (pruned.kernel_h == 1 && pruned.kernel_w == 1);
  stats.total_weights = pruned.values.size();
  stats.kernels_total = pruned.kernel_count();
  for (int o = 0; o < pruned.out_channels; ++o)
    for (int i = 0; i < pruned.in_channels; ++i) {
      bool any = false;
      for (float v : pruned.kernel(o, i))
        if (v != 0.0f) { any = true; break; }
      if (!any) stats.kernels_fully_zero++;
    }
  for (float v : pruned.values)
    if (v != 0.0f) stats.nonzero_weights++;

  uint64_t spatial_count = static_cast<uint64_t>(spatial.height) * spatial.width;
  stats.mac_dense = stats.total_weights * spatial_count;
  stats.mac_sparse = stats.nonzero_weights * spatial_count;
  return stats;
}

inline PruneReport report_for_bundle(const ModelBundle& bundle, InputSpatial spatial) {
  PruneReport report;
  for (std::size_t i = 0; i < bundle.weights.size(); ++i) {
    LayerStats stats = layer_stats(bundle.weights[i], bundle.weights[i], spatial);
    stats.prunable = is_prunable(bundle.layers[i]);
    if (stats.prunable) {
      report.prunable_layer_count++;
      report.model_total_weights += stats.total_weights;
      report.model_nonzero += stats.nonzero_weights;
    } else {
      report.nonprunable_total += stats.total_weights;
      report.nonprunable_nonzero += stats.nonzero_weights;
    }
    report.per_layer.push_back(std::move(stats));
  }
  if (report.prunable_layer_count == 0)
    report.diagnostics.push_back("bundle has no prunable layers; reduction ratio is 1");
  if (report.model_total_weights == 0 || report.model_nonzero == 0)
    report.reduction_ratio = 1.0;
  else
    report.reduction_ratio = static_cast<double>(report.model_total_weights) /
                             static_cast<double>(report.model_nonzero);
  return report;
}

inline PruneReport model_report(const PruneResult& result, InputSpatial spatial,
                                bool include_nonprunable = false) {
  PruneReport report = report_for_bundle(result.bundle, spatial);
  if (include_nonprunable) {
    uint64_t total = report.model_total_weights + report.nonprunable_total;
    uint64_t nonzero = report.model_nonzero + report.nonprunable_nonzero;
    report.reduction_ratio =
        nonzero == 0 ? 1.0 : static_cast<double>(total) / static_cast<double>(nonzero);
  }
  for (const auto& warning : result.warnings) report.diagnostics.push_back(warning);
  return report;
}

inline nlohmann::ordered_json report_to_json(const PruneReport& report) {
  nlohmann::ordered_json doc;
  doc["format"] = "rtoss-report/1";
  doc["model"] = {
      {"prunable_layers", report.prunable_layer_count},
      {"total_weights", report.model_total_weights},
      {"nonzero_weights", report.model_nonzero},
      {"nonprunable_total_weights", report.nonprunable_total},
      {"nonprunable_nonzero_weights", report.nonprunable_nonzero},
      {"reduction_ratio", report.reduction_ratio},
  };
  auto layers = nlohmann::ordered_json::array();
  for (const auto& stats : report.per_layer) {
    layers.push_back({{"layer", stats.layer},
                      {"prunable", stats.prunable},
                      {"total_weights", stats.total_weights},
                      {"nonzero_weights", stats.nonzero_weights},
                      {"kernels_total", stats.kernels_total},
                      {"kernels_fully_zero", stats.kernels_fully_zero},
                      {"mac_dense", stats.mac_dense},
                      {"mac_sparse", stats.mac_sparse}});
  }
  doc["layers"] = std::move(layers);
  doc["diagnostics"] = report.diagnostics;
  return doc;
}

// Aligned human-readable table.
inline std::string format_report_table(const PruneReport& report) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-20s %9s %12s %12s %8s %14s %14s\n", "layer", "prunable",
                "total", "nonzero", "zero_k", "mac_dense", "mac_sparse");
  out += line;
  for (const auto& s : report.per_layer) {
    std::snprintf(line, sizeof line, "%-20s %9s %12llu %12llu %8llu %14llu %14llu\n",
                  s.layer.c_str(), s.prunable ? "yes" : "no",
                  static_cast<unsigned long long>(s.total_weights),
                  static_cast<unsigned long long>(s.nonzero_weights),
                  static_cast<unsigned long long>(s.kernels_fully_zero),
                  static_cast<unsigned long long>(s.mac_dense),
                  static_cast<unsigned long long>(s.mac_sparse));
    out += line;
  }
  std::snprintf(line, sizeof line, "reduction ratio: %.3f (%llu / %llu prunable weights)\n",
                report.reduction_ratio,
                static_cast<unsigned long long>(report.model_total_weights),
                static_cast<unsigned long long>(report.model_nonzero));
  out += line;
  return out;
}

} // namespace rtoss
