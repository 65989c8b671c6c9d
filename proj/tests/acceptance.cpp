// Acceptance suite: exercises the full toolkit end to end and prints one
// PASS/FAIL line per criterion. The path to the rtoss CLI binary must be
// passed as argv[1] (the pipeline-determinism criterion shells out to it).

#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <sys/wait.h>

#include "rtoss/rtoss.hpp"

using namespace rtoss;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::mt19937 g_rng(0xACCE55);

float dense_weight() {
  double u = g_rng() * (1.0 / 4294967296.0);
  float magnitude = static_cast<float>(0.25 + 1.25 * u);
  return (g_rng() & 1) ? magnitude : -magnitude;
}

ModelBundle build_bundle(
    const std::vector<std::tuple<std::string, int, int, int, std::vector<std::string>>>& specs) {
  ModelBundle bundle;
  for (const auto& [name, out_ch, in_ch, k, parents] : specs) {
    LayerDescriptor layer;
    layer.name = name;
    layer.out_channels = out_ch;
    layer.in_channels = in_ch;
    layer.kernel_h = layer.kernel_w = k;
    layer.parents = parents;
    WeightTensor tensor;
    tensor.layer = name;
    tensor.out_channels = out_ch;
    tensor.in_channels = in_ch;
    tensor.kernel_h = tensor.kernel_w = k;
    tensor.values.resize(tensor.element_count());
    for (auto& v : tensor.values) v = dense_weight();
    bundle.layers.push_back(std::move(layer));
    bundle.weights.push_back(std::move(tensor));
  }
  return bundle;
}

PatternDictionary whole_filtered_dictionary(Variant variant) {
  PatternDictionary dict;
  dict.variant = variant;
  dict.masks = filter_adjacent(generate_candidates(entry_count(variant)));
  dict.calibration.degenerate = true;
  dict.calibration.wins.assign(dict.masks.size(), 0);
  return dict;
}

// ---------------------------------------------------------------------------
// 1. Analytic compression reproduction
// ---------------------------------------------------------------------------
Check criterion_compression() {
  Check check;
  auto bundle = build_bundle({
      {"c1", 8, 3, 3, {}},
      {"c2", 8, 8, 3, {"c1"}},
      {"c3", 4, 8, 3, {"c2"}},
  });
  auto groups = group_layers(bundle);

  auto dict2 = calibrate_dictionary(Variant::ep2, 1000, kDefaultSeed, 6);
  auto ratio2 = model_report(prune_model(bundle, groups, dict2), {16, 16}).reduction_ratio;
  char printed[16];
  std::snprintf(printed, sizeof printed, "%.3f", ratio2);
  check.require(ratio2 == 4.5 && std::string(printed) == "4.500",
                "2EP ratio " + std::string(printed) + " != 4.500");

  auto dict3 = calibrate_dictionary(Variant::ep3, 1000, kDefaultSeed, 6);
  auto ratio3 = model_report(prune_model(bundle, groups, dict3), {16, 16}).reduction_ratio;
  std::snprintf(printed, sizeof printed, "%.3f", ratio3);
  check.require(ratio3 == 3.0 && std::string(printed) == "3.000",
                "3EP ratio " + std::string(printed) + " != 3.000");

  // Mixed model: measured ratio must sit inside [diluted 9/k, 9/k].
  auto mixed = build_bundle({
      {"c1", 6, 3, 3, {}},
      {"pw", 9, 6, 1, {"c1"}},   // 54 weights: 6 full chunks
      {"np", 4, 6, 5, {"pw"}},   // non-prunable 5x5
  });
  auto result = prune_model(mixed, group_layers(mixed), dict2);
  double excl = model_report(result, {16, 16}).reduction_ratio;
  double incl = model_report(result, {16, 16}, true).reduction_ratio;
  double prunable_total = 6 * 3 * 9 + 54;
  double nonprunable = 4 * 6 * 25;
  double diluted =
      (prunable_total + nonprunable) / (prunable_total * 2.0 / 9.0 + nonprunable);
  check.require(excl == 4.5, "mixed-model prunable ratio is not 9/k");
  check.require(incl >= diluted - 1e-12 && incl <= 4.5,
                "diluted ratio outside [9/k diluted, 9/k]");
  return check;
}

// ---------------------------------------------------------------------------
// 2. Pattern combinatorics
// ---------------------------------------------------------------------------
Check criterion_combinatorics() {
  Check check;
  constexpr std::array<int, 9> choose9 = {0, 9, 36, 84, 126, 126, 84, 36, 9};
  for (int k = 1; k <= 8; ++k)
    check.require(static_cast<int>(generate_candidates(k).size()) == choose9[k],
                  "candidate count for k=" + std::to_string(k));

  // Independent oracle: enumerate cell pairs and count the 8-adjacent ones.
  int adjacent_pairs = 0;
  for (int a = 0; a < 9; ++a)
    for (int b = a + 1; b < 9; ++b)
      if (std::abs(a / 3 - b / 3) <= 1 && std::abs(a % 3 - b % 3) <= 1) adjacent_pairs++;
  auto survivors = filter_adjacent(generate_candidates(2));
  check.require(adjacent_pairs == 20, "pair oracle does not give 20");
  check.require(static_cast<int>(survivors.size()) == 20, "2EP survivors != 20");

  // Oracle and filter agree mask by mask.
  std::set<uint16_t> survivor_bits;
  for (const auto& mask : survivors) survivor_bits.insert(mask.bits);
  for (const auto& mask : generate_candidates(2)) {
    int cells[2], n = 0;
    for (int cell = 0; cell < 9; ++cell)
      if (mask.bits >> cell & 1) cells[n++] = cell;
    bool adjacent = std::abs(cells[0] / 3 - cells[1] / 3) <= 1 &&
                    std::abs(cells[0] % 3 - cells[1] % 3) <= 1;
    check.require(adjacent == (survivor_bits.count(mask.bits) > 0),
                  "filter disagrees with the pair oracle");
  }
  return check;
}

// ---------------------------------------------------------------------------
// 3. Best-fit oracle equivalence
// ---------------------------------------------------------------------------
Check criterion_best_fit() {
  Check check;
  int agreements = 0;
  const int total = 1200;
  for (int round = 0; round < total; ++round) {
    Variant variant = round % 2 ? Variant::ep3 : Variant::ep2;
    auto dict = round % 4 < 2 ? whole_filtered_dictionary(variant)
                              : calibrate_dictionary(variant, 200, 11, 6);
    std::array<float, 9> kernel;
    for (auto& v : kernel) v = static_cast<float>(g_rng() * (2.0 / 4294967296.0) - 1.0);

    auto fit = best_fit(std::span<const float>(kernel.data(), 9), dict);

    // Independent scan: materialize each masked kernel, score via apply_mask.
    int expected_id = kNoPattern;
    double expected_energy = -1.0;
    for (const auto& mask : dict.masks) {
      auto masked = apply_mask(std::span<const float>(kernel.data(), 9), mask);
      double energy = 0.0;
      for (float v : masked) energy += static_cast<double>(v) * v;
      if (energy > expected_energy ||
          (energy == expected_energy && mask.id < expected_id)) {
        expected_energy = energy;
        expected_id = mask.id;
      }
    }
    if (fit.pattern_id == expected_id && fit.retained_l2 == std::sqrt(expected_energy))
      agreements++;
  }
  check.require(agreements == total,
                std::to_string(agreements) + "/" + std::to_string(total) + " agreements");
  check.detail = std::to_string(agreements) + "/" + std::to_string(total) + " kernels agree";
  return check;
}

// ---------------------------------------------------------------------------
// 4. 1x1 pooling round-trip
// ---------------------------------------------------------------------------
Check criterion_pooling() {
  Check check;
  for (int round = 0; round < 60; ++round) {
    Variant variant = round % 2 ? Variant::ep3 : Variant::ep2;
    auto dict = whole_filtered_dictionary(variant);
    uint64_t k = static_cast<uint64_t>(entry_count(variant));

    int out_ch = 1 + static_cast<int>(g_rng() % 40);
    int in_ch = 1 + static_cast<int>(g_rng() % 25);
    while (static_cast<uint64_t>(out_ch) * in_ch < 9 ||
           static_cast<uint64_t>(out_ch) * in_ch > 1000) {
      out_ch = 1 + static_cast<int>(g_rng() % 40);
      in_ch = 1 + static_cast<int>(g_rng() % 25);
    }
    auto bundle = build_bundle({{"pw", out_ch, in_ch, 1, {}}});
    const auto& original = bundle.weights[0];
    auto pruned = pool_1x1_layer(original, dict);

    uint64_t total = original.values.size();
    uint64_t nonzero = 0;
    for (std::size_t v = 0; v < total; ++v) {
      float value = pruned.tensor.values[v];
      if (value != 0.0f) {
        nonzero++;
        check.require(std::bit_cast<uint32_t>(value) ==
                          std::bit_cast<uint32_t>(original.values[v]),
                      "kept weight is not bit-identical");
      }
    }
    check.require(nonzero == k * (total / 9),
                  "nonzero count " + std::to_string(nonzero) + " != k*floor(N/9)");
    for (uint64_t v = (total / 9) * 9; v < total; ++v)
      check.require(std::bit_cast<uint32_t>(pruned.tensor.values[v]) == 0u,
                    "leftover position is not exactly +0.0");
  }
  return check;
}

// ---------------------------------------------------------------------------
// 5. DFS grouping properties
// ---------------------------------------------------------------------------
Check criterion_grouping() {
  Check check;
  for (int round = 0; round < 100; ++round) {
    int n = 2 + static_cast<int>(g_rng() % 49);
    std::vector<std::tuple<std::string, int, int, int, std::vector<std::string>>> specs;
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> parents;
      int max_parents = std::min(i, 3);
      int parent_count = max_parents == 0 ? 0 : static_cast<int>(g_rng() % (max_parents + 1));
      std::set<int> chosen;
      while (static_cast<int>(chosen.size()) < parent_count)
        chosen.insert(static_cast<int>(g_rng() % i));
      for (int p : chosen) parents.push_back("L" + std::to_string(p));
      specs.emplace_back("L" + std::to_string(i), 1 + static_cast<int>(g_rng() % 3),
                         1 + static_cast<int>(g_rng() % 3), g_rng() % 2 ? 3 : 1, parents);
    }
    auto bundle = build_bundle(specs);
    auto groups = group_layers(bundle);
    auto again = group_layers(bundle);

    // run-to-run identical
    check.require(groups.groups.size() == again.groups.size(), "group count differs");
    for (std::size_t g = 0; g < groups.groups.size(); ++g) {
      check.require(groups.groups[g].parent == again.groups[g].parent, "parent differs");
      check.require(groups.groups[g].children == again.groups[g].children, "children differ");
    }

    // partition & single membership
    std::set<std::string> members;
    std::size_t member_rows = 0;
    std::set<std::string> group_parents;
    for (const auto& group : groups.groups) {
      group_parents.insert(group.parent);
      members.insert(group.parent);
      member_rows += 1 + group.children.size();
      for (const auto& child : group.children) members.insert(child);
    }
    check.require(members.size() == member_rows, "a layer appears in two groups");
    check.require(members.size() == bundle.layers.size(), "partition does not cover all layers");

    // parentless layers are their own group's parent
    for (const auto& layer : bundle.layers)
      if (layer.parents.empty())
        check.require(group_parents.count(layer.name) == 1,
                      "parentless layer " + layer.name + " is not a group parent");
  }
  return check;
}

// ---------------------------------------------------------------------------
// 6. Executor equivalence
// ---------------------------------------------------------------------------
Check criterion_executor() {
  Check check;
  int pairs = 0;
  while (pairs < 100) {
    bool pointwise = g_rng() % 3 == 0;
    int out_ch = 1 + static_cast<int>(g_rng() % 6);
    int in_ch = 1 + static_cast<int>(g_rng() % 6);
    if (pointwise && out_ch * in_ch < 9) continue; // avoid the exemption path
    auto bundle = build_bundle({{"layer", out_ch, in_ch, pointwise ? 1 : 3, {}}});

    Variant variant = g_rng() % 2 ? Variant::ep3 : Variant::ep2;
    auto dict = whole_filtered_dictionary(variant);
    auto result = prune_model(bundle, group_layers(bundle), dict);
    if (result.assignments.empty()) continue;

    int h = 2 + static_cast<int>(g_rng() % 7), w = 2 + static_cast<int>(g_rng() % 7);
    FeatureMap input = make_feature_map(in_ch, h, w);
    for (auto& v : input.values)
      v = static_cast<float>(g_rng() * (2.0 / 4294967296.0) - 1.0);

    auto dense = conv2d_dense(input, result.bundle.weights[0]);
    auto [sparse, trace] =
        conv2d_pattern_sparse(input, result.bundle.weights[0], result.assignments[0], dict);

    bool bits_equal = dense.values.size() == sparse.values.size();
    for (std::size_t i = 0; bits_equal && i < dense.values.size(); ++i)
      bits_equal = std::bit_cast<uint32_t>(dense.values[i]) ==
                   std::bit_cast<uint32_t>(sparse.values[i]);
    check.require(bits_equal, "sparse output differs from dense");

    uint64_t dense_macs = static_cast<uint64_t>(out_ch) * in_ch *
                          (pointwise ? 1 : 9) * h * w;
    check.require(trace.macs_performed + trace.macs_skipped == dense_macs,
                  "trace does not conserve the dense MAC count");

    uint64_t zero_weights = 0;
    for (float v : result.bundle.weights[0].values) zero_weights += v == 0.0f;
    check.require(trace.macs_skipped == zero_weights * static_cast<uint64_t>(h) * w,
                  "skipped fraction != zero-weight fraction");
    pairs++;
  }
  check.detail = "100 (model, input) pairs bit-equal";
  return check;
}

// ---------------------------------------------------------------------------
// 7. Idempotence and no connectivity pruning
// ---------------------------------------------------------------------------
Check criterion_idempotence() {
  Check check;
  auto bundle = build_bundle({
      {"stem", 4, 3, 3, {}},
      {"block", 4, 4, 3, {"stem"}},
      {"proj", 9, 4, 1, {"block"}},   // 36 weights: 4 full chunks, no leftover
      {"tiny", 2, 2, 1, {}},          // 4 weights: exempted by default
  });
  auto dict = calibrate_dictionary(Variant::ep2, 1000, kDefaultSeed, 6);
  auto once = prune_model(bundle, group_layers(bundle), dict);
  auto twice = prune_model(once.bundle, group_layers(once.bundle), dict);

  for (std::size_t i = 0; i < bundle.weights.size(); ++i) {
    const auto& a = once.bundle.weights[i].values;
    const auto& b = twice.bundle.weights[i].values;
    check.require(a.size() == b.size(), "tensor size changed on re-prune");
    for (std::size_t v = 0; v < a.size(); ++v)
      check.require(std::bit_cast<uint32_t>(a[v]) == std::bit_cast<uint32_t>(b[v]),
                    "re-pruning changed weights");
  }
  check.require(once.assignments.size() == twice.assignments.size(),
                "assignment layer count changed");
  for (std::size_t l = 0; l < once.assignments.size(); ++l)
    for (std::size_t t = 0; t < once.assignments[l].kernels.size(); ++t)
      check.require(once.assignments[l].kernels[t].pattern_id ==
                        twice.assignments[l].kernels[t].pattern_id,
                    "re-pruning changed a pattern assignment");

  // No pruning unit fully zeroed under the default policy: no 3x3 kernel,
  // and no full 9-weight chunk of a pooled 1x1 layer (the leftover tail is
  // the only documented exception, and these layer sizes have none).
  uint64_t fully_zeroed = 0;
  for (const auto& tensor : once.bundle.weights) {
    if (!once.find_assignments(tensor.layer)) continue; // exempt or non-prunable
    if (tensor.kernel_h == 3 && tensor.kernel_w == 3) {
      for (int o = 0; o < tensor.out_channels; ++o)
        for (int i = 0; i < tensor.in_channels; ++i) {
          bool all_zero = true;
          for (float v : tensor.kernel(o, i)) all_zero = all_zero && v == 0.0f;
          if (all_zero) fully_zeroed++;
        }
    } else if (tensor.kernel_h == 1 && tensor.kernel_w == 1) {
      std::size_t full_chunks = tensor.values.size() / 9;
      for (std::size_t c = 0; c < full_chunks; ++c) {
        bool all_zero = true;
        for (std::size_t v = c * 9; v < c * 9 + 9; ++v)
          all_zero = all_zero && tensor.values[v] == 0.0f;
        if (all_zero) fully_zeroed++;
      }
      for (std::size_t v = full_chunks * 9; v < tensor.values.size(); ++v)
        check.require(false, "unexpected leftover in a multiple-of-9 layer");
    }
  }
  check.require(fully_zeroed == 0,
                std::to_string(fully_zeroed) + " pruning units fully zeroed");
  return check;
}

// ---------------------------------------------------------------------------
// 8. CLI pipeline determinism
// ---------------------------------------------------------------------------
int run_cli(const std::string& command) {
  int status = std::system((command + " > /dev/null 2>&1").c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Check criterion_determinism(const std::string& cli) {
  Check check;
  if (cli.empty()) {
    check.require(false, "no CLI path given (pass the rtoss binary as argv[1])");
    return check;
  }
  auto dir = std::filesystem::temp_directory_path() /
             ("rtoss-acceptance-" + std::to_string(g_rng()));
  std::filesystem::create_directories(dir);

  auto model = (dir / "model.rtoss").string();
  auto dict = (dir / "dict.json").string();
  auto pruned = (dir / "pruned.rtoss").string();
  const std::vector<std::filesystem::path> artifacts = {
      dir / "model.rtoss", dir / "dict.json", dir / "pruned.rtoss",
      dir / "pruned.assignments.tsv", dir / "pruned.report.json"};

  // Two runs of the identical pipeline; outputs captured between them.
  std::vector<std::string> first_bytes;
  for (int run = 0; run < 2 && check.ok; ++run) {
    check.require(run_cli(cli + " synth --out " + model + " --preset mixed --seed 7") == 0,
                  "synth failed");
    check.require(run_cli(cli + " patterns --variant 2EP --trials 3000 --seed 42 --out " +
                          dict) == 0,
                  "patterns failed");
    check.require(run_cli(cli + " prune --model " + model + " --dict " + dict + " --out " +
                          pruned) == 0,
                  "prune failed");
    if (!check.ok) break;
    if (run == 0) {
      for (const auto& path : artifacts) {
        first_bytes.push_back(slurp(path));
        check.require(!first_bytes.back().empty(), path.filename().string() + " not written");
      }
    } else {
      for (std::size_t i = 0; i < artifacts.size(); ++i)
        check.require(slurp(artifacts[i]) == first_bytes[i],
                      artifacts[i].filename().string() + " differs between runs");
    }
  }

  if (check.ok) {
    int verify_code = run_cli(cli + " verify --model " + model + " --pruned " + pruned +
                              " --dict " + dict + " --assignments " +
                              (dir / "pruned.assignments.tsv").string() +
                              " --height 8 --width 8");
    check.require(verify_code == 0, "verify exit code " + std::to_string(verify_code));
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return check;
}

int report_criterion(int index, const std::string& name, const Check& check, double seconds) {
  std::printf("[%d/8] %s %s%s%s (%.2fs)\n", index, check.ok ? "PASS" : "FAIL", name.c_str(),
              check.detail.empty() ? "" : ": ", check.detail.c_str(), seconds);
  return check.ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  std::string cli = argc > 1 ? argv[1] : "";
  int failures = 0;
  int index = 0;

  auto timed = [&](const std::string& name, std::function<Check()> fn) {
    auto start = std::chrono::steady_clock::now();
    Check check;
    try {
      check = fn();
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail = std::string("exception: ") + e.what();
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += report_criterion(++index, name, check, seconds);
  };

  timed("analytic compression reproduction (2EP=4.500, 3EP=3.000, bracket)",
        criterion_compression);
  timed("pattern combinatorics (C(9,k); 2EP survivors = 20 vs oracle)",
        criterion_combinatorics);
  timed("best-fit oracle equivalence", criterion_best_fit);
  timed("1x1 pooling round-trip", criterion_pooling);
  timed("DFS grouping properties on 100 random DAGs", criterion_grouping);
  timed("executor equivalence and trace conservation", criterion_executor);
  timed("idempotence and no connectivity pruning", criterion_idempotence);
  timed("CLI pipeline determinism", [&] { return criterion_determinism(cli); });

  if (failures) {
    std::printf("%d of 8 criteria FAILED\n", failures);
    return 1;
  }
  std::printf("all 8 criteria passed\n");
  return 0;
}
