// rtoss: calibrate pattern dictionaries, prune bundles, report sparsity, and
// verify executor equivalence.
//
// Exit codes: 0 success, 1 verification/processing failure, 2 usage or
// unreadable/invalid inputs. Configuration precedence is flags over RTOSS_*
// environment variables over built-in defaults; the resolved configuration is
// echoed into every JSON artifact.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtoss/rtoss.hpp"

namespace {

using nlohmann::ordered_json;

struct Config {
  std::string variant = "2EP";
  int dict_size = 0; // 0: per-variant default
  uint64_t trials = rtoss::kDefaultTrials;
  uint32_t seed = rtoss::kDefaultSeed;
  int threads = 1;
  std::string mask_sharing = "per_kernel";
  std::string adjacency = "connected_component";
  bool strict_paper = false;
  bool include_nonprunable = false;
  int height = 64;
  int width = 64;
  double tolerance = 0.0;
  std::string model;
  std::string pruned;
  std::string out;
  std::string dict;
  std::string report_path;
  std::string assignments_path;
  std::string groups_path;
  std::string input;
  std::string preset = "mixed";
};

int exit_code_for(const rtoss::Error& e) {
  return e.kind() == rtoss::ErrorKind::io_error ? 1 : 2;
}

int fail(const std::string& stage, const std::exception& e, int code) {
  std::cerr << "rtoss " << stage << ": " << e.what() << "\n";
  return code;
}

std::filesystem::path derive_path(const std::string& base, const char* suffix) {
  std::filesystem::path p(base);
  p.replace_extension();
  p += suffix;
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw rtoss::Error(rtoss::ErrorKind::io_error, "cannot open '" + path.string() + "'");
  out << text;
  if (!out) throw rtoss::Error(rtoss::ErrorKind::io_error, "write to '" + path.string() + "' failed");
}

rtoss::Variant variant_or_throw(const std::string& text) {
  auto variant = rtoss::parse_variant(text);
  if (!variant)
    throw rtoss::Error(rtoss::ErrorKind::invalid_argument, "unknown variant '" + text + "'");
  return *variant;
}

int run_patterns(Config cfg) {
  if (cfg.strict_paper) cfg.adjacency = "any_adjacent_pair";
  std::string stage = "patterns";
  try {
    auto variant = variant_or_throw(cfg.variant);
    auto adjacency = *rtoss::parse_adjacency(cfg.adjacency);
    int dict_size = cfg.dict_size > 0 ? cfg.dict_size : rtoss::default_dict_size(variant);

    auto candidates = rtoss::generate_candidates(rtoss::entry_count(variant));
    auto filtered = rtoss::filter_adjacent(candidates, adjacency);
    std::cout << "variant " << rtoss::to_string(variant) << ": " << candidates.size()
              << " candidates, " << filtered.size() << " after adjacency filter ("
              << rtoss::to_string(adjacency) << ")\n";

    auto dict = rtoss::calibrate_dictionary(variant, cfg.trials, cfg.seed, dict_size,
                                            adjacency, cfg.threads);
    if (dict.calibration.degenerate)
      std::cerr << "rtoss patterns: warning: 0 trials, dictionary is the first " << dict_size
                << " filtered candidates by id\n";

    std::cout << "calibrated " << dict.masks.size() << " masks over " << cfg.trials
              << " trials (seed " << cfg.seed << ")\n";
    std::size_t shown = std::min<std::size_t>(dict.masks.size(), 5);
    for (std::size_t i = 0; i < shown; ++i)
      std::cout << "  id " << dict.masks[i].id << "  " << rtoss::format_pattern(dict.masks[i])
                << "  wins " << dict.calibration.wins[i] << "\n";

    stage = "save";
    auto doc = rtoss::dictionary_to_json(dict);
    doc["config"] = {{"variant", rtoss::to_string(variant)},
                     {"dict_size", dict_size},
                     {"trials", cfg.trials},
                     {"seed", cfg.seed},
                     {"adjacency", rtoss::to_string(adjacency)},
                     {"strict_paper", cfg.strict_paper}};
    write_text(cfg.out, doc.dump(2) + "\n");
    std::cout << "wrote " << cfg.out << "\n";
    return 0;
  } catch (const rtoss::Error& e) {
    return fail(stage, e, exit_code_for(e));
  } catch (const std::exception& e) {
    return fail(stage, e, 1);
  }
}

int run_prune(Config cfg) {
  if (cfg.strict_paper) cfg.mask_sharing = "layer_shared";
  std::string stage = "load";
  try {
    auto bundle = rtoss::load_model(cfg.model);
    auto dict = rtoss::load_dictionary(cfg.dict);
    if (!cfg.variant.empty() && variant_or_throw(cfg.variant) != dict.variant)
      throw rtoss::Error(rtoss::ErrorKind::inconsistent_inputs,
                         "requested variant " + cfg.variant + " but dictionary holds " +
                             std::string(rtoss::to_string(dict.variant)));

    stage = "grouping";
    auto groups = rtoss::group_layers(bundle);

    stage = "pruning";
    rtoss::PruneOptions options;
    options.sharing = cfg.mask_sharing == "layer_shared" ? rtoss::MaskSharingMode::layer_shared
                                                         : rtoss::MaskSharingMode::per_kernel;
    auto result = rtoss::prune_model(bundle, groups, dict, options);
    for (const auto& warning : result.warnings)
      std::cerr << "rtoss pruning: warning: " << warning << "\n";

    stage = "report";
    auto report = rtoss::model_report(result, {cfg.height, cfg.width}, cfg.include_nonprunable);

    stage = "save";
    rtoss::save_model(result.bundle, cfg.out);
    auto assignments_path = cfg.assignments_path.empty()
                                ? derive_path(cfg.out, ".assignments.tsv")
                                : std::filesystem::path(cfg.assignments_path);
    write_text(assignments_path, rtoss::format_assignments(result));
    auto report_path = cfg.report_path.empty() ? derive_path(cfg.out, ".report.json")
                                               : std::filesystem::path(cfg.report_path);
    auto doc = rtoss::report_to_json(report);
    doc["config"] = {{"model", cfg.model},
                     {"dict", cfg.dict},
                     {"variant", rtoss::to_string(dict.variant)},
                     {"mask_sharing", cfg.mask_sharing},
                     {"include_nonprunable", cfg.include_nonprunable},
                     {"input_height", cfg.height},
                     {"input_width", cfg.width},
                     {"strict_paper", cfg.strict_paper}};
    write_text(report_path, doc.dump(2) + "\n");
    if (!cfg.groups_path.empty()) write_text(cfg.groups_path, rtoss::format_groups(groups));

    std::cout << rtoss::format_report_table(report);
    std::cout << "wrote " << cfg.out << ", " << assignments_path.string() << ", "
              << report_path.string() << "\n";
    return 0;
  } catch (const rtoss::Error& e) {
    return fail(stage, e, exit_code_for(e));
  } catch (const std::exception& e) {
    return fail(stage, e, 1);
  }
}

int run_report(Config cfg) {
  std::string stage = "load";
  try {
    auto bundle = rtoss::load_model(cfg.model);
    stage = "report";
    auto report = rtoss::report_for_bundle(bundle, {cfg.height, cfg.width});
    for (const auto& note : report.diagnostics) std::cerr << "rtoss report: " << note << "\n";
    std::cout << rtoss::format_report_table(report);
    if (!cfg.out.empty()) {
      stage = "save";
      auto doc = rtoss::report_to_json(report);
      doc["config"] = {{"model", cfg.model},
                       {"input_height", cfg.height},
                       {"input_width", cfg.width}};
      write_text(cfg.out, doc.dump(2) + "\n");
      std::cout << "wrote " << cfg.out << "\n";
    }
    return 0;
  } catch (const rtoss::Error& e) {
    return fail(stage, e, exit_code_for(e));
  } catch (const std::exception& e) {
    return fail(stage, e, 1);
  }
}

int run_verify(Config cfg) {
  std::string stage = "load";
  try {
    auto original = rtoss::load_model(cfg.model);
    auto pruned_bundle = rtoss::load_model(cfg.pruned);
    auto dict = rtoss::load_dictionary(cfg.dict);

    rtoss::PruneResult result;
    result.bundle = std::move(pruned_bundle);
    result.assignments = rtoss::load_assignments(cfg.assignments_path);
    result.dictionary = dict;

    rtoss::FeatureMap input;
    if (!cfg.input.empty()) {
      input = rtoss::load_feature_map(cfg.input);
    } else {
      if (original.layers.empty())
        throw rtoss::Error(rtoss::ErrorKind::inconsistent_inputs, "bundle has no layers");
      input = rtoss::make_feature_map(original.layers[0].in_channels, cfg.height, cfg.width);
      std::mt19937 rng(cfg.seed);
      for (auto& v : input.values)
        v = static_cast<float>(rng() * (2.0 / 4294967296.0) - 1.0);
    }

    stage = "verify";
    auto report = rtoss::verify_equivalence(original, result, input, cfg.tolerance);
    for (const auto& verdict : report.layers) {
      std::cout << "layer " << verdict.layer << ": ";
      if (!verdict.sparse_path_exercised) {
        std::cout << "dense only (no assignments)";
      } else {
        std::cout << (verdict.executors_bit_equal ? "executors bit-equal" : "EXECUTORS DIFFER")
                  << ", masks " << (verdict.mask_subset_ok ? "ok" : "VIOLATED");
      }
      std::cout << ", deviation vs original " << verdict.deviation_vs_original << "\n";
    }
    uint64_t total = report.trace.macs_performed + report.trace.macs_skipped;
    std::cout << "MACs: performed " << report.trace.macs_performed << ", skipped "
              << report.trace.macs_skipped << " of " << total << "\n";
    bool ok = report.executors_equal && report.masks_ok;
    std::cout << "verdict: " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 1;
  } catch (const rtoss::Error& e) {
    return fail(stage, e, exit_code_for(e));
  } catch (const std::exception& e) {
    return fail(stage, e, 1);
  }
}

// Demo/test bundle generator; not part of the pruning pipeline itself.
int run_synth(Config cfg) {
  std::string stage = "synth";
  try {
    std::mt19937 rng(cfg.seed);
    auto weight = [&rng]() {
      double u = rng() * (1.0 / 4294967296.0);
      float magnitude = static_cast<float>(0.25 + 1.25 * u);
      return (rng() & 1) ? magnitude : -magnitude;
    };
    auto add_layer = [&](rtoss::ModelBundle& bundle, const std::string& name, int out_ch,
                         int in_ch, int k, std::vector<std::string> parents) {
      rtoss::LayerDescriptor layer;
      layer.name = name;
      layer.out_channels = out_ch;
      layer.in_channels = in_ch;
      layer.kernel_h = layer.kernel_w = k;
      layer.parents = std::move(parents);
      rtoss::WeightTensor tensor;
      tensor.layer = name;
      tensor.out_channels = out_ch;
      tensor.in_channels = in_ch;
      tensor.kernel_h = tensor.kernel_w = k;
      tensor.values.resize(tensor.element_count());
      for (auto& v : tensor.values) v = weight();
      bundle.layers.push_back(std::move(layer));
      bundle.weights.push_back(std::move(tensor));
    };

    rtoss::ModelBundle bundle;
    if (cfg.preset == "conv3x3") {
      add_layer(bundle, "stem", 8, 3, 3, {});
      add_layer(bundle, "mid", 8, 8, 3, {"stem"});
      add_layer(bundle, "head", 4, 8, 3, {"mid"});
    } else if (cfg.preset == "pointwise") {
      add_layer(bundle, "stem", 6, 3, 3, {});
      add_layer(bundle, "proj", 6, 6, 1, {"stem"});
      add_layer(bundle, "head", 3, 6, 1, {"proj"});
    } else if (cfg.preset == "mixed") {
      add_layer(bundle, "stem", 6, 3, 3, {});
      add_layer(bundle, "block", 6, 6, 3, {"stem"});
      add_layer(bundle, "proj", 9, 6, 1, {"block"});
      add_layer(bundle, "spatial", 4, 9, 5, {"proj"});
      add_layer(bundle, "tiny", 2, 4, 1, {"spatial"});
    } else {
      throw rtoss::Error(rtoss::ErrorKind::invalid_argument,
                         "unknown preset '" + cfg.preset + "'");
    }
    stage = "save";
    rtoss::save_model(bundle, cfg.out);
    std::cout << "wrote " << cfg.out << " (" << bundle.layers.size() << " layers, preset "
              << cfg.preset << ", seed " << cfg.seed << ")\n";
    return 0;
  } catch (const rtoss::Error& e) {
    return fail(stage, e, exit_code_for(e));
  } catch (const std::exception& e) {
    return fail(stage, e, 1);
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"R-TOSS semi-structured pruning toolkit"};
  app.require_subcommand(1);

  Config cfg;
  const std::vector<std::string> variants{"2EP", "3EP", "4EP", "5EP"};
  const std::vector<std::string> sharings{"per_kernel", "layer_shared"};
  const std::vector<std::string> adjacencies{"connected_component", "any_adjacent_pair"};

  cfg.out = "dictionary.json"; // patterns default; prune/report/synth set their own
  auto* patterns = app.add_subcommand("patterns", "generate and calibrate a pattern dictionary");
  patterns->add_option("--variant", cfg.variant, "entry-pattern variant")
      ->check(CLI::IsMember(variants, CLI::ignore_case))
      ->envname("RTOSS_VARIANT");
  patterns->add_option("--out", cfg.out, "dictionary output path")->capture_default_str();
  patterns->add_option("--dict-size", cfg.dict_size, "masks to keep (0 = variant default)")
      ->envname("RTOSS_DICT_SIZE");
  patterns->add_option("--trials", cfg.trials, "calibration trials")
      ->envname("RTOSS_TRIALS")
      ->capture_default_str();
  patterns->add_option("--seed", cfg.seed, "calibration seed")
      ->envname("RTOSS_SEED")
      ->capture_default_str();
  patterns->add_option("--adjacency", cfg.adjacency, "adjacency criterion")
      ->check(CLI::IsMember(adjacencies))
      ->envname("RTOSS_ADJACENCY");
  patterns->add_option("--threads", cfg.threads, "calibration worker threads")
      ->envname("RTOSS_THREADS");
  patterns->add_flag("--strict-paper", cfg.strict_paper,
                     "use the literal readings (any_adjacent_pair filtering)");

  auto* prune = app.add_subcommand("prune", "prune a bundle with a calibrated dictionary");
  prune->add_option("--model", cfg.model, "input bundle")->required();
  prune->add_option("--dict", cfg.dict, "calibrated dictionary")->required();
  prune->add_option("--out", cfg.out, "pruned bundle output")->required();
  std::string prune_variant;
  prune->add_option("--variant", prune_variant, "expected dictionary variant (checked)")
      ->check(CLI::IsMember(variants, CLI::ignore_case));
  prune->add_option("--report", cfg.report_path, "report JSON path (default: <out>.report.json)");
  prune->add_option("--assignments", cfg.assignments_path,
                    "assignment export path (default: <out>.assignments.tsv)");
  prune->add_option("--groups", cfg.groups_path, "layer-group export path (optional)");
  prune->add_option("--mask-sharing", cfg.mask_sharing, "mask sharing mode")
      ->check(CLI::IsMember(sharings))
      ->envname("RTOSS_MASK_SHARING");
  prune->add_option("--height", cfg.height, "input height for MAC estimates")
      ->envname("RTOSS_HEIGHT");
  prune->add_option("--width", cfg.width, "input width for MAC estimates")
      ->envname("RTOSS_WIDTH");
  prune->add_flag("--include-nonprunable", cfg.include_nonprunable,
                  "fold non-prunable layers into the reduction ratio");
  prune->add_flag("--strict-paper", cfg.strict_paper,
                  "use the literal readings (layer_shared masks)");

  auto* report = app.add_subcommand("report", "sparsity and MAC report for any bundle");
  report->add_option("--model", cfg.model, "bundle to analyze")->required();
  report->add_option("--out", cfg.out, "report JSON path (optional)");
  report->add_option("--height", cfg.height, "input height for MAC estimates")
      ->envname("RTOSS_HEIGHT");
  report->add_option("--width", cfg.width, "input width for MAC estimates")
      ->envname("RTOSS_WIDTH");

  auto* verify = app.add_subcommand("verify", "check dense vs pattern-sparse executor equality");
  verify->add_option("--model", cfg.model, "original bundle")->required();
  verify->add_option("--pruned", cfg.pruned, "pruned bundle")->required();
  verify->add_option("--dict", cfg.dict, "dictionary used for pruning")->required();
  verify->add_option("--assignments", cfg.assignments_path, "assignment export from prune")
      ->required();
  verify->add_option("--input", cfg.input, "input feature map (default: seeded random)");
  verify->add_option("--seed", cfg.seed, "seed for the default input")
      ->envname("RTOSS_SEED");
  verify->add_option("--height", cfg.height, "default input height")->envname("RTOSS_HEIGHT");
  verify->add_option("--width", cfg.width, "default input width")->envname("RTOSS_WIDTH");
  verify->add_option("--tolerance", cfg.tolerance,
                     "max abs executor difference (0 = bit-exact)");

  auto* synth = app.add_subcommand("synth", "write a synthetic demo bundle");
  synth->add_option("--out", cfg.out, "bundle output path")->required();
  synth->add_option("--preset", cfg.preset, "conv3x3 | pointwise | mixed")
      ->check(CLI::IsMember({"conv3x3", "pointwise", "mixed"}));
  synth->add_option("--seed", cfg.seed, "weight seed")->envname("RTOSS_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (patterns->parsed()) return run_patterns(cfg);
  if (prune->parsed()) {
    cfg.variant = prune_variant;
    return run_prune(cfg);
  }
  if (report->parsed()) {
    cfg.out = report->count("--out") ? cfg.out : "";
    return run_report(cfg);
  }
  if (verify->parsed()) return run_verify(cfg);
  if (synth->parsed()) return run_synth(cfg);
  return 2;
}
