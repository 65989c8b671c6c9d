#pragma once

// Calibrated pattern dictionaries. Candidates that survive the adjacency
// filter compete over random kernels: per trial, the mask retaining the most
// L2 energy wins. The dictionary keeps the most-winning masks, ranked by
// descending wins then ascending id, so identical (variant, trials, seed,
// size) inputs always produce an identical dictionary.
//
// Each trial draws its kernel from an independently seeded generator keyed by
// the trial index, so the result is also independent of the thread count.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rtoss/error.hpp"
#include "rtoss/pattern.hpp"

namespace rtoss {

enum class Variant { ep2, ep3, ep4, ep5 };

inline int entry_count(Variant variant) {
  switch (variant) {
  case Variant::ep2: return 2;
  case Variant::ep3: return 3;
  case Variant::ep4: return 4;
  case Variant::ep5: return 5;
  }
  return 0;
}

inline std::string_view to_string(Variant variant) {
  switch (variant) {
  case Variant::ep2: return "2EP";
  case Variant::ep3: return "3EP";
  case Variant::ep4: return "4EP";
  case Variant::ep5: return "5EP";
  }
  return "?EP";
}

inline std::optional<Variant> parse_variant(std::string_view text) {
  std::string upper(text);
  for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (upper == "2EP") return Variant::ep2;
  if (upper == "3EP") return Variant::ep3;
  if (upper == "4EP") return Variant::ep4;
  if (upper == "5EP") return Variant::ep5;
  return std::nullopt;
}

inline std::string_view to_string(AdjacencyMode mode) {
  return mode == AdjacencyMode::connected_component ? "connected_component"
                                                    : "any_adjacent_pair";
}

inline std::optional<AdjacencyMode> parse_adjacency(std::string_view text) {
  if (text == "connected_component") return AdjacencyMode::connected_component;
  if (text == "any_adjacent_pair") return AdjacencyMode::any_adjacent_pair;
  return std::nullopt;
}

struct CalibrationRecord {
  uint64_t trials = 0;
  uint32_t seed = 0;
  AdjacencyMode adjacency = AdjacencyMode::connected_component;
  bool degenerate = false;      // trials == 0: rank forced by ascending id
  std::vector<uint64_t> wins;   // parallel to PatternDictionary::masks
};

struct PatternDictionary {
  Variant variant = Variant::ep2;
  std::vector<PatternMask> masks; // ranked: wins desc, id asc
  CalibrationRecord calibration;

  const PatternMask* find(int id) const {
    for (const auto& mask : masks)
      if (mask.id == id) return &mask;
    return nullptr;
  }
};

// Default per-variant dictionary sizes; the four shipped dictionaries total
// 21 patterns.
inline int default_dict_size(Variant variant) {
  switch (variant) {
  case Variant::ep2: return 6;
  case Variant::ep3: return 6;
  case Variant::ep4: return 5;
  case Variant::ep5: return 4;
  }
  return 0;
}

constexpr uint64_t kDefaultTrials = 10000;
constexpr uint32_t kDefaultSeed = 42;

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint32_t trial_seed(uint32_t seed, uint64_t trial) {
  return static_cast<uint32_t>(splitmix64(splitmix64(seed) ^ trial));
}

// Uniform in [-1, 1); derived from raw mt19937 output so the stream is
// identical on every platform.
inline std::array<float, 9> random_kernel(uint32_t seed, uint64_t trial) {
  std::mt19937 gen(trial_seed(seed, trial));
  std::array<float, 9> kernel{};
  for (auto& value : kernel)
    value = static_cast<float>(static_cast<double>(gen()) * (2.0 / 4294967296.0) - 1.0);
  return kernel;
}

inline int winning_mask(const std::array<float, 9>& kernel,
                        const std::vector<PatternMask>& candidates) {
  int best_index = 0;
  double best_energy = -1.0;
  for (std::size_t m = 0; m < candidates.size(); ++m) {
    double energy = 0.0;
    for (int cell = 0; cell < 9; ++cell)
      if (candidates[m].keeps_cell(cell))
        energy += static_cast<double>(kernel[cell]) * kernel[cell];
    if (energy > best_energy) { // candidates are id-ascending: first max wins
      best_energy = energy;
      best_index = static_cast<int>(m);
    }
  }
  return best_index;
}

} // namespace detail

inline PatternDictionary calibrate_dictionary(
    Variant variant, uint64_t trials, uint32_t seed, int dict_size,
    AdjacencyMode adjacency = AdjacencyMode::connected_component, int threads = 1) {
  auto candidates = filter_adjacent(generate_candidates(entry_count(variant)), adjacency);
  if (dict_size < 1)
    throw Error(ErrorKind::invalid_argument, "dictionary size must be positive");
  if (static_cast<std::size_t>(dict_size) > candidates.size())
    throw Error(ErrorKind::dict_size_too_large,
                std::to_string(dict_size) + " masks requested but only " +
                    std::to_string(candidates.size()) + " filtered candidates exist");

  std::vector<uint64_t> wins(candidates.size(), 0);
  if (trials > 0) {
    int worker_count = std::max(1, threads);
    if (static_cast<uint64_t>(worker_count) > trials)
      worker_count = static_cast<int>(trials);
    std::vector<std::vector<uint64_t>> partial(worker_count,
                                               std::vector<uint64_t>(candidates.size(), 0));
    auto run = [&](int worker) {
      for (uint64_t t = worker; t < trials; t += static_cast<uint64_t>(worker_count))
        partial[worker][detail::winning_mask(detail::random_kernel(seed, t), candidates)]++;
    };
    if (worker_count == 1) {
      run(0);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(worker_count);
      for (int w = 0; w < worker_count; ++w) pool.emplace_back(run, w);
      for (auto& th : pool) th.join();
    }
    for (const auto& p : partial)
      for (std::size_t m = 0; m < wins.size(); ++m) wins[m] += p[m];
  }

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (wins[a] != wins[b]) return wins[a] > wins[b];
    return candidates[a].id < candidates[b].id;
  });

  PatternDictionary dict;
  dict.variant = variant;
  dict.calibration.trials = trials;
  dict.calibration.seed = seed;
  dict.calibration.adjacency = adjacency;
  dict.calibration.degenerate = trials == 0;
  for (int rank = 0; rank < dict_size; ++rank) {
    dict.masks.push_back(candidates[order[rank]]);
    dict.calibration.wins.push_back(wins[order[rank]]);
  }
  return dict;
}

inline nlohmann::ordered_json dictionary_to_json(const PatternDictionary& dict) {
  nlohmann::ordered_json doc;
  doc["format"] = "rtoss-dictionary/1";
  doc["variant"] = to_string(dict.variant);
  doc["calibration"] = {
      {"trials", dict.calibration.trials},
      {"seed", dict.calibration.seed},
      {"adjacency", to_string(dict.calibration.adjacency)},
      {"degenerate", dict.calibration.degenerate},
  };
  auto masks = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < dict.masks.size(); ++m) {
    masks.push_back({{"id", dict.masks[m].id},
                     {"bits", dict.masks[m].bits},
                     {"wins", m < dict.calibration.wins.size() ? dict.calibration.wins[m] : 0},
                     {"cells", format_pattern(dict.masks[m])}});
  }
  doc["masks"] = std::move(masks);
  return doc;
}

inline void save_dictionary(const PatternDictionary& dict, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot open '" + path.string() + "' for writing");
  out << dictionary_to_json(dict).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io_error, "write to '" + path.string() + "' failed");
}

inline PatternDictionary load_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open '" + path.string() + "'");
  nlohmann::ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::manifest_parse, e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "rtoss-dictionary/1")
      throw Error(ErrorKind::manifest_parse, "unknown dictionary format");
    PatternDictionary dict;
    auto variant = parse_variant(doc.at("variant").get<std::string>());
    if (!variant) throw Error(ErrorKind::manifest_parse, "unknown variant");
    dict.variant = *variant;
    const auto& cal = doc.at("calibration");
    dict.calibration.trials = cal.at("trials").get<uint64_t>();
    dict.calibration.seed = cal.at("seed").get<uint32_t>();
    auto adjacency = parse_adjacency(cal.at("adjacency").get<std::string>());
    if (!adjacency) throw Error(ErrorKind::manifest_parse, "unknown adjacency mode");
    dict.calibration.adjacency = *adjacency;
    dict.calibration.degenerate = cal.at("degenerate").get<bool>();
    for (const auto& entry : doc.at("masks")) {
      PatternMask mask = pattern_from_bits(entry.at("bits").get<uint16_t>());
      mask.id = entry.at("id").get<int>();
      if (mask.entry_count != entry_count(dict.variant))
        throw Error(ErrorKind::manifest_parse,
                    "mask entry count does not match variant " +
                        std::string(to_string(dict.variant)));
      if (!passes_adjacency(mask, dict.calibration.adjacency))
        throw Error(ErrorKind::manifest_parse,
                    "mask " + format_pattern(mask) + " fails the adjacency criterion");
      for (const auto& existing : dict.masks)
        if (existing.id == mask.id || existing.bits == mask.bits)
          throw Error(ErrorKind::manifest_parse, "duplicate mask in dictionary");
      dict.masks.push_back(mask);
      dict.calibration.wins.push_back(entry.at("wins").get<uint64_t>());
    }
    if (dict.masks.empty()) throw Error(ErrorKind::empty_dictionary, path.string());
    return dict;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::manifest_parse, e.what());
  }
}

} // namespace rtoss
