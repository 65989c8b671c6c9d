#pragma once

// 3x3 keep-masks ("k-entry patterns"). A mask marks the kernel positions that
// survive pruning. Candidates are enumerated in ascending row-major bitmask
// order and filtered so the kept cells stay spatially clustered.

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "rtoss/error.hpp"

namespace rtoss {

struct PatternMask {
  // Row-major bit encoding: cell (r, c) -> bit (r * 3 + c).
  uint16_t bits = 0;
  int entry_count = 0;
  // Position within the variant's full candidate enumeration; stable across
  // filtering and calibration.
  int id = -1;

  bool keeps(int r, int c) const { return (bits >> (r * 3 + c)) & 1u; }
  bool keeps_cell(int cell) const { return (bits >> cell) & 1u; }

  friend bool operator==(const PatternMask&, const PatternMask&) = default;
};

enum class AdjacencyMode {
  connected_component, // kept cells form one 8-connected component (default)
  any_adjacent_pair,   // at least one 8-adjacent kept pair
};

inline uint16_t pattern_as_bits(const PatternMask& mask) { return mask.bits; }

inline PatternMask pattern_from_bits(uint16_t bits) {
  return {static_cast<uint16_t>(bits & 0x1ff), std::popcount(static_cast<uint16_t>(bits & 0x1ff)), -1};
}

namespace detail {

// 8-neighborhood of each cell of the 3x3 grid, as bitmasks.
inline constexpr std::array<uint16_t, 9> kNeighbors = [] {
  std::array<uint16_t, 9> table{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      uint16_t mask = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nr = r + dr, nc = c + dc;
          if (nr >= 0 && nr < 3 && nc >= 0 && nc < 3) mask |= uint16_t(1u << (nr * 3 + nc));
        }
      table[r * 3 + c] = mask;
    }
  return table;
}();

inline bool is_connected(uint16_t bits) {
  if (bits == 0) return false;
  uint16_t reached = uint16_t(bits & uint16_t(-bits)); // lowest set cell
  for (;;) {
    uint16_t frontier = 0;
    for (int cell = 0; cell < 9; ++cell)
      if (reached & (1u << cell)) frontier |= kNeighbors[cell];
    uint16_t grown = uint16_t(reached | (frontier & bits));
    if (grown == reached) break;
    reached = grown;
  }
  return reached == bits;
}

inline bool has_adjacent_pair(uint16_t bits) {
  if (std::popcount(bits) == 1) return true; // single cell, nothing to separate
  for (int cell = 0; cell < 9; ++cell)
    if ((bits & (1u << cell)) && (bits & kNeighbors[cell])) return true;
  return false;
}

} // namespace detail

// All C(9, k) masks with k kept cells, ascending bitmask order, ids 0..C-1.
inline std::vector<PatternMask> generate_candidates(int entry_count) {
  if (entry_count < 1 || entry_count > 8)
    throw Error(ErrorKind::invalid_entry_count,
                "entry count must be in 1..8, got " + std::to_string(entry_count));
  std::vector<PatternMask> masks;
  int next_id = 0;
  for (uint16_t bits = 0; bits < 512; ++bits)
    if (std::popcount(bits) == entry_count) masks.push_back({bits, entry_count, next_id++});
  return masks;
}

inline bool passes_adjacency(const PatternMask& mask, AdjacencyMode mode) {
  return mode == AdjacencyMode::connected_component ? detail::is_connected(mask.bits)
                                                    : detail::has_adjacent_pair(mask.bits);
}

inline std::vector<PatternMask> filter_adjacent(
    const std::vector<PatternMask>& candidates,
    AdjacencyMode mode = AdjacencyMode::connected_component) {
  std::vector<PatternMask> kept;
  for (const auto& mask : candidates)
    if (passes_adjacency(mask, mode)) kept.push_back(mask);
  return kept;
}

// Single-line rendering, rows separated by '/': "XX./.../...".
inline std::string format_pattern(const PatternMask& mask) {
  std::string out;
  for (int r = 0; r < 3; ++r) {
    if (r) out += '/';
    for (int c = 0; c < 3; ++c) out += mask.keeps(r, c) ? 'X' : '.';
  }
  return out;
}

} // namespace rtoss
