#pragma once

// Partitions the prunable layers of a bundle into parent-child groups by
// depth-first traversal of the parent-edge graph. Every group is rooted at a
// layer with no prunable ancestor; every other prunable layer joins the group
// of the first already-grouped layer that reaches it. Non-prunable layers are
// transparent hops: an edge through them connects the nearest prunable
// ancestor and descendant.
//
// Traversal order is fixed (manifest order for roots, manifest order of
// children for descent), so the partition is deterministic.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtoss/error.hpp"
#include "rtoss/model.hpp"

namespace rtoss {

struct LayerGroup {
  std::string parent;
  std::vector<std::string> children; // DFS visit order, never contains parent
};

struct LayerGroupSet {
  std::vector<LayerGroup> groups;

  const LayerGroup* find(std::string_view layer) const {
    auto it = member_index_.find(std::string(layer));
    return it == member_index_.end() ? nullptr : &groups[it->second];
  }

  std::size_t member_count() const { return member_index_.size(); }

  void rebuild_index() {
    member_index_.clear();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      member_index_.emplace(groups[g].parent, g);
      for (const auto& child : groups[g].children) member_index_.emplace(child, g);
    }
  }

private:
  std::unordered_map<std::string, std::size_t> member_index_;
};

namespace detail {

// Nearest prunable ancestors of each layer, reached through chains of
// non-prunable layers. Declaration order preserved, duplicates dropped.
inline std::vector<std::vector<int>> effective_parents(const ModelBundle& bundle) {
  const std::size_t n = bundle.layers.size();
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(bundle.layers[i].name, static_cast<int>(i));

  std::vector<std::vector<int>> memo(n);
  std::vector<bool> done(n, false);
  std::vector<bool> in_progress(n, false);

  // Post-order over parent edges so each memo entry is final when used.
  auto resolve = [&](int start, auto&& self) -> const std::vector<int>& {
    if (done[start]) return memo[start];
    if (in_progress[start])
      throw Error(ErrorKind::cycle_detected,
                  "cycle through layer '" + bundle.layers[start].name + "'");
    in_progress[start] = true;
    std::vector<int> result;
    std::vector<bool> local_seen(n, false);
    for (const auto& pname : bundle.layers[start].parents) {
      auto it = index.find(pname);
      if (it == index.end()) throw Error(ErrorKind::dangling_parent, pname);
      int p = it->second;
      if (is_prunable(bundle.layers[p])) {
        if (!local_seen[p]) { local_seen[p] = true; result.push_back(p); }
      } else {
        for (int anc : self(p, self)) {
          if (!local_seen[anc]) { local_seen[anc] = true; result.push_back(anc); }
        }
      }
    }
    memo[start] = std::move(result);
    done[start] = true;
    in_progress[start] = false;
    return memo[start];
  };
  for (std::size_t i = 0; i < n; ++i) resolve(static_cast<int>(i), resolve);
  return memo;
}

} // namespace detail

inline LayerGroupSet group_layers(const ModelBundle& bundle) {
  const std::size_t n = bundle.layers.size();
  auto parents = detail::effective_parents(bundle);

  // Children of each prunable layer, in manifest order of the children.
  std::vector<std::vector<int>> children(n);
  std::vector<bool> prunable(n, false);
  for (std::size_t i = 0; i < n; ++i) prunable[i] = is_prunable(bundle.layers[i]);
  for (std::size_t i = 0; i < n; ++i) {
    if (!prunable[i]) continue;
    for (int p : parents[i]) children[p].push_back(static_cast<int>(i));
  }

  LayerGroupSet set;
  std::vector<bool> visited(n, false);
  for (std::size_t root = 0; root < n; ++root) {
    if (!prunable[root] || visited[root] || !parents[root].empty()) continue;
    visited[root] = true;
    LayerGroup group;
    group.parent = bundle.layers[root].name;
    // Pre-order DFS; the stack is seeded in reverse so children pop in order.
    std::vector<int> stack(children[root].rbegin(), children[root].rend());
    while (!stack.empty()) {
      int node = stack.back();
      stack.pop_back();
      if (visited[node]) continue;
      visited[node] = true;
      group.children.push_back(bundle.layers[node].name);
      for (auto it = children[node].rbegin(); it != children[node].rend(); ++it)
        stack.push_back(*it);
    }
    set.groups.push_back(std::move(group));
  }

  for (std::size_t i = 0; i < n; ++i)
    if (prunable[i] && !visited[i])
      throw Error(ErrorKind::cycle_detected,
                  "layer '" + bundle.layers[i].name + "' is unreachable from any root");

  set.rebuild_index();
  return set;
}

inline const LayerGroup& group_members(const LayerGroupSet& set, std::string_view layer) {
  const LayerGroup* group = set.find(layer);
  if (!group)
    throw Error(ErrorKind::unknown_layer,
                "layer '" + std::string(layer) + "' is not in any group");
  return *group;
}

// Tab-separated inspection export: one row per layer with its group id.
inline std::string format_groups(const LayerGroupSet& set) {
  std::string out = "# rtoss-groups v1\nlayer\tgroup_id\trole\n";
  for (std::size_t g = 0; g < set.groups.size(); ++g) {
    out += set.groups[g].parent + "\t" + std::to_string(g) + "\tparent\n";
    for (const auto& child : set.groups[g].children)
      out += child + "\t" + std::to_string(g) + "\tchild\n";
  }
  return out;
}

} // namespace rtoss
