#pragma once

// Independent reference implementations used only by tests. Each one checks
// a production code path by a deliberately different route.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "melo/melody_select.hpp"

namespace melo::testing {

// Brute-force single-linkage agglomeration over scalars: every value starts
// as its own cluster; the closest pair of clusters merges until two remain.
// Ties merge the rightmost pair so equal gaps cut at the earliest one.
// Returns the threshold (max of the cluster containing the minimum) or
// nothing when fewer than two distinct values exist.
inline std::optional<double> agglomerative_threshold(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  if (values.size() < 2 || values.front() == values.back()) return std::nullopt;

  std::vector<std::vector<double>> clusters;
  for (double v : values) clusters.push_back({v});

  while (clusters.size() > 2) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i + 1 < clusters.size(); ++i) {
      // Single-linkage distance between clusters of sorted scalars: the gap
      // between the facing extremes. Non-adjacent pairs can never be closer.
      double d = clusters[i + 1].front() - clusters[i].back();
      if (d < best || (d == best && i > best_i)) {
        best = d;
        best_i = i;
      }
    }
    clusters[best_i].insert(clusters[best_i].end(), clusters[best_i + 1].begin(),
                            clusters[best_i + 1].end());
    clusters.erase(clusters.begin() + best_i + 1);
  }
  return clusters.front().back();
}

// Exhaustive enumeration of all alpha->omega paths with the same tie-break
// as the production search: minimal weight, then higher pitch at the first
// divergent node.
struct EnumeratedPath {
  double weight = 0.0;
  std::vector<int> nodes;  // includes alpha and omega
};

inline bool enum_path_preferred(const MeloDigraph& g, const std::vector<int>& a,
                                const std::vector<int>& b) {
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] == b[i]) continue;
    const auto& na = g.nodes[a[i]];
    const auto& nb = g.nodes[b[i]];
    if (na.pitch != nb.pitch) return na.pitch > nb.pitch;
    if (na.onset != nb.onset) return na.onset < nb.onset;
    return na.id < nb.id;
  }
  return a.size() < b.size();
}

inline std::optional<EnumeratedPath> enumerate_best_path(const MeloDigraph& g) {
  std::vector<std::vector<std::pair<int, double>>> adj(g.nodes.size());
  for (const auto& e : g.edges) adj[e.from].push_back({e.to, e.weight});

  std::optional<EnumeratedPath> best;
  std::vector<int> stack{g.alpha};

  auto dfs = [&](auto&& self, int u, double w) -> void {
    if (u == g.omega) {
      if (!best || w < best->weight ||
          (w == best->weight && enum_path_preferred(g, stack, best->nodes))) {
        best = EnumeratedPath{w, stack};
      }
      return;
    }
    for (const auto& [v, ew] : adj[u]) {
      stack.push_back(v);
      self(self, v, w + ew);
      stack.pop_back();
    }
  };
  dfs(dfs, g.alpha, 0.0);
  return best;
}

// Minimum assignment cost of entering pitches onto free slots, by plain
// recursion over every injection.
inline double min_assignment_cost(const std::vector<int>& pitches,
                                  const std::vector<double>& slot_costs_flat,
                                  std::size_t slot_count) {
  // slot_costs_flat[i * slot_count + s] = cost of putting pitch i on slot s
  std::vector<bool> used(slot_count, false);
  double best = std::numeric_limits<double>::infinity();
  auto rec = [&](auto&& self, std::size_t i, double acc) -> void {
    if (acc >= best) return;
    if (i == pitches.size()) {
      best = acc;
      return;
    }
    for (std::size_t s = 0; s < slot_count; ++s) {
      if (used[s]) continue;
      used[s] = true;
      self(self, i + 1, acc + slot_costs_flat[i * slot_count + s]);
      used[s] = false;
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

}  // namespace melo::testing
