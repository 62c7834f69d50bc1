#include "melo/melody_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

namespace melo {

Threshold cluster_threshold(const std::vector<double>& probs) {
  if (probs.empty()) throw ArgumentError("cluster_threshold: empty probability set");

  std::vector<double> sorted = probs;
  std::sort(sorted.begin(), sorted.end());

  Threshold t;
  double best_gap = 0.0;
  std::size_t cut = 0;  // low cluster = sorted[0..cut], 0 means no cut found
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    double gap = sorted[i + 1] - sorted[i];
    if (gap > best_gap) {
      best_gap = gap;
      cut = i + 1;
    }
  }

  if (cut == 0) {
    // Degenerate: a single value or all values equal. Retain everything.
    t.value = -1.0;
    t.high_cluster = sorted;
    return t;
  }
  t.low_cluster.assign(sorted.begin(), sorted.begin() + cut);
  t.high_cluster.assign(sorted.begin() + cut, sorted.end());
  t.value = t.low_cluster.back();
  return t;
}

IdSet retain(const NoteProbs& note_probs, const Threshold& t) {
  IdSet ids;
  for (const auto& [id, p] : note_probs)
    if (p > t.value) ids.insert(id);
  return ids;
}

MeloDigraph build_melograph(const std::vector<Note>& retained, const NoteProbs& probs) {
  std::vector<Note> notes = retained;
  std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
    return std::tie(a.onset, a.pitch, a.id) < std::tie(b.onset, b.pitch, b.id);
  });

  MeloDigraph g;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  g.nodes.push_back({-1, -1, 0.0, 0.0, 0.0});  // alpha: end time 0
  for (const Note& n : notes) {
    auto it = probs.find(n.id);
    if (it == probs.end())
      throw ArgumentError("missing probability for note " + std::to_string(n.id));
    g.nodes.push_back({n.id, n.pitch, n.onset, n.end(), it->second});
  }
  g.nodes.push_back({-2, -1, kInf, kInf, -0.5});  // omega
  g.alpha = 0;
  g.omega = int(g.nodes.size()) - 1;

  for (int u = 0; u < g.omega; ++u) {
    double from_end = g.nodes[u].end;
    // Successor candidates: retained notes with onset >= end(u), restricted
    // to the minimum such onset; omega only when no note qualifies.
    double min_onset = kInf;
    for (int v = 1; v < g.omega; ++v)
      if (g.nodes[v].onset >= from_end) min_onset = std::min(min_onset, g.nodes[v].onset);
    if (std::isinf(min_onset)) {
      g.edges.push_back({u, g.omega, -g.nodes[g.omega].prob});
      continue;
    }
    for (int v = 1; v < g.omega; ++v)
      if (g.nodes[v].onset == min_onset && g.nodes[v].onset >= from_end)
        g.edges.push_back({u, v, -g.nodes[v].prob});
  }
  return g;
}

namespace {

// Path comparison for equal-weight ties: walk both predecessor chains from
// alpha and prefer the higher pitch at the first divergent node.
std::vector<int> path_to(const std::vector<int>& pred, int v) {
  std::vector<int> path;
  for (int x = v; x != -1; x = pred[x]) path.push_back(x);
  std::reverse(path.begin(), path.end());
  return path;
}

bool path_preferred(const MeloDigraph& g, const std::vector<int>& a,
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

}  // namespace

std::vector<NoteId> shortest_path_melody(const MeloDigraph& g) {
  const int n = int(g.nodes.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<int> pred(n, -1);
  dist[g.alpha] = 0.0;

  // Bellman-Ford. The graph is acyclic so n-1 passes settle the distances;
  // tie-break refinements converge within the same bound. One extra pass
  // asserts convergence.
  bool changed = true;
  for (int pass = 0; pass < 2 * n + 1 && changed; ++pass) {
    changed = false;
    for (const auto& e : g.edges) {
      if (std::isinf(dist[e.from])) continue;
      double cand = dist[e.from] + e.weight;
      if (cand < dist[e.to]) {
        dist[e.to] = cand;
        pred[e.to] = e.from;
        changed = true;
      } else if (cand == dist[e.to] && pred[e.to] != e.from) {
        std::vector<int> challenger = path_to(pred, e.from);
        challenger.push_back(e.to);
        std::vector<int> incumbent = path_to(pred, e.to);
        if (path_preferred(g, challenger, incumbent)) {
          pred[e.to] = e.from;
          changed = true;
        }
      }
    }
  }
  if (changed) throw std::logic_error("Bellman-Ford failed to converge");
  if (std::isinf(dist[g.omega]))
    throw std::logic_error("omega unreachable from alpha");  // cannot happen by construction

  std::vector<int> path = path_to(pred, g.omega);
  std::vector<NoteId> melody;
  for (int v : path)
    if (v != g.alpha && v != g.omega) melody.push_back(g.nodes[v].id);
  return melody;
}

std::vector<NoteId> extract_melody(const Score& score, const NoteProbs& note_probs,
                                   MelodyMode mode) {
  std::vector<double> values;
  for (const Note& n : score.notes) {
    auto it = note_probs.find(n.id);
    if (it == note_probs.end())
      throw ArgumentError("missing probability for note " + std::to_string(n.id));
    values.push_back(it->second);
  }
  if (values.empty()) return {};

  Threshold t = cluster_threshold(values);
  IdSet kept = retain(note_probs, t);
  if (mode == MelodyMode::cnn) return std::vector<NoteId>(kept.begin(), kept.end());

  std::vector<Note> retained_notes;
  for (const Note& n : score.notes)
    if (kept.count(n.id)) retained_notes.push_back(n);
  MeloDigraph g = build_melograph(retained_notes, note_probs);
  return shortest_path_melody(g);
}

std::string to_dot(const MeloDigraph& g) {
  std::ostringstream out;
  out << "digraph melodigraph {\n  rankdir=LR;\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    out << "  n" << i << " [label=\"";
    if (int(i) == g.alpha)
      out << "alpha";
    else if (int(i) == g.omega)
      out << "omega\\np=-0.5";
    else
      out << "note " << n.id << "\\np=" << n.prob;
    out << "\"];\n";
  }
  for (const auto& e : g.edges)
    out << "  n" << e.from << " -> n" << e.to << " [label=\"" << e.weight << "\"];\n";
  out << "}\n";
  return out.str();
}

}  // namespace melo
