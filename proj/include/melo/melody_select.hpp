#pragma once

#include <string>
#include <vector>

#include "melo/types.hpp"

namespace melo {

/// Piece-wise melody/accompaniment split of the note probability values.
/// With fewer than two distinct values the threshold is set below every
/// probability (sentinel -1) so that all notes are retained.
struct Threshold {
  double value = -1.0;
  std::vector<double> low_cluster;   // sorted ascending
  std::vector<double> high_cluster;  // sorted ascending
};

/// Single-linkage clustering of the probability values cut at two clusters;
/// the threshold is the largest value of the lower cluster. For scalar data
/// this equals splitting the sorted values at the largest adjacent gap
/// (ties broken toward the earliest gap).
Threshold cluster_threshold(const std::vector<double>& probs);

/// Ids whose probability lies strictly above the threshold ("cnn" output).
IdSet retain(const NoteProbs& note_probs, const Threshold& t);

/// DAG over retained notes. Node 0 is the start (alpha, end time 0), node
/// count-1 the end (omega, onset +inf, probability -0.5). Every edge weight
/// is the negated probability of its target node.
struct MeloDigraph {
  struct Node {
    NoteId id = -1;
    int pitch = -1;
    double onset = 0.0;
    double end = 0.0;
    double prob = 0.0;
  };
  struct Edge {
    int from;
    int to;
    double weight;
  };

  std::vector<Node> nodes;
  std::vector<Edge> edges;
  int alpha = 0;
  int omega = 0;
};

/// Builds the melo-digraph: each node connects to the retained notes that
/// start no earlier than its end time and share the minimum such onset;
/// omega qualifies when no retained note does.
MeloDigraph build_melograph(const std::vector<Note>& retained, const NoteProbs& probs);

/// Minimum-weight alpha->omega path via Bellman-Ford; returns the interior
/// note ids in path order ("cnn mono" output). Equal-weight paths are
/// resolved toward the higher pitch at the first divergent node.
std::vector<NoteId> shortest_path_melody(const MeloDigraph& g);

enum class MelodyMode { cnn, cnn_mono };

/// Full selection stage: threshold + retain, optionally followed by the
/// graph search. For cnn the ids come back in id order; for cnn_mono in
/// path order.
std::vector<NoteId> extract_melody(const Score& score, const NoteProbs& note_probs,
                                   MelodyMode mode);

/// Graphviz dump for debugging.
std::string to_dot(const MeloDigraph& g);

}  // namespace melo
