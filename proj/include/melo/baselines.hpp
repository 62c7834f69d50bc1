#pragma once

#include <vector>

#include "melo/types.hpp"

namespace melo {

/// Skyline heuristic: at every onset instant the highest sounding note is
/// taken as melody (equal-pitch ties go to the lowest id).
IdSet skyline(const Score& score);

/// Maximal time span over which the set of sounding notes is constant.
/// Segments tile [0, piece end) without overlap; gaps have empty sets.
struct Segment {
  double start = 0.0;
  double end = 0.0;
  std::vector<NoteId> sounding;  // sorted by pitch descending, then id
};

std::vector<Segment> segment(const Score& score);

/// One voice of the contig-style separation: slot index plus its notes in
/// onset order. Voice 0 is the top slot.
struct Voice {
  int index = 0;
  std::vector<NoteId> notes;
};

struct VosaConfig {
  // Entering-note/slot assignments are solved exhaustively up to this many
  // candidates, greedily above it.
  int exhaustive_limit = 6;
};

/// Voice separation after the contig approach: the maximum number of
/// simultaneously sounding notes fixes the voice count; notes are connected
/// across segment boundaries by minimum total absolute pitch interval;
/// sustained notes keep their slot.
std::vector<Voice> vosa_voices(const Score& score, const VosaConfig& config = {});

/// Oracle selection: the voice with the highest F-measure against the truth
/// (ties to the lowest voice index).
IdSet vosa_best_voice(const std::vector<Voice>& voices, const IdSet& truth_ids);

}  // namespace melo
