#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "melo/errors.hpp"

namespace melo {

using NoteId = std::int64_t;
using IdSet = std::set<NoteId>;
using NoteProbs = std::map<NoteId, double>;

/// A pitched event. Onset and duration are in beats (quarter notes).
struct Note {
  NoteId id = 0;
  int pitch = 0;        // MIDI pitch, 0..127
  double onset = 0.0;   // beats, >= 0
  double duration = 0.0;  // beats, > 0

  double end() const { return onset + duration; }
};

struct Score {
  std::vector<Note> notes;  // sorted by (onset, pitch)
  int ticks_per_beat = 480;
  std::optional<IdSet> melody_ids;  // ground-truth annotation, subset of note ids

  bool empty() const { return notes.empty(); }

  IdSet note_ids() const {
    IdSet ids;
    for (const Note& n : notes) ids.insert(n.id);
    return ids;
  }

  const Note* find(NoteId id) const {
    for (const Note& n : notes)
      if (n.id == id) return &n;
    return nullptr;
  }

  double end_beats() const {
    double e = 0.0;
    for (const Note& n : notes) e = std::max(e, n.end());
    return e;
  }
};

/// Checks the Score invariants, throwing ArgumentError on violation.
void validate(const Score& score);

}  // namespace melo
