#include "melo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "melo/evaluation.hpp"

namespace melo {

IdSet skyline(const Score& score) {
  IdSet melody;
  std::set<double> onsets;
  for (const Note& n : score.notes) onsets.insert(n.onset);
  for (double t : onsets) {
    const Note* top = nullptr;
    for (const Note& n : score.notes) {
      if (n.onset <= t && t < n.end()) {
        if (!top || n.pitch > top->pitch || (n.pitch == top->pitch && n.id < top->id))
          top = &n;
      }
    }
    if (top) melody.insert(top->id);
  }
  return melody;
}

std::vector<Segment> segment(const Score& score) {
  std::set<double> bounds{0.0};
  for (const Note& n : score.notes) {
    bounds.insert(n.onset);
    bounds.insert(n.end());
  }
  std::vector<double> b(bounds.begin(), bounds.end());

  std::vector<Segment> segments;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    Segment s;
    s.start = b[i];
    s.end = b[i + 1];
    for (const Note& n : score.notes)
      if (n.onset <= s.start && n.end() >= s.end) s.sounding.push_back(n.id);
    std::sort(s.sounding.begin(), s.sounding.end(), [&](NoteId x, NoteId y) {
      const Note* a = score.find(x);
      const Note* c = score.find(y);
      return std::tie(c->pitch, y) < std::tie(a->pitch, x);  // pitch descending
    });
    segments.push_back(std::move(s));
  }
  return segments;
}

namespace {

constexpr double kNoHistory = 1e9;  // slots without a predecessor lose to any real interval

double slot_cost(const std::optional<int>& last_pitch, int pitch) {
  if (!last_pitch) return kNoHistory;
  return std::abs(*last_pitch - pitch);
}

// Minimum-total-cost injection of entering notes into free slots. Entering
// notes are ordered by pitch descending, slots ascending, so ties resolve
// toward keeping higher notes in higher slots.
void assign_exhaustive(const std::vector<int>& pitches,
                       const std::vector<std::optional<int>>& slot_last,
                       const std::vector<int>& free_slots, std::vector<int>& result) {
  std::vector<int> slots = free_slots;
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::sort(slots.begin(), slots.end());
  // Iterate permutations of the slot choice for the first k = pitches.size()
  // positions by permuting the whole slot vector and reading a prefix.
  std::vector<int> perm = slots;
  std::set<std::vector<int>> seen;
  do {
    std::vector<int> prefix(perm.begin(), perm.begin() + pitches.size());
    if (!seen.insert(prefix).second) continue;
    double cost = 0.0;
    for (std::size_t i = 0; i < pitches.size(); ++i)
      cost += slot_cost(slot_last[prefix[i]], pitches[i]);
    if (cost < best_cost) {
      best_cost = cost;
      best = prefix;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  result = best;
}

void assign_greedy(const std::vector<int>& pitches,
                   const std::vector<std::optional<int>>& slot_last,
                   const std::vector<int>& free_slots, std::vector<int>& result) {
  std::vector<bool> note_done(pitches.size(), false);
  std::vector<bool> slot_done(slot_last.size(), false);
  result.assign(pitches.size(), -1);
  for (std::size_t step = 0; step < pitches.size(); ++step) {
    double best = std::numeric_limits<double>::infinity();
    int bn = -1, bs = -1;
    for (std::size_t i = 0; i < pitches.size(); ++i) {
      if (note_done[i]) continue;
      for (int s : free_slots) {
        if (slot_done[s]) continue;
        double c = slot_cost(slot_last[s], pitches[i]);
        if (c < best) {
          best = c;
          bn = int(i);
          bs = s;
        }
      }
    }
    note_done[bn] = true;
    slot_done[bs] = true;
    result[bn] = bs;
  }
}

}  // namespace

std::vector<Voice> vosa_voices(const Score& score, const VosaConfig& config) {
  std::vector<Segment> segments = segment(score);
  std::size_t voice_count = 0;
  for (const Segment& s : segments) voice_count = std::max(voice_count, s.sounding.size());
  if (voice_count == 0) return {};

  std::vector<Voice> voices(voice_count);
  for (std::size_t v = 0; v < voice_count; ++v) voices[v].index = int(v);

  std::vector<std::optional<int>> slot_last(voice_count);  // pitch of last note per slot
  std::map<NoteId, int> note_slot;

  for (const Segment& seg : segments) {
    std::vector<NoteId> entering;
    std::vector<bool> slot_busy(voice_count, false);
    for (NoteId id : seg.sounding) {
      auto it = note_slot.find(id);
      if (it != note_slot.end())
        slot_busy[it->second] = true;  // sustained notes keep their slot
      else
        entering.push_back(id);
    }
    if (entering.empty()) continue;

    std::vector<int> free_slots;
    for (std::size_t s = 0; s < voice_count; ++s)
      if (!slot_busy[s]) free_slots.push_back(int(s));

    // seg.sounding is pitch-descending, so entering is too.
    std::vector<int> pitches;
    for (NoteId id : entering) pitches.push_back(score.find(id)->pitch);

    std::vector<int> chosen;
    if (int(free_slots.size()) <= config.exhaustive_limit)
      assign_exhaustive(pitches, slot_last, free_slots, chosen);
    else
      assign_greedy(pitches, slot_last, free_slots, chosen);

    for (std::size_t i = 0; i < entering.size(); ++i) {
      int slot = chosen[i];
      note_slot[entering[i]] = slot;
      slot_last[slot] = pitches[i];
      voices[slot].notes.push_back(entering[i]);
    }
  }

  for (Voice& v : voices) {
    std::sort(v.notes.begin(), v.notes.end(), [&](NoteId x, NoteId y) {
      const Note* a = score.find(x);
      const Note* c = score.find(y);
      return std::tie(a->onset, x) < std::tie(c->onset, y);
    });
  }
  return voices;
}

IdSet vosa_best_voice(const std::vector<Voice>& voices, const IdSet& truth_ids) {
  IdSet best;
  double best_f = -1.0;
  for (const Voice& v : voices) {
    IdSet ids(v.notes.begin(), v.notes.end());
    double f = f_measure(ids, truth_ids).f;
    if (f > best_f) {
      best_f = f;
      best = ids;
    }
  }
  return best;
}

}  // namespace melo
