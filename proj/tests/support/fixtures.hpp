#pragma once

// Shared test fixtures: hand-assembled MIDI byte sequences, random score
// generators, and the synthetic top-voice corpus.

#include <cstdint>
#include <random>
#include <vector>

#include "melo/types.hpp"

namespace melo::testing {

// --- raw SMF assembly, independent of the production writer ---

inline void smf_u16(std::vector<std::uint8_t>& v, unsigned x) {
  v.push_back(std::uint8_t(x >> 8));
  v.push_back(std::uint8_t(x & 0xff));
}

inline void smf_u32(std::vector<std::uint8_t>& v, unsigned long x) {
  for (int i = 3; i >= 0; --i) v.push_back(std::uint8_t((x >> (8 * i)) & 0xff));
}

inline void smf_varlen(std::vector<std::uint8_t>& v, unsigned long x) {
  std::uint8_t buf[5];
  int n = 0;
  do {
    buf[n++] = std::uint8_t(x & 0x7f);
    x >>= 7;
  } while (x > 0);
  for (int i = n - 1; i >= 0; --i) v.push_back(std::uint8_t(buf[i] | (i > 0 ? 0x80 : 0)));
}

struct SmfEvent {
  unsigned long delta;
  std::vector<std::uint8_t> bytes;
};

inline std::vector<std::uint8_t> smf_track(const std::vector<SmfEvent>& events) {
  std::vector<std::uint8_t> data;
  for (const SmfEvent& e : events) {
    smf_varlen(data, e.delta);
    data.insert(data.end(), e.bytes.begin(), e.bytes.end());
  }
  smf_varlen(data, 0);
  data.insert(data.end(), {0xff, 0x2f, 0x00});
  return data;
}

inline std::vector<std::uint8_t> smf_file(unsigned format, unsigned division,
                                          const std::vector<std::vector<SmfEvent>>& tracks) {
  std::vector<std::uint8_t> v;
  v.insert(v.end(), {'M', 'T', 'h', 'd'});
  smf_u32(v, 6);
  smf_u16(v, format);
  smf_u16(v, unsigned(tracks.size()));
  smf_u16(v, division);
  for (const auto& t : tracks) {
    std::vector<std::uint8_t> data = smf_track(t);
    v.insert(v.end(), {'M', 'T', 'r', 'k'});
    smf_u32(v, data.size());
    v.insert(v.end(), data.begin(), data.end());
  }
  return v;
}

// Single note: pitch 60 at tick 0, one beat long, division 480.
inline std::vector<std::uint8_t> one_note_fixture() {
  return smf_file(0, 480, {{{0, {0x90, 60, 64}}, {480, {0x80, 60, 0}}}});
}

// Two tracks: track 0 holds pitches 72 and 76 (a melody), track 1 holds 48.
inline std::vector<std::uint8_t> two_track_fixture() {
  return smf_file(1, 480,
                  {{{0, {0x90, 72, 64}}, {480, {0x80, 72, 0}}, {0, {0x90, 76, 64}},
                    {480, {0x80, 76, 0}}},
                   {{0, {0x90, 48, 64}}, {960, {0x80, 48, 0}}}});
}

// --- random scores on a 1/8-beat grid (exact in binary floating point) ---

inline Score random_score(std::mt19937_64& rng, int max_notes = 40, int max_eighths = 128) {
  std::uniform_int_distribution<int> count(1, max_notes);
  std::uniform_int_distribution<int> pitch(21, 108);
  std::uniform_int_distribution<int> onset(0, max_eighths - 2);
  std::uniform_int_distribution<int> dur(1, 16);

  int n = count(rng);
  std::vector<Note> notes;
  for (int i = 0; i < n; ++i) {
    Note note;
    note.pitch = pitch(rng);
    note.onset = onset(rng) / 8.0;
    note.duration = dur(rng) / 8.0;
    notes.push_back(note);
  }
  std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.pitch < b.pitch;
  });

  Score score;
  score.ticks_per_beat = 480;
  IdSet melody;
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t i = 0; i < notes.size(); ++i) {
    notes[i].id = NoteId(i);
    score.notes.push_back(notes[i]);
    if (coin(rng)) melody.insert(NoteId(i));
  }
  score.melody_ids = melody;
  return score;
}

// Random note probabilities, quantized to 1/64 so ties actually occur.
inline NoteProbs random_probs(const Score& score, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 64);
  NoteProbs probs;
  for (const Note& n : score.notes) probs[n.id] = level(rng) / 64.0;
  return probs;
}

// --- synthetic top-voice corpus ---
//
// Melody: one quarter note per beat, random walk over pitches 102..105.
// Accompaniment: a fixed eighth-note texture alternating pitches 72 and 77.
// The melody is always the top voice, stays above the accompaniment even
// when transposed down two octaves, and both lines sit inside each other's
// receptive field.
inline Score synthetic_piece(std::mt19937_64& rng, int beats = 4) {
  std::uniform_int_distribution<int> walk(102, 105);
  std::vector<Note> notes;
  IdSet melody;
  for (int b = 0; b < beats; ++b) {
    Note m;
    m.pitch = walk(rng);
    m.onset = double(b);
    m.duration = 1.0;
    notes.push_back(m);
    for (int half = 0; half < 2; ++half) {
      Note a;
      a.pitch = half == 0 ? 72 : 77;
      a.onset = double(b) + 0.5 * half;
      a.duration = 0.5;
      notes.push_back(a);
    }
  }
  std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.pitch < b.pitch;
  });
  Score score;
  score.ticks_per_beat = 480;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    notes[i].id = NoteId(i);
    if (notes[i].pitch >= 100) melody.insert(NoteId(i));
    score.notes.push_back(notes[i]);
  }
  score.melody_ids = melody;
  return score;
}

}  // namespace melo::testing
