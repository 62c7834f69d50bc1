#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "melo/types.hpp"

namespace melo {

struct ParseOptions {
  std::optional<int> melody_track;  // track whose notes become melody_ids
  bool drop_percussion = false;     // skip channel 10 (index 9)
};

/// Parses a Standard MIDI File (type 0 or 1) into a Score.
///
/// All tracks are merged into one note set; onsets and durations are
/// converted from ticks to beats. Overlapping note-ons of the same pitch
/// and channel close the earlier note (last-on-wins). Note ids are assigned
/// 0..n-1 in (onset, pitch) order.
Score parse_midi(std::span<const std::uint8_t> bytes, const ParseOptions& options = {});

Score parse_midi_file(const std::string& path, const ParseOptions& options = {});

enum class OutputFormat { midi, json };

/// Serializes a score with a predicted melody.
///
/// midi: type-1 file, track 0 = predicted melody, track 1 = remaining notes.
/// json: array of note records {id, pitch, onset_beats, duration_beats,
/// is_melody, probability?}; probabilities are included when given.
std::vector<std::uint8_t> write_outputs(const Score& score, const IdSet& predicted_ids,
                                        OutputFormat format,
                                        const NoteProbs* probabilities = nullptr);

/// Reads a ground-truth melody id list from JSON: either a plain array of
/// ids or an object with a "melody_ids" array.
IdSet read_melody_ids_json(const std::string& text);

void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace melo
