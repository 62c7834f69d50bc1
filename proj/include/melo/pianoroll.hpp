#pragma once

#include <Eigen/Core>
#include <map>
#include <ostream>
#include <unordered_map>
#include <utility>
#include <vector>

#include "melo/types.hpp"

namespace melo {

inline constexpr int kPixelsPerBeat = 8;
inline constexpr int kNumPitches = 128;
inline constexpr int kWindowCols = 64;
inline constexpr int kWindowStride = 32;  // 50% overlap

/// Pixel footprint of one note: a single pitch row and a half-open column span.
struct NoteSpan {
  NoteId id;
  int row;
  int col_begin;
  int col_end;  // exclusive, always > col_begin
};

/// Binary pitch x time grid at 8 pixels/beat plus the pixel -> note mapping.
struct PianoRoll {
  Eigen::MatrixXd grid;  // kNumPitches x T, entries 0 or 1
  std::vector<NoteSpan> spans;
  int resolution = kPixelsPerBeat;

  int cols() const { return int(grid.cols()); }

  const NoteSpan* span_of(NoteId id) const {
    auto it = span_index_.find(id);
    return it == span_index_.end() ? nullptr : &spans[it->second];
  }

  /// Ids of all notes covering the pixel (row, col).
  std::vector<NoteId> ids_at(int row, int col) const;

  /// Ids of all notes with at least one pixel in the rectangle
  /// [row0, row0+rows) x [col0, col0+cols).
  std::vector<NoteId> ids_in_rect(int row0, int col0, int rows, int cols) const;

  void rebuild_index();

private:
  std::unordered_map<NoteId, std::size_t> span_index_;
  std::vector<std::vector<std::size_t>> row_spans_;  // per pitch row
};

struct Window {
  Eigen::MatrixXd data;  // kNumPitches x kWindowCols
  int start_col = 0;
};

/// Per-pixel melody probabilities, same shape as the source roll.
struct ProbabilityRoll {
  Eigen::MatrixXd grid;
};

/// Rasterizes a score at 8 pixels/beat. Column spans are round-half-up of
/// onset*8 and end*8; zero-width notes are widened to one column.
PianoRoll quantize(const Score& score);

/// Cuts overlapping 64-column windows at stride 32; trailing windows are
/// zero-padded.
std::vector<Window> cut_windows(const PianoRoll& roll);

/// Averages window predictions back into a full-length probability roll.
ProbabilityRoll stitch(const std::vector<std::pair<int, Eigen::MatrixXd>>& predictions,
                       int total_cols);

/// Zeroes probabilities wherever the input roll is empty.
ProbabilityRoll mask(const ProbabilityRoll& prob, const PianoRoll& roll);

/// Median of each note's masked pixel values (lower median for even counts).
NoteProbs note_probabilities(const ProbabilityRoll& prob, const PianoRoll& roll);

/// Grayscale PGM dump, one byte per pixel, value = round(p * 255).
void write_pgm(const Eigen::MatrixXd& grid, std::ostream& out);

}  // namespace melo
