#include "melo/pianoroll.hpp"

#include <algorithm>
#include <cmath>

namespace melo {

std::vector<NoteId> PianoRoll::ids_at(int row, int col) const {
  std::vector<NoteId> ids;
  if (row < 0 || row >= int(row_spans_.size())) return ids;
  for (std::size_t idx : row_spans_[row]) {
    const NoteSpan& s = spans[idx];
    if (col >= s.col_begin && col < s.col_end) ids.push_back(s.id);
  }
  return ids;
}

std::vector<NoteId> PianoRoll::ids_in_rect(int row0, int col0, int rows, int cols) const {
  std::vector<NoteId> ids;
  for (int r = std::max(0, row0); r < std::min(int(row_spans_.size()), row0 + rows); ++r) {
    for (std::size_t idx : row_spans_[r]) {
      const NoteSpan& s = spans[idx];
      if (s.col_begin < col0 + cols && s.col_end > col0) ids.push_back(s.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void PianoRoll::rebuild_index() {
  span_index_.clear();
  row_spans_.assign(kNumPitches, {});
  for (std::size_t i = 0; i < spans.size(); ++i) {
    span_index_[spans[i].id] = i;
    row_spans_[spans[i].row].push_back(i);
  }
}

PianoRoll quantize(const Score& score) {
  if (score.empty()) throw ArgumentError("cannot quantize an empty score");
  validate(score);

  PianoRoll roll;
  std::int64_t total = 1;
  for (const Note& n : score.notes) {
    std::int64_t c0 = std::llround(n.onset * kPixelsPerBeat);
    std::int64_t c1 = std::llround(n.end() * kPixelsPerBeat);
    if (c1 <= c0) c1 = c0 + 1;
    roll.spans.push_back({n.id, n.pitch, int(c0), int(c1)});
    total = std::max(total, c1);
    total = std::max(total, std::int64_t(std::ceil(n.end() * kPixelsPerBeat)));
  }

  roll.grid = Eigen::MatrixXd::Zero(kNumPitches, total);
  for (const NoteSpan& s : roll.spans)
    roll.grid.row(s.row).segment(s.col_begin, s.col_end - s.col_begin).setOnes();
  roll.rebuild_index();
  return roll;
}

std::vector<Window> cut_windows(const PianoRoll& roll) {
  std::vector<Window> windows;
  int total = roll.cols();
  for (int start = 0; start < total; start += kWindowStride) {
    Window w;
    w.start_col = start;
    w.data = Eigen::MatrixXd::Zero(kNumPitches, kWindowCols);
    int n = std::min(kWindowCols, total - start);
    w.data.leftCols(n) = roll.grid.middleCols(start, n);
    windows.push_back(std::move(w));
  }
  return windows;
}

ProbabilityRoll stitch(const std::vector<std::pair<int, Eigen::MatrixXd>>& predictions,
                       int total_cols) {
  ProbabilityRoll out;
  out.grid = Eigen::MatrixXd::Zero(kNumPitches, total_cols);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(total_cols);
  for (const auto& [start, pred] : predictions) {
    if (pred.rows() != kNumPitches || pred.cols() != kWindowCols)
      throw ArgumentError("window prediction has wrong shape");
    if (start < 0 || start >= total_cols)
      throw ArgumentError("window start column out of range");
    int n = std::min(kWindowCols, total_cols - start);
    out.grid.middleCols(start, n) += pred.leftCols(n);
    counts.segment(start, n).array() += 1.0;
  }
  for (int c = 0; c < total_cols; ++c)
    if (counts(c) > 0.0) out.grid.col(c) /= counts(c);
  return out;
}

ProbabilityRoll mask(const ProbabilityRoll& prob, const PianoRoll& roll) {
  if (prob.grid.rows() != roll.grid.rows() || prob.grid.cols() != roll.grid.cols())
    throw ArgumentError("probability roll shape does not match piano roll");
  ProbabilityRoll out;
  out.grid = prob.grid.cwiseProduct(roll.grid);
  return out;
}

NoteProbs note_probabilities(const ProbabilityRoll& prob, const PianoRoll& roll) {
  ProbabilityRoll masked = mask(prob, roll);
  NoteProbs probs;
  std::vector<double> values;
  for (const NoteSpan& s : roll.spans) {
    values.clear();
    for (int c = s.col_begin; c < s.col_end; ++c) values.push_back(masked.grid(s.row, c));
    if (values.empty()) throw std::logic_error("note with zero pixels");
    std::size_t k = (values.size() - 1) / 2;  // lower median
    std::nth_element(values.begin(), values.begin() + k, values.end());
    probs[s.id] = values[k];
  }
  return probs;
}

void write_pgm(const Eigen::MatrixXd& grid, std::ostream& out) {
  out << "P5\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  // Row 0 of the roll is the lowest pitch; render it at the bottom.
  for (int r = int(grid.rows()) - 1; r >= 0; --r) {
    for (int c = 0; c < grid.cols(); ++c) {
      double v = std::clamp(grid(r, c), 0.0, 1.0);
      out.put(char(std::uint8_t(std::llround(v * 255.0))));
    }
  }
}

}  // namespace melo
