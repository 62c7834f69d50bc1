#include "melo/saliency.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <json.hpp>

namespace melo {

namespace {

void check_rect(const Eigen::MatrixXd& grid, const Rect& r) {
  if (r.rows <= 0 || r.cols <= 0) throw ArgumentError("occlusion rectangle is empty");
  if (r.row0 < 0 || r.col0 < 0 || r.row0 + r.rows > grid.rows() ||
      r.col0 + r.cols > grid.cols())
    throw ArgumentError("occlusion rectangle out of bounds");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t n) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (n + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Eigen::MatrixXd occlude(const Eigen::MatrixXd& grid, std::span<const Rect> rects) {
  for (const Rect& r : rects) check_rect(grid, r);
  Eigen::MatrixXd out = grid;
  for (const Rect& r : rects) out.block(r.row0, r.col0, r.rows, r.cols).setZero();
  return out;
}

double rect_difference(const Eigen::MatrixXd& p, const Eigen::MatrixXd& p_occluded,
                       const Rect& rect) {
  if (p.rows() != p_occluded.rows() || p.cols() != p_occluded.cols())
    throw ArgumentError("note_difference: shape mismatch");
  check_rect(p, rect);
  auto a = p.block(rect.row0, rect.col0, rect.rows, rect.cols);
  auto b = p_occluded.block(rect.row0, rect.col0, rect.rows, rect.cols);
  return (a - b).sum() / double(rect.rows * rect.cols);
}

double note_difference(const Eigen::MatrixXd& p, const Eigen::MatrixXd& p_occluded,
                       const NoteSpan& note) {
  return rect_difference(p, p_occluded,
                         Rect{note.row, note.col_begin, 1, note.col_end - note.col_begin});
}

SaliencyMap saliency_map(const RollPredictor& model, const PianoRoll& roll, NoteId target,
                         int iterations, const RectSampler& sampler) {
  if (iterations <= 0) throw ArgumentError("saliency_map: iterations must be positive");
  const NoteSpan* span = roll.span_of(target);
  if (!span) throw ArgumentError("saliency_map: target note not in roll");

  const int rows = int(roll.grid.rows());
  const int cols = int(roll.grid.cols());

  SaliencyMap sm;
  sm.target = target;
  sm.accum = Eigen::MatrixXd::Zero(rows, cols);
  sm.zero_count = Eigen::MatrixXi::Zero(rows, cols);

  const Eigen::MatrixXd baseline = model(roll.grid);

  std::vector<Rect> rects(std::size_t(sampler.rects_per_iteration));
  for (int iter = 0; iter < iterations; ++iter) {
    std::mt19937_64 rng(mix_seed(sampler.seed, std::uint64_t(iter)));
    bool hits_target = false;
    for (Rect& r : rects) {
      std::uniform_int_distribution<int> size_dist(sampler.min_size, sampler.max_size);
      r.rows = std::min(size_dist(rng), rows);
      r.cols = std::min(size_dist(rng), cols);
      r.row0 = std::uniform_int_distribution<int>(0, rows - r.rows)(rng);
      r.col0 = std::uniform_int_distribution<int>(0, cols - r.cols)(rng);
      bool row_hit = span->row >= r.row0 && span->row < r.row0 + r.rows;
      bool col_hit = span->col_begin < r.col0 + r.cols && span->col_end > r.col0;
      if (row_hit && col_hit) hits_target = true;
    }
    if (hits_target) continue;  // the target's own pixels must stay intact

    Eigen::MatrixXd occluded = occlude(roll.grid, rects);
    Eigen::MatrixXd prediction = model(occluded);
    double d = note_difference(baseline, prediction, *span);

    std::set<NoteId> inside;
    for (const Rect& r : rects)
      for (NoteId id : roll.ids_in_rect(r.row0, r.col0, r.rows, r.cols)) inside.insert(id);
    for (NoteId id : inside) {
      const NoteSpan* s = roll.span_of(id);
      sm.accum.row(s->row).segment(s->col_begin, s->col_end - s->col_begin).array() += d;
    }

    // Count occluded pixels once per iteration even when rectangles overlap.
    for (const Rect& r : rects) {
      for (int rr = r.row0; rr < r.row0 + r.rows; ++rr) {
        for (int cc = r.col0; cc < r.col0 + r.cols; ++cc) {
          bool counted = false;
          for (const Rect& q : rects) {
            if (&q == &r) break;
            if (rr >= q.row0 && rr < q.row0 + q.rows && cc >= q.col0 && cc < q.col0 + q.cols) {
              counted = true;
              break;
            }
          }
          if (!counted) sm.zero_count(rr, cc) += 1;
        }
      }
    }
    ++sm.iterations_used;
  }

  sm.map = Eigen::MatrixXd::Zero(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      if (sm.zero_count(r, c) > 0) sm.map(r, c) = sm.accum(r, c) / double(sm.zero_count(r, c));
  return sm;
}

std::string saliency_json(const SaliencyMap& sm) {
  nlohmann::ordered_json j;
  j["target"] = sm.target;
  j["iterations_used"] = sm.iterations_used;
  j["rows"] = sm.map.rows();
  j["cols"] = sm.map.cols();
  j["entries"] = nlohmann::ordered_json::array();
  for (int c = 0; c < sm.map.cols(); ++c) {
    for (int r = 0; r < sm.map.rows(); ++r) {
      if (sm.zero_count(r, c) == 0 && sm.map(r, c) == 0.0) continue;
      j["entries"].push_back(
          {{"row", r}, {"col", c}, {"value", sm.map(r, c)}, {"count", sm.zero_count(r, c)}});
    }
  }
  std::string text = j.dump(2);
  text.push_back('\n');
  return text;
}

}  // namespace melo
