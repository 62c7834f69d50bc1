#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "melo/pianoroll.hpp"
#include "melo/pipeline.hpp"

namespace melo {

struct Rect {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;
};

struct RectSampler {
  std::uint64_t seed = 0;
  int min_size = 4;
  int max_size = 32;
  int rects_per_iteration = 5;
};

/// Copy of the grid with the rectangles zeroed; the original is untouched.
Eigen::MatrixXd occlude(const Eigen::MatrixXd& grid, std::span<const Rect> rects);

/// Mean prediction change over a note's pixels: positive means the
/// occlusion lowered the note's melody probability.
double note_difference(const Eigen::MatrixXd& p, const Eigen::MatrixXd& p_occluded,
                       const NoteSpan& note);

/// Same difference over an arbitrary rectangle.
double rect_difference(const Eigen::MatrixXd& p, const Eigen::MatrixXd& p_occluded,
                       const Rect& rect);

struct SaliencyMap {
  Eigen::MatrixXd accum;       // summed differences per pixel
  Eigen::MatrixXi zero_count;  // times each pixel was occluded
  Eigen::MatrixXd map;         // accum / zero_count, 0 where never occluded
  NoteId target = -1;
  int iterations_used = 0;  // iterations that did not touch the target
};

/// Occlusion saliency for one note: per iteration, a fixed number of random
/// rectangles is zeroed jointly, the prediction difference at the target is
/// measured, and the difference is credited to every pixel of the notes hit
/// by a rectangle. Iterations that occlude the target are skipped entirely.
SaliencyMap saliency_map(const RollPredictor& model, const PianoRoll& roll, NoteId target,
                         int iterations, const RectSampler& sampler);

/// Sparse JSON export: {"target", "iterations_used", "rows", "cols",
/// "entries": [{row, col, value, count}, ...]}.
std::string saliency_json(const SaliencyMap& map);

}  // namespace melo
