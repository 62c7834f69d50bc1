#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "melo/convnet.hpp"
#include "melo/pianoroll.hpp"

namespace melo {

/// Maps a binary piano-roll grid to a masked probability grid of the same
/// shape. The saliency module and tests inject stubs through this type.
using RollPredictor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Window pipeline: cut overlapping windows, run the network in eval mode,
/// average the overlaps back together, mask by the input.
template <typename S>
Eigen::MatrixXd predict_grid(const ModelParams<S>& params, const Eigen::MatrixXd& grid) {
  std::vector<std::pair<int, Eigen::MatrixXd>> preds;
  for (int start = 0; start < int(grid.cols()); start += kWindowStride) {
    Mat<S> in = Mat<S>::Zero(kNumPitches, kWindowCols);
    int n = std::min(kWindowCols, int(grid.cols()) - start);
    in.leftCols(n) = grid.middleCols(start, n).template cast<S>();
    Mat<S> y = forward_eval(params, in);
    preds.emplace_back(start, y.template cast<double>());
  }
  ProbabilityRoll stitched = stitch(preds, int(grid.cols()));
  return stitched.grid.cwiseProduct(grid);
}

template <typename S>
ProbabilityRoll predict_roll(const ModelParams<S>& params, const PianoRoll& roll) {
  return ProbabilityRoll{predict_grid(params, roll.grid)};
}

template <typename S>
NoteProbs predict_note_probs(const ModelParams<S>& params, const PianoRoll& roll) {
  return note_probabilities(predict_roll(params, roll), roll);
}

template <typename S>
RollPredictor make_predictor(ModelParams<S> params) {
  return [params = std::move(params)](const Eigen::MatrixXd& grid) {
    return predict_grid(params, grid);
  };
}

}  // namespace melo
