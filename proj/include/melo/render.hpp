#pragma once

#include <string>

#include "melo/types.hpp"

namespace melo {

struct RenderOptions {
  double beat_width = 16.0;  // SVG units per beat
  double row_height = 4.0;
  std::string background = "#ffffff";
  std::string accompaniment_color = "#4878a8";
  std::string melody_color = "#d03030";
};

/// Static piano-roll image. Melody notes are highlighted; when note
/// probabilities are given, bar opacity follows the probability.
std::string render_svg(const Score& score, const IdSet* melody_ids, const NoteProbs* probs,
                       const RenderOptions& options = {});

}  // namespace melo
