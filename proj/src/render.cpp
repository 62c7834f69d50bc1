#include "melo/render.hpp"

#include <algorithm>
#include <sstream>

namespace melo {

std::string render_svg(const Score& score, const IdSet* melody_ids, const NoteProbs* probs,
                       const RenderOptions& options) {
  int min_pitch = 127, max_pitch = 0;
  double end = 0.0;
  for (const Note& n : score.notes) {
    min_pitch = std::min(min_pitch, n.pitch);
    max_pitch = std::max(max_pitch, n.pitch);
    end = std::max(end, n.end());
  }
  if (score.empty()) {
    min_pitch = 60;
    max_pitch = 60;
    end = 1.0;
  }
  min_pitch = std::max(0, min_pitch - 2);
  max_pitch = std::min(127, max_pitch + 2);

  const double width = end * options.beat_width;
  const double height = (max_pitch - min_pitch + 1) * options.row_height;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"" << options.background << "\"/>\n";
  for (const Note& n : score.notes) {
    bool is_melody = melody_ids && melody_ids->count(n.id);
    double x = n.onset * options.beat_width;
    double w = n.duration * options.beat_width;
    double y = (max_pitch - n.pitch) * options.row_height;
    double opacity = 1.0;
    if (probs) {
      auto it = probs->find(n.id);
      opacity = it == probs->end() ? 0.15 : std::clamp(it->second, 0.05, 1.0);
    }
    svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
        << options.row_height << "\" fill=\""
        << (is_melody ? options.melody_color : options.accompaniment_color)
        << "\" fill-opacity=\"" << opacity << "\" data-note-id=\"" << n.id << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace melo
