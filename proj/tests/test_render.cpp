#include <doctest.h>

#include "melo/render.hpp"

using namespace melo;

TEST_CASE("render_svg draws one bar per note") {
  Score s;
  s.notes = {Note{0, 60, 0.0, 1.0}};
  std::string svg = render_svg(s, nullptr, nullptr);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("data-note-id=\"0\"") != std::string::npos);
  // one background rect plus one note rect
  std::size_t rects = 0;
  for (std::size_t pos = 0; (pos = svg.find("<rect", pos)) != std::string::npos; ++pos) ++rects;
  CHECK(rects == 2);
}

TEST_CASE("render_svg highlights melody notes") {
  Score s;
  s.notes = {Note{0, 60, 0.0, 1.0}, Note{1, 72, 0.0, 1.0}};
  IdSet melody{1};
  RenderOptions opt;
  std::string svg = render_svg(s, &melody, nullptr, opt);
  CHECK(svg.find(opt.melody_color) != std::string::npos);
  CHECK(svg.find(opt.accompaniment_color) != std::string::npos);
}

TEST_CASE("render_svg shades by probability") {
  Score s;
  s.notes = {Note{0, 60, 0.0, 1.0}, Note{1, 72, 0.0, 1.0}};
  NoteProbs probs{{0, 0.5}, {1, 0.5}};
  std::string svg = render_svg(s, nullptr, &probs);
  CHECK(svg.find("fill-opacity=\"0.5\"") != std::string::npos);
}
