#include <doctest.h>

#include <random>
#include <sstream>

#include "melo/pianoroll.hpp"
#include "support/fixtures.hpp"

using namespace melo;
namespace fx = melo::testing;

namespace {

Score make_score(std::vector<Note> notes) {
  Score s;
  for (std::size_t i = 0; i < notes.size(); ++i) notes[i].id = NoteId(i);
  s.notes = std::move(notes);
  return s;
}

// Window starts by direct enumeration: 0, 32, 64, ... while start < T.
std::vector<int> expected_starts(int total) {
  std::vector<int> starts;
  for (int s = 0; s < total; s += kWindowStride) starts.push_back(s);
  return starts;
}

}  // namespace

TEST_CASE("quantize maps one beat to eight columns") {
  Score s = make_score({{0, 60, 0.0, 1.0}});
  PianoRoll roll = quantize(s);
  CHECK(roll.cols() == 8);
  for (int c = 0; c < 8; ++c) CHECK(roll.grid(60, c) == 1.0);
  CHECK(roll.grid.sum() == 8.0);
  const NoteSpan* span = roll.span_of(0);
  REQUIRE(span);
  CHECK(span->row == 60);
  CHECK(span->col_begin == 0);
  CHECK(span->col_end == 8);
}

TEST_CASE("quantize keeps adjacent same-pitch notes distinct in the index") {
  Score s = make_score({{0, 60, 0.0, 1.0}, {0, 60, 1.0, 1.0}});
  PianoRoll roll = quantize(s);
  CHECK(roll.cols() == 16);
  for (int c = 0; c < 16; ++c) {
    CHECK(roll.grid(60, c) == 1.0);
    auto ids = roll.ids_at(60, c);
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == (c < 8 ? 0 : 1));
  }
}

TEST_CASE("quantize widens very short notes to one column") {
  Score s = make_score({{0, 72, 0.0, 1.0 / 32.0}});
  PianoRoll roll = quantize(s);
  const NoteSpan* span = roll.span_of(0);
  REQUIRE(span);
  CHECK(span->col_end - span->col_begin == 1);
  CHECK(roll.grid.sum() == 1.0);
}

TEST_CASE("quantize rejects an empty score") {
  Score s;
  CHECK_THROWS_AS(quantize(s), ArgumentError);
}

TEST_CASE("quantize covers each note exactly over its span") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    Score s = fx::random_score(rng, 20);
    PianoRoll roll = quantize(s);
    for (const NoteSpan& span : roll.spans) {
      for (int c = span.col_begin; c < span.col_end; ++c) {
        CHECK(roll.grid(span.row, c) == 1.0);
        auto ids = roll.ids_at(span.row, c);
        CHECK(std::count(ids.begin(), ids.end(), span.id) == 1);
      }
      if (span.col_begin > 0) {
        auto ids = roll.ids_at(span.row, span.col_begin - 1);
        CHECK(std::count(ids.begin(), ids.end(), span.id) == 0);
      }
    }
  }
}

TEST_CASE("cut_windows enumerates stride-32 starts") {
  auto starts_of = [](int total) {
    PianoRoll roll;
    roll.grid = Eigen::MatrixXd::Zero(kNumPitches, total);
    roll.grid.row(5).setOnes();
    std::vector<int> starts;
    for (const Window& w : cut_windows(roll)) starts.push_back(w.start_col);
    return starts;
  };
  CHECK(starts_of(64) == expected_starts(64));    // {0, 32}
  CHECK(starts_of(10) == expected_starts(10));    // {0}
  CHECK(starts_of(96) == expected_starts(96));    // {0, 32, 64}
  CHECK(starts_of(100) == expected_starts(100));  // {0, 32, 64, 96}
  CHECK(starts_of(64) == std::vector<int>{0, 32});
}

TEST_CASE("cut_windows zero-pads the tail") {
  PianoRoll roll;
  roll.grid = Eigen::MatrixXd::Ones(kNumPitches, 10);
  auto windows = cut_windows(roll);
  REQUIRE(windows.size() == 1);
  CHECK(windows[0].data.leftCols(10).sum() == double(kNumPitches * 10));
  CHECK(windows[0].data.rightCols(kWindowCols - 10).sum() == 0.0);
}

TEST_CASE("cut_windows covers columns once below the stride, twice above") {
  for (int total : {33, 64, 96, 100}) {
    PianoRoll roll;
    roll.grid = Eigen::MatrixXd::Zero(kNumPitches, total);
    auto windows = cut_windows(roll);
    std::vector<int> cover(total, 0);
    for (const Window& w : windows)
      for (int c = w.start_col; c < std::min(total, w.start_col + kWindowCols); ++c)
        cover[c]++;
    for (int c = 0; c < total; ++c) CHECK(cover[c] == (c < kWindowStride ? 1 : 2));
  }
}

TEST_CASE("stitch averages overlapping predictions") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(kNumPitches, kWindowCols, 0.4);
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(kNumPitches, kWindowCols, 0.6);
  ProbabilityRoll out = stitch({{0, a}, {32, b}}, 96);
  CHECK(out.grid(10, 0) == doctest::Approx(0.4));   // covered by a only
  CHECK(out.grid(10, 40) == doctest::Approx(0.5));  // covered by both
  CHECK(out.grid(10, 70) == doctest::Approx(0.6));  // covered by b only
}

TEST_CASE("stitch of a single window is the identity") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(kNumPitches, kWindowCols, 0.3);
  ProbabilityRoll out = stitch({{0, a}}, 40);
  CHECK(out.grid.cols() == 40);
  CHECK((out.grid.array() == 0.3).all());
}

TEST_CASE("stitch is permutation invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto rand_pred = [&] {
    Eigen::MatrixXd m(kNumPitches, kWindowCols);
    for (int c = 0; c < m.cols(); ++c)
      for (int r = 0; r < m.rows(); ++r) m(r, c) = unit(rng);
    return m;
  };
  Eigen::MatrixXd w0 = rand_pred(), w1 = rand_pred(), w2 = rand_pred();
  ProbabilityRoll a = stitch({{0, w0}, {32, w1}, {64, w2}}, 128);
  ProbabilityRoll b = stitch({{64, w2}, {0, w0}, {32, w1}}, 128);
  CHECK((a.grid - b.grid).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stitch rejects badly shaped windows") {
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(10, 10);
  CHECK_THROWS_AS(stitch({{0, bad}}, 64), ArgumentError);
}

TEST_CASE("masking zeroes probabilities outside notes and is idempotent") {
  Score s = make_score({{0, 60, 0.0, 1.0}});
  PianoRoll roll = quantize(s);
  ProbabilityRoll prob;
  prob.grid = Eigen::MatrixXd::Constant(kNumPitches, roll.cols(), 0.9);
  ProbabilityRoll masked = mask(prob, roll);
  CHECK(masked.grid(60, 3) == 0.9);
  CHECK(masked.grid(61, 3) == 0.0);
  CHECK(masked.grid.sum() == doctest::Approx(8 * 0.9));
  ProbabilityRoll twice = mask(masked, roll);
  CHECK((twice.grid - masked.grid).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("note_probabilities takes the median of a note's pixels") {
  Score s = make_score({{0, 60, 0.0, 3.0 / 8.0}});
  PianoRoll roll = quantize(s);
  REQUIRE(roll.cols() == 3);
  ProbabilityRoll prob;
  prob.grid = Eigen::MatrixXd::Zero(kNumPitches, 3);
  prob.grid(60, 0) = 0.2;
  prob.grid(60, 1) = 0.9;
  prob.grid(60, 2) = 0.8;
  NoteProbs probs = note_probabilities(prob, roll);
  CHECK(probs.at(0) == 0.8);
}

TEST_CASE("note_probabilities uses the lower median for even counts") {
  Score s = make_score({{0, 60, 0.0, 0.25}});
  PianoRoll roll = quantize(s);
  REQUIRE(roll.cols() == 2);
  ProbabilityRoll prob;
  prob.grid = Eigen::MatrixXd::Zero(kNumPitches, 2);
  prob.grid(60, 0) = 0.4;
  prob.grid(60, 1) = 0.6;
  NoteProbs probs = note_probabilities(prob, roll);
  CHECK(probs.at(0) == 0.4);
}

TEST_CASE("note probabilities stay in [0,1] and respect masking") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Score s = fx::random_score(rng, 15);
    PianoRoll roll = quantize(s);
    ProbabilityRoll prob;
    prob.grid.resize(kNumPitches, roll.cols());
    for (int c = 0; c < prob.grid.cols(); ++c)
      for (int r = 0; r < prob.grid.rows(); ++r) prob.grid(r, c) = unit(rng);
    NoteProbs probs = note_probabilities(prob, roll);
    CHECK(probs.size() == s.notes.size());
    for (const auto& [id, p] : probs) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    ProbabilityRoll masked = mask(prob, roll);
    for (int c = 0; c < masked.grid.cols(); ++c)
      for (int r = 0; r < masked.grid.rows(); ++r)
        if (roll.grid(r, c) == 0.0) CHECK(masked.grid(r, c) == 0.0);
  }
}

TEST_CASE("write_pgm produces a valid header and payload") {
  Eigen::MatrixXd grid = Eigen::MatrixXd::Constant(4, 3, 0.5);
  std::ostringstream out;
  write_pgm(grid, out);
  std::string text = out.str();
  const std::string header = "P5\n3 4\n255\n";
  CHECK(text.rfind(header, 0) == 0);
  CHECK(text.size() == header.size() + 12);
  CHECK(std::uint8_t(text[header.size()]) == 128);  // round(0.5 * 255)
}
