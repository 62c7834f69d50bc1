#include <doctest.h>

#include <random>

#include "melo/evaluation.hpp"
#include "support/fixtures.hpp"

using namespace melo;
namespace fx = melo::testing;

TEST_CASE("f_measure of a perfect prediction is 1") {
  FMeasure m = f_measure({1, 2, 3}, {1, 2, 3});
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f == 1.0);
  CHECK(m.tp == 3);
  CHECK(m.fp == 0);
  CHECK(m.fn == 0);
}

TEST_CASE("f_measure of an empty prediction is 0") {
  FMeasure m = f_measure({}, {1, 2});
  CHECK(m.f == 0.0);
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.fn == 2);
}

TEST_CASE("f_measure hand example 4/7") {
  // truth = {a,b,c,d}, predicted = {a,b,x}
  FMeasure m = f_measure({1, 2, 99}, {1, 2, 3, 4});
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f == doctest::Approx(4.0 / 7.0));
  CHECK(m.tp == 2);
  CHECK(m.fp == 1);
  CHECK(m.fn == 2);
}

TEST_CASE("swapping predicted and truth swaps P and R but fixes F") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> id(0, 30);
  for (int trial = 0; trial < 50; ++trial) {
    IdSet a, b;
    for (int i = 0; i < 12; ++i) a.insert(id(rng));
    for (int i = 0; i < 12; ++i) b.insert(id(rng));
    FMeasure ab = f_measure(a, b);
    FMeasure ba = f_measure(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    CHECK(ab.f == doctest::Approx(ba.f));
    CHECK(ab.f <= std::max(ab.precision, ab.recall) + 1e-12);
    CHECK((ab.f == 0.0) == (ab.tp == 0));
  }
}

TEST_CASE("f_measure against a score rejects foreign ids") {
  Score s;
  s.notes = {Note{0, 60, 0.0, 1.0}, Note{1, 64, 1.0, 1.0}};
  CHECK(f_measure({0}, {0, 1}, s).recall == 0.5);
  CHECK_THROWS_AS(f_measure({7}, {0}, s), ArgumentError);
  CHECK_THROWS_AS(f_measure({0}, {7}, s), ArgumentError);
}

TEST_CASE("evaluate_corpus with one piece reports that piece's metrics") {
  EvalReport r = evaluate_corpus({{"piece1", "skyline", {1, 2}, {1, 2}}});
  REQUIRE(r.rows.size() == 1);
  REQUIRE(r.corpus.size() == 1);
  CHECK(r.corpus[0].first == "skyline");
  CHECK(r.corpus[0].second.f.mean == 1.0);
  CHECK(r.corpus[0].second.f.median == 1.0);
  CHECK(r.corpus[0].second.pieces == 1);
}

TEST_CASE("evaluate_corpus averages over pieces") {
  EvalReport r = evaluate_corpus({
      {"a", "cnn", {1}, {1}},      // F = 1
      {"b", "cnn", {}, {1}},       // F = 0
  });
  REQUIRE(r.corpus.size() == 1);
  CHECK(r.corpus[0].second.f.mean == 0.5);
  CHECK(r.corpus[0].second.f.median == 0.5);
}

TEST_CASE("evaluate_corpus rejects an empty corpus and orders by name") {
  CHECK_THROWS_AS(evaluate_corpus({}), ArgumentError);
  EvalReport r = evaluate_corpus({
      {"zeta", "cnn", {1}, {1}},
      {"alpha", "cnn", {1}, {1}},
  });
  CHECK(r.rows[0].piece == "alpha");
  CHECK(r.rows[1].piece == "zeta");
}

TEST_CASE("report round trips through CSV and JSON") {
  std::mt19937_64 rng(13);
  std::vector<PieceResult> results;
  for (int i = 0; i < 5; ++i) {
    Score s = fx::random_score(rng, 20);
    IdSet truth = *s.melody_ids;
    IdSet pred;
    std::uniform_int_distribution<int> coin(0, 1);
    for (const Note& n : s.notes)
      if (coin(rng)) pred.insert(n.id);
    results.push_back({"piece" + std::to_string(i), i % 2 ? "cnn" : "skyline", pred, truth});
  }
  EvalReport r = evaluate_corpus(results);

  EvalReport from_c = from_csv(to_csv(r));
  REQUIRE(from_c.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(from_c.rows[i].piece == r.rows[i].piece);
    CHECK(from_c.rows[i].method == r.rows[i].method);
    CHECK(from_c.rows[i].scores.precision == r.rows[i].scores.precision);
    CHECK(from_c.rows[i].scores.recall == r.rows[i].scores.recall);
    CHECK(from_c.rows[i].scores.f == r.rows[i].scores.f);
    CHECK(from_c.rows[i].scores.tp == r.rows[i].scores.tp);
    CHECK(from_c.rows[i].scores.fp == r.rows[i].scores.fp);
    CHECK(from_c.rows[i].scores.fn == r.rows[i].scores.fn);
  }

  EvalReport from_j = from_json(to_json(r));
  REQUIRE(from_j.rows.size() == r.rows.size());
  REQUIRE(from_j.corpus.size() == r.corpus.size());
  for (std::size_t i = 0; i < r.corpus.size(); ++i) {
    CHECK(from_j.corpus[i].first == r.corpus[i].first);
    CHECK(from_j.corpus[i].second.f.mean == r.corpus[i].second.f.mean);
    CHECK(from_j.corpus[i].second.f.median == r.corpus[i].second.f.median);
    CHECK(from_j.corpus[i].second.precision.mean == r.corpus[i].second.precision.mean);
    CHECK(from_j.corpus[i].second.recall.median == r.corpus[i].second.recall.median);
    CHECK(from_j.corpus[i].second.pieces == r.corpus[i].second.pieces);
  }
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(from_j.rows[i].scores.f == r.rows[i].scores.f);
  }
}
