#pragma once

#include <string>
#include <vector>

#include "melo/types.hpp"

namespace melo {

struct FMeasure {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

/// Note-level F-measure over id sets. Empty denominators score 0.
FMeasure f_measure(const IdSet& predicted, const IdSet& truth);

/// Same, but validates both sets against the score's note ids first.
FMeasure f_measure(const IdSet& predicted, const IdSet& truth, const Score& score);

struct PieceEval {
  std::string piece;
  std::string method;
  FMeasure scores;
};

struct MetricStats {
  double mean = 0.0;
  double median = 0.0;
};

struct CorpusStats {
  MetricStats precision, recall, f;
  int pieces = 0;
};

struct EvalReport {
  std::vector<PieceEval> rows;  // sorted by (piece, method)
  std::vector<std::pair<std::string, CorpusStats>> corpus;  // per method
  std::vector<std::string> skipped;  // pieces without annotation
};

struct PieceResult {
  std::string piece;
  std::string method;
  IdSet predicted;
  IdSet truth;
};

/// Per-piece metrics plus per-method corpus mean/median.
EvalReport evaluate_corpus(const std::vector<PieceResult>& results);

std::string to_csv(const EvalReport& report);
EvalReport from_csv(const std::string& text);

std::string to_json(const EvalReport& report);
EvalReport from_json(const std::string& text);

}  // namespace melo
