#include "melo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace melo {

FMeasure f_measure(const IdSet& predicted, const IdSet& truth) {
  FMeasure m;
  for (NoteId id : predicted) (truth.count(id) ? m.tp : m.fp)++;
  for (NoteId id : truth)
    if (!predicted.count(id)) m.fn++;
  if (m.tp + m.fp > 0) m.precision = double(m.tp) / double(m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = double(m.tp) / double(m.tp + m.fn);
  if (m.precision + m.recall > 0.0)
    m.f = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

FMeasure f_measure(const IdSet& predicted, const IdSet& truth, const Score& score) {
  IdSet known = score.note_ids();
  for (const IdSet* set : {&predicted, &truth})
    for (NoteId id : *set)
      if (!known.count(id))
        throw ArgumentError("note id not in score: " + std::to_string(id));
  return f_measure(predicted, truth);
}

namespace {

MetricStats stats_of(std::vector<double> values) {
  MetricStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  s.median = (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

}  // namespace

EvalReport evaluate_corpus(const std::vector<PieceResult>& results) {
  if (results.empty()) throw ArgumentError("evaluate_corpus: empty corpus");

  EvalReport report;
  for (const PieceResult& r : results)
    report.rows.push_back({r.piece, r.method, f_measure(r.predicted, r.truth)});
  std::sort(report.rows.begin(), report.rows.end(), [](const PieceEval& a, const PieceEval& b) {
    return std::tie(a.piece, a.method) < std::tie(b.piece, b.method);
  });

  std::map<std::string, std::vector<const PieceEval*>> by_method;
  for (const PieceEval& row : report.rows) by_method[row.method].push_back(&row);
  for (const auto& [method, rows] : by_method) {
    CorpusStats cs;
    std::vector<double> p, r, f;
    for (const PieceEval* row : rows) {
      p.push_back(row->scores.precision);
      r.push_back(row->scores.recall);
      f.push_back(row->scores.f);
    }
    cs.precision = stats_of(p);
    cs.recall = stats_of(r);
    cs.f = stats_of(f);
    cs.pieces = int(rows.size());
    report.corpus.emplace_back(method, cs);
  }
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "piece,method,precision,recall,f_measure,tp,fp,fn\n";
  for (const PieceEval& row : report.rows) {
    out << row.piece << "," << row.method << "," << fmt(row.scores.precision) << ","
        << fmt(row.scores.recall) << "," << fmt(row.scores.f) << "," << row.scores.tp << ","
        << row.scores.fp << "," << row.scores.fn << "\n";
  }
  return out.str();
}

EvalReport from_csv(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 8) throw ParseError("bad CSV row: " + line, 0);
    PieceEval row;
    row.piece = fields[0];
    row.method = fields[1];
    row.scores.precision = std::stod(fields[2]);
    row.scores.recall = std::stod(fields[3]);
    row.scores.f = std::stod(fields[4]);
    row.scores.tp = std::stol(fields[5]);
    row.scores.fp = std::stol(fields[6]);
    row.scores.fn = std::stol(fields[7]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

nlohmann::ordered_json stats_json(const MetricStats& s) {
  return {{"mean", s.mean}, {"median", s.median}};
}

MetricStats stats_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("median").get<double>()};
}

}  // namespace

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["pieces"] = nlohmann::ordered_json::array();
  for (const PieceEval& row : report.rows) {
    j["pieces"].push_back({{"piece", row.piece},
                           {"method", row.method},
                           {"precision", row.scores.precision},
                           {"recall", row.scores.recall},
                           {"f_measure", row.scores.f},
                           {"tp", row.scores.tp},
                           {"fp", row.scores.fp},
                           {"fn", row.scores.fn}});
  }
  j["corpus"] = nlohmann::ordered_json::array();
  for (const auto& [method, cs] : report.corpus) {
    j["corpus"].push_back({{"method", method},
                           {"precision", stats_json(cs.precision)},
                           {"recall", stats_json(cs.recall)},
                           {"f_measure", stats_json(cs.f)},
                           {"pieces", cs.pieces}});
  }
  j["skipped"] = report.skipped;
  std::string text = j.dump(2);
  text.push_back('\n');
  return text;
}

EvalReport from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport report;
  for (const auto& row : j.at("pieces")) {
    PieceEval pe;
    pe.piece = row.at("piece").get<std::string>();
    pe.method = row.at("method").get<std::string>();
    pe.scores.precision = row.at("precision").get<double>();
    pe.scores.recall = row.at("recall").get<double>();
    pe.scores.f = row.at("f_measure").get<double>();
    pe.scores.tp = row.at("tp").get<long>();
    pe.scores.fp = row.at("fp").get<long>();
    pe.scores.fn = row.at("fn").get<long>();
    report.rows.push_back(std::move(pe));
  }
  for (const auto& entry : j.at("corpus")) {
    CorpusStats cs;
    cs.precision = stats_from_json(entry.at("precision"));
    cs.recall = stats_from_json(entry.at("recall"));
    cs.f = stats_from_json(entry.at("f_measure"));
    cs.pieces = entry.at("pieces").get<int>();
    report.corpus.emplace_back(entry.at("method").get<std::string>(), cs);
  }
  if (j.contains("skipped"))
    report.skipped = j.at("skipped").get<std::vector<std::string>>();
  return report;
}

}  // namespace melo
