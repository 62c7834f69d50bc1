// melo: melody line identification for symbolic scores.
//
// Subcommands: train, predict, evaluate, saliency, render.
// Exit codes: 0 success, 2 usage/input error, 3 numeric failure,
// 4 empty-result edge case.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "melo/baselines.hpp"
#include "melo/convnet.hpp"
#include "melo/evaluation.hpp"
#include "melo/melody_select.hpp"
#include "melo/midi_io.hpp"
#include "melo/pianoroll.hpp"
#include "melo/pipeline.hpp"
#include "melo/render.hpp"
#include "melo/saliency.hpp"

namespace fs = std::filesystem;
using namespace melo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitEmpty = 4;

struct CorpusPiece {
  std::string name;
  Score score;  // melody_ids set when annotated
};

// Annotation source: a sidecar "<file>.melody.json" id list wins over the
// --melody-track convention.
std::vector<CorpusPiece> load_corpus(const std::string& dir, std::optional<int> melody_track,
                                     bool drop_percussion,
                                     std::vector<std::string>* unannotated) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".mid" || ext == ".midi") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<CorpusPiece> pieces;
  for (const fs::path& path : files) {
    fs::path sidecar = path;
    sidecar += ".melody.json";
    ParseOptions opt;
    opt.drop_percussion = drop_percussion;
    if (!fs::exists(sidecar)) opt.melody_track = melody_track;
    CorpusPiece piece;
    piece.name = path.stem().string();
    piece.score = parse_midi_file(path.string(), opt);
    if (fs::exists(sidecar)) {
      std::ifstream in(sidecar);
      std::stringstream buf;
      buf << in.rdbuf();
      IdSet ids = read_melody_ids_json(buf.str());
      IdSet known = piece.score.note_ids();
      for (NoteId id : ids)
        if (!known.count(id))
          throw ArgumentError(sidecar.string() + ": unknown note id " + std::to_string(id));
      piece.score.melody_ids = ids;
    }
    if (!piece.score.melody_ids && unannotated) unannotated->push_back(piece.name);
    pieces.push_back(std::move(piece));
  }
  return pieces;
}

PiecePair<float> piece_rolls(const Score& score, const std::string& name) {
  PianoRoll roll = quantize(score);
  PiecePair<float> pair;
  pair.name = name;
  pair.input = roll.grid.cast<float>();
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(roll.grid.rows(), roll.grid.cols());
  for (const NoteSpan& span : roll.spans)
    if (score.melody_ids->count(span.id))
      target.row(span.row).segment(span.col_begin, span.col_end - span.col_begin).setOnes();
  pair.target = target.cast<float>();
  return pair;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << text;
}

IdSet run_method(const std::string& method, const Score& score,
                 const ModelParams<float>* params, NoteProbs* probs_out) {
  if (method == "skyline") return skyline(score);
  if (method == "vosa") {
    if (!score.melody_ids)
      throw ArgumentError("vosa best-voice selection needs an annotated melody");
    return vosa_best_voice(vosa_voices(score), *score.melody_ids);
  }
  if (method == "cnn" || method == "cnn_mono") {
    if (!params) throw ArgumentError("method " + method + " needs a checkpoint");
    PianoRoll roll = quantize(score);
    NoteProbs probs = predict_note_probs(*params, roll);
    if (probs_out) *probs_out = probs;
    auto melody = extract_melody(
        score, probs, method == "cnn" ? MelodyMode::cnn : MelodyMode::cnn_mono);
    return IdSet(melody.begin(), melody.end());
  }
  throw ArgumentError("unknown method: " + method);
}

// Deterministic parallel map over piece indices.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (int j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

int cmd_train(const std::string& corpus_dir, const std::string& out_dir,
              std::optional<int> melody_track, bool drop_percussion, TrainConfig config,
              bool timing) {
  std::vector<CorpusPiece> corpus = load_corpus(corpus_dir, melody_track, drop_percussion, nullptr);
  std::vector<PiecePair<float>> pieces;
  for (const CorpusPiece& piece : corpus) {
    if (!piece.score.melody_ids || piece.score.empty()) continue;
    pieces.push_back(piece_rolls(piece.score, piece.name));
  }
  if (pieces.size() < 2) {
    std::cerr << "melo train: need at least 2 annotated pieces, found " << pieces.size()
              << "\n";
    return kExitInput;
  }

  TrainResult<float> result = train(pieces, config);
  fs::create_directories(out_dir);
  save_checkpoint(cast_params<double>(result.params), config,
                  (fs::path(out_dir) / "model.melo").string());
  write_text(fs::path(out_dir) / "history.jsonl", history_jsonl(result.history, timing));
  std::cout << "trained on " << pieces.size() << " pieces, best epoch " << result.best_epoch
            << ", checkpoint " << (fs::path(out_dir) / "model.melo").string() << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& input, const std::string& out_dir,
                const std::string& method, const std::string& checkpoint,
                std::optional<int> melody_track, bool drop_percussion, bool dump_pgm) {
  ParseOptions opt;
  opt.melody_track = melody_track;
  opt.drop_percussion = drop_percussion;
  Score score = parse_midi_file(input, opt);
  if (score.empty()) {
    std::cerr << "melo predict: the input contains no notes\n";
    return kExitEmpty;
  }

  std::optional<ModelParams<float>> params;
  if (method == "cnn" || method == "cnn_mono") {
    if (checkpoint.empty() || !fs::exists(checkpoint)) {
      std::cerr << "melo predict: method " << method << " needs --checkpoint\n";
      return kExitInput;
    }
    params = cast_params<float>(load_checkpoint(checkpoint).params);
  }

  NoteProbs probs;
  IdSet melody = run_method(method, score, params ? &*params : nullptr, &probs);

  fs::create_directories(out_dir);
  std::string stem = fs::path(input).stem().string();
  auto midi = write_outputs(score, melody, OutputFormat::midi);
  write_file((fs::path(out_dir) / (stem + ".melody.mid")).string(), midi);
  auto json = write_outputs(score, melody, OutputFormat::json,
                            probs.empty() ? nullptr : &probs);
  write_file((fs::path(out_dir) / (stem + ".melody.json")).string(), json);

  if (dump_pgm && params) {
    PianoRoll roll = quantize(score);
    ProbabilityRoll prob = predict_roll(*params, roll);
    std::ofstream pgm(fs::path(out_dir) / (stem + ".prob.pgm"), std::ios::binary);
    write_pgm(prob.grid, pgm);
  }
  std::cout << "predicted " << melody.size() << " of " << score.notes.size()
            << " notes as melody (" << method << ")\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& corpus_dir, const std::string& out_dir,
                 std::vector<std::string> methods, const std::string& checkpoint,
                 std::optional<int> melody_track, bool drop_percussion, int jobs) {
  if (!melody_track) melody_track = 0;  // our own predict output keeps the melody on track 0
  std::vector<std::string> unannotated;
  std::vector<CorpusPiece> corpus =
      load_corpus(corpus_dir, melody_track, drop_percussion, nullptr);
  std::vector<CorpusPiece> annotated;
  for (auto& piece : corpus) {
    bool has_annotation = piece.score.melody_ids && !piece.score.melody_ids->empty();
    if (has_annotation && !piece.score.empty())
      annotated.push_back(std::move(piece));
    else
      unannotated.push_back(piece.name);
  }
  if (annotated.empty()) {
    std::cerr << "melo evaluate: no annotated pieces in " << corpus_dir << "\n";
    return kExitInput;
  }
  for (const std::string& name : unannotated)
    std::cerr << "warning: skipping unannotated piece " << name << "\n";

  std::optional<ModelParams<float>> params;
  bool needs_net = false;
  for (const std::string& m : methods) needs_net |= (m == "cnn" || m == "cnn_mono");
  if (needs_net) {
    if (checkpoint.empty() || !fs::exists(checkpoint)) {
      std::cerr << "melo evaluate: cnn methods need --checkpoint\n";
      return kExitInput;
    }
    params = cast_params<float>(load_checkpoint(checkpoint).params);
  }

  std::vector<PieceResult> results(annotated.size() * methods.size());
  parallel_for(annotated.size(), jobs, [&](std::size_t i) {
    const CorpusPiece& piece = annotated[i];
    for (std::size_t m = 0; m < methods.size(); ++m) {
      IdSet predicted =
          run_method(methods[m], piece.score, params ? &*params : nullptr, nullptr);
      results[i * methods.size() + m] =
          PieceResult{piece.name, methods[m], predicted, *piece.score.melody_ids};
    }
  });

  EvalReport report = evaluate_corpus(results);
  report.skipped = unannotated;
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "report.csv", to_csv(report));
  write_text(fs::path(out_dir) / "report.json", to_json(report));
  for (const auto& [method, stats] : report.corpus)
    std::cout << method << ": mean F " << stats.f.mean << ", median F " << stats.f.median
              << " over " << stats.pieces << " pieces\n";
  return kExitOk;
}

int cmd_saliency(const std::string& input, const std::string& out_dir,
                 const std::string& checkpoint, NoteId note_id, int iterations,
                 std::uint64_t seed) {
  Score score = parse_midi_file(input);
  if (score.empty()) {
    std::cerr << "melo saliency: the input contains no notes\n";
    return kExitEmpty;
  }
  if (checkpoint.empty() || !fs::exists(checkpoint)) {
    std::cerr << "melo saliency: needs --checkpoint\n";
    return kExitInput;
  }
  ModelParams<float> params = cast_params<float>(load_checkpoint(checkpoint).params);

  PianoRoll roll = quantize(score);
  RectSampler sampler;
  sampler.seed = seed;
  SaliencyMap map = saliency_map(make_predictor(params), roll, note_id, iterations, sampler);

  fs::create_directories(out_dir);
  std::string stem = fs::path(input).stem().string();
  write_text(fs::path(out_dir) / (stem + ".saliency.json"), saliency_json(map));

  // PGM heat image: symmetric normalization around zero
  double extent = std::max(1e-12, map.map.cwiseAbs().maxCoeff());
  Eigen::MatrixXd normalized = (map.map.array() / (2.0 * extent) + 0.5).matrix();
  std::ofstream pgm(fs::path(out_dir) / (stem + ".saliency.pgm"), std::ios::binary);
  write_pgm(normalized, pgm);
  std::cout << "saliency for note " << note_id << ": " << map.iterations_used << " of "
            << iterations << " iterations used\n";
  return kExitOk;
}

int cmd_render(const std::string& input, const std::string& out_file,
               std::optional<int> melody_track, const std::string& melody_json,
               const std::string& probabilities_json, const RenderOptions& options) {
  ParseOptions opt;
  opt.melody_track = melody_track;
  Score score = parse_midi_file(input, opt);

  std::optional<IdSet> melody = score.melody_ids;
  NoteProbs probs;
  if (!melody_json.empty()) {
    std::ifstream in(melody_json);
    std::stringstream buf;
    buf << in.rdbuf();
    melody = read_melody_ids_json(buf.str());
  }
  if (!probabilities_json.empty()) {
    std::ifstream in(probabilities_json);
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(buf.str());
    for (const auto& rec : j)
      if (rec.contains("probability"))
        probs[rec.at("id").get<NoteId>()] = rec.at("probability").get<double>();
  }

  std::string svg = render_svg(score, melody ? &*melody : nullptr,
                               probs.empty() ? nullptr : &probs, options);
  write_text(out_file, svg);
  std::cout << "wrote " << out_file << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melody line identification for symbolic scores"};
  app.require_subcommand(1);
  app.set_config("--config");

  std::string corpus_dir, out_arg = "out", input, checkpoint, method = "cnn_mono";
  std::optional<int> melody_track;
  std::uint64_t seed = 0;
  int jobs = 1;
  TrainConfig config;
  bool timing = true;
  bool dump_pgm = false;
  bool drop_percussion = false;

  auto* t = app.add_subcommand("train", "train the network on an annotated corpus");
  t->add_option("--corpus", corpus_dir, "directory of annotated MIDI files")->required();
  t->add_option("--out", out_arg, "output directory");
  t->add_option("--melody-track", melody_track, "track index holding the melody");
  t->add_option("--seed", config.seed, "random seed");
  t->add_option("--epochs", config.max_epochs, "maximum training epochs");
  t->add_option("--batch-size", config.batch_size, "windows per batch");
  t->add_option("--patience", config.patience, "early-stopping patience in epochs");
  t->add_option("--dropout", config.dropout_p, "dropout probability");
  t->add_option("--l1", config.l1_coeff, "L1 weight regularization coefficient");
  t->add_option("--lr", config.lr, "AdaDelta learning rate");
  t->add_option("--val-fraction", config.val_fraction, "validation split fraction");
  t->add_flag("--timing,!--no-timing", timing, "record wall-clock time in the history");
  t->add_flag("--drop-percussion", drop_percussion, "skip channel-10 notes when parsing");

  auto* p = app.add_subcommand("predict", "extract the melody from one MIDI file");
  p->add_option("input", input, "input MIDI file")->required();
  p->add_option("--method", method, "cnn, cnn_mono, skyline, or vosa");
  p->add_option("--checkpoint", checkpoint, "model checkpoint (cnn methods)");
  p->add_option("--out", out_arg, "output directory");
  p->add_option("--melody-track", melody_track, "annotation track (vosa oracle)");
  p->add_flag("--pgm", dump_pgm, "also dump the probability roll as PGM");
  p->add_flag("--drop-percussion", drop_percussion, "skip channel-10 notes when parsing");

  auto* e = app.add_subcommand("evaluate", "score methods against an annotated corpus");
  std::vector<std::string> methods{"cnn", "cnn_mono", "skyline", "vosa"};
  e->add_option("--corpus", corpus_dir, "directory of annotated MIDI files")->required();
  e->add_option("--method", methods, "methods to evaluate")->delimiter(',');
  e->add_option("--checkpoint", checkpoint, "model checkpoint (cnn methods)");
  e->add_option("--out", out_arg, "output directory");
  e->add_option("--jobs", jobs, "parallel pieces");
  e->add_option("--melody-track", melody_track, "annotation track fallback");
  e->add_flag("--drop-percussion", drop_percussion, "skip channel-10 notes when parsing");

  auto* s = app.add_subcommand("saliency", "occlusion saliency map for one note");
  NoteId note_id = 0;
  int iterations = 3000;
  s->add_option("input", input, "input MIDI file")->required();
  s->add_option("--note-id", note_id, "note of interest")->required();
  s->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  s->add_option("--iterations", iterations, "occlusion iterations");
  s->add_option("--seed", seed, "rectangle sampler seed");
  s->add_option("--out", out_arg, "output directory");

  auto* r = app.add_subcommand("render", "render a piano-roll SVG");
  std::string melody_json, probabilities_json;
  RenderOptions render_options;
  r->add_option("input", input, "input MIDI file")->required();
  r->add_option("--out", out_arg, "output SVG file")->required();
  r->add_option("--melody-track", melody_track, "annotation track to highlight");
  r->add_option("--melody-json", melody_json, "melody id list to highlight");
  r->add_option("--probabilities", probabilities_json,
                "predict output JSON with note probabilities");
  r->add_option("--beat-width", render_options.beat_width, "SVG units per beat");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitInput;
  }

  try {
    if (t->parsed())
      return cmd_train(corpus_dir, out_arg, melody_track, drop_percussion, config, timing);
    if (p->parsed())
      return cmd_predict(input, out_arg, method, checkpoint, melody_track, drop_percussion,
                         dump_pgm);
    if (e->parsed())
      return cmd_evaluate(corpus_dir, out_arg, methods, checkpoint, melody_track,
                          drop_percussion, jobs);
    if (s->parsed()) return cmd_saliency(input, out_arg, checkpoint, note_id, iterations, seed);
    if (r->parsed())
      return cmd_render(input, out_arg, melody_track, melody_json, probabilities_json,
                        render_options);
  } catch (const NumericError& err) {
    std::cerr << "melo: numeric failure: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::cerr << "melo: " << err.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
