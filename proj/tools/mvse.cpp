// mvse: synthesize corpora, train, evaluate, retrieve and gradient-check.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.

#include <CLI11.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvse/data_io.hpp"
#include "mvse/gradcheck_suite.hpp"
#include "mvse/retrieval.hpp"
#include "mvse/synth.hpp"
#include "mvse/training.hpp"

namespace fs = std::filesystem;
using namespace mvse;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// Thrown for bad configuration detected by the tool itself.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every setting any command reads. Unset optionals fall back to the preset,
// the dataset or the checkpoint.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string preset = "small";
  std::optional<std::size_t> chunks, hidden, embed, attention_dim;
  std::optional<std::size_t> global_channels, grid_channels, action_dim, grid, token_dim;
  std::optional<std::string> spaces, fuse_mode;
  bool no_attention = false;

  double margin = 0.2;
  double lr = 0.05;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::string negatives = "hardest";

  std::size_t train_videos = 200, test_videos = 50, sentences = 2;
  std::vector<double> split{1.0, 0.0, 0.0};
  double noise = 0.05;
  std::size_t slots = 4;
  std::string focus = "all";

  std::size_t k = 5;
  std::string out_dir = ".";
  std::string data, train_manifest, test_manifest, checkpoint;
  std::string query;
  std::string corrupt_backward;

  fs::path out(const std::string& name) const { return fs::path(out_dir) / name; }
  fs::path data_path() const { return data.empty() ? out("data.mvse") : fs::path(data); }
  fs::path train_path() const { return train_manifest.empty() ? out("train.manifest") : fs::path(train_manifest); }
  fs::path test_path() const { return test_manifest.empty() ? out("test.manifest") : fs::path(test_manifest); }
  fs::path checkpoint_path() const { return checkpoint.empty() ? out("model.ckpt") : fs::path(checkpoint); }

  // Preset dimensions with explicit overrides applied.
  ModelDims dims() const {
    ModelDims d = ModelDims::preset(preset);
    auto take = [](std::size_t& field, const std::optional<std::size_t>& v) {
      if (v) field = *v;
    };
    take(d.n_chunks, chunks);
    take(d.hidden, hidden);
    take(d.embed, embed);
    take(d.attention_dim, attention_dim);
    take(d.global_channels, global_channels);
    take(d.grid_channels, grid_channels);
    take(d.action_dim, action_dim);
    take(d.grid, grid);
    take(d.token_dim, token_dim);
    return d;
  }

  TripletConfig triplet() const {
    TripletConfig t;
    t.margin = margin;
    t.learning_rate = lr;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.negatives = parse_negative_mode(negatives);
    t.seed = seed;
    t.validate();
    return t;
  }
};

void require_readable(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void ensure_out_dir(const RunConfig& rc) {
  fs::create_directories(rc.out_dir);
}

// Model configuration for training: data-bound widths come from the dataset.
ModelConfig model_for(const RunConfig& rc, const Dataset& data) {
  ModelConfig m;
  m.dims = rc.dims();
  m.dims.grid = data.grid;
  m.dims.global_channels = data.global_channels;
  m.dims.grid_channels = data.grid_channels;
  m.dims.action_dim = data.action_dim;
  m.dims.token_dim = data.token_dim();
  if (m.dims.n_chunks > data.frames) {
    throw ConfigError("--chunks " + std::to_string(m.dims.n_chunks) + " exceeds the " + std::to_string(data.frames) +
                      " frames per video in the dataset");
  }
  m.spaces = parse_space_set(rc.spaces.value_or("dual-S"));
  m.fuse = parse_fuse_mode(rc.fuse_mode.value_or("weighted"));
  m.attention = !rc.no_attention;
  m.validate();
  for (Space s : m.space_list()) {
    if (!data.supports(s)) {
      throw ConfigError("space set " + std::string(to_string(m.spaces)) + " needs " + std::string(to_string(s)) +
                        " features, which the dataset does not contain");
    }
  }
  return m;
}

// Checkpoint model, checked against any --spaces given on the command line.
Checkpoint load_model(const RunConfig& rc, const Dataset& data) {
  require_readable(rc.checkpoint_path(), "checkpoint");
  Checkpoint ck = load_checkpoint(rc.checkpoint_path());
  if (rc.spaces && parse_space_set(*rc.spaces) != ck.model.spaces) {
    throw ConfigError("--spaces " + *rc.spaces + " does not match the checkpoint's " +
                      std::string(to_string(ck.model.spaces)));
  }
  for (Space s : ck.model.space_list()) {
    if (!data.supports(s)) {
      throw ConfigError("checkpoint uses the " + std::string(to_string(s)) +
                        " space but the dataset has no such features");
    }
  }
  return ck;
}

int cmd_synth(const RunConfig& rc) {
  SynthConfig sc;
  sc.dims = rc.dims();
  sc.train_videos = rc.train_videos;
  sc.test_videos = rc.test_videos;
  sc.sentences_per_video = rc.sentences;
  if (rc.split.size() != 3) throw ConfigError("--split takes three weights: global,sequential,action");
  sc.split = {rc.split[0], rc.split[1], rc.split[2]};
  sc.noise = rc.noise;
  sc.slots = rc.slots;
  sc.focus = parse_sentence_focus(rc.focus);
  sc.seed = rc.seed;
  sc.validate();

  auto out = synth_generate(sc);
  ensure_out_dir(rc);
  const fs::path data = rc.data_path();
  out.train.container = data.filename().string();
  out.test.container = data.filename().string();
  save_container(data, out.dataset);
  save_manifest(rc.train_path(), out.train);
  save_manifest(rc.test_path(), out.test);
  std::cout << "wrote " << out.dataset.videos.size() << " videos and " << out.dataset.sentences.size()
            << " sentences to " << data.string() << "\n"
            << "train split: " << out.train.videos.size() << " videos, test split: " << out.test.videos.size()
            << " videos\n";
  return 0;
}

int cmd_train(const RunConfig& rc) {
  require_readable(rc.data_path(), "dataset");
  require_readable(rc.train_path(), "train manifest");
  const Dataset data = load_container(rc.data_path());
  const Manifest split = load_manifest(rc.train_path());
  const ModelConfig model = model_for(rc, data);
  const TripletConfig triplet = rc.triplet();

  ensure_out_dir(rc);
  std::ostringstream log;
  log << "epoch,loss\n" << std::setprecision(17);
  const auto result = train(data, split, model, triplet, nullptr, [&](std::size_t epoch, double loss) {
    log << epoch + 1 << ',' << loss << '\n';
    std::cout << "epoch " << epoch + 1 << "/" << triplet.epochs << "  loss " << std::setprecision(6) << loss << "\n";
  });
  auto echo = triplet_echo(triplet);
  echo["data.container"] = rc.data_path().filename().string();
  echo["data.manifest"] = rc.train_path().filename().string();
  save_checkpoint(rc.checkpoint_path(), Checkpoint{model, result.params, echo});
  write_text(rc.out("loss.csv"), log.str());
  std::cout << "saved " << result.params.parameter_count() << " parameters to " << rc.checkpoint_path().string()
            << "\n";
  return 0;
}

std::string space_file_name(Space s) { return "gate_hist_" + std::string(to_string(s)) + ".csv"; }

void write_gate_stats_csv(std::ostream& out, const EvalReport& report) {
  out << "group,space,count,mean,min,max\n" << std::setprecision(17);
  auto rows = [&](const std::string& group, const GateStatistics& g) {
    for (std::size_t m = 0; m < g.spaces().size(); ++m) {
      out << group << ',' << to_string(g.spaces()[m]) << ',' << g.count() << ',' << g.mean(m) << ',' << g.min(m)
          << ',' << g.max(m) << '\n';
    }
  };
  rows("all", report.gates);
  for (const auto& [name, g] : report.group_gates) rows(name, g);
}

int cmd_eval(const RunConfig& rc) {
  require_readable(rc.data_path(), "dataset");
  require_readable(rc.test_path(), "test manifest");
  const Dataset data = load_container(rc.data_path());
  const Manifest split = load_manifest(rc.test_path());
  const Checkpoint ck = load_model(rc, data);

  // Without --fuse-mode both fusion rules run on the same checkpoint.
  std::vector<FuseMode> modes{FuseMode::average, FuseMode::weighted};
  if (rc.fuse_mode) modes = {parse_fuse_mode(*rc.fuse_mode)};

  std::vector<MetricsRow> rows;
  std::optional<EvalReport> gate_source;
  for (FuseMode mode : modes) {
    ModelConfig m = ck.model;
    m.fuse = mode;
    const Retriever retriever(m, ck.params, rc.seed);
    auto report = evaluate(data, split, retriever);
    rows.push_back({std::string(to_string(mode)), report.metrics});
    for (const auto& [group, metrics] : report.group_metrics) {
      rows.push_back({std::string(to_string(mode)) + "/" + group, metrics});
    }
    if (mode == FuseMode::weighted || !gate_source) gate_source = std::move(report);
  }

  ensure_out_dir(rc);
  std::ostringstream table, csv, gates;
  write_metrics_table(table, rows);
  write_metrics_csv(csv, rows);
  write_gate_stats_csv(gates, *gate_source);
  write_text(rc.out("metrics.txt"), table.str());
  write_text(rc.out("metrics.csv"), csv.str());
  write_text(rc.out("gate_stats.csv"), gates.str());
  for (std::size_t s = 0; s < gate_source->gates.spaces().size(); ++s) {
    std::ostringstream hist;
    write_gate_histogram_csv(hist, gate_source->gates, s);
    write_text(rc.out(space_file_name(gate_source->gates.spaces()[s])), hist.str());
  }

  std::cout << "space set " << to_string(ck.model.spaces) << ", " << gate_source->ranks.size() << " queries against "
            << split.videos.size() << " videos\n\n"
            << table.str() << "\ngate weights (" << to_string(modes.back()) << " fusion)\n";
  write_gate_table(std::cout, gate_source->gates);
  for (const auto& [group, g] : gate_source->group_gates) {
    std::cout << "group " << group << "\n";
    write_gate_table(std::cout, g);
  }
  return 0;
}

int cmd_retrieve(const RunConfig& rc) {
  if (rc.k == 0) throw ConfigError("--k must be at least 1");
  require_readable(rc.data_path(), "dataset");
  const Dataset data = load_container(rc.data_path());
  Checkpoint ck = load_model(rc, data);
  if (rc.fuse_mode) ck.model.fuse = parse_fuse_mode(*rc.fuse_mode);

  const auto tokens = tokenize(rc.query);
  if (tokens.empty()) throw ConfigError("query sentence has no tokens");
  std::size_t known = 0;
  for (const auto& t : tokens) known += data.table.index_of(t).has_value();
  if (known == 0 && data.table.policy() == OovPolicy::zero_vector) {
    throw DegenerateEmbedding("every query token is out of vocabulary; with the zero-vector policy the sentence has "
                              "no content to match");
  }

  // The gallery is the test split when its manifest exists, else every video.
  std::vector<const VideoFeature*> gallery_videos;
  if (fs::is_regular_file(rc.test_path())) {
    const Manifest split = load_manifest(rc.test_path());
    split.validate(data);
    for (const auto& e : split.videos) gallery_videos.push_back(&data.videos[data.video_index(e.video_id)]);
  } else {
    for (const auto& v : data.videos) gallery_videos.push_back(&v);
  }

  const Retriever retriever(ck.model, ck.params, rc.seed);
  const auto gallery = retriever.prepare(gallery_videos);
  const auto result = retriever.rank_all(lookup(tokens, data.table), gallery, rc.query);

  const auto spaces = ck.model.space_list();
  std::cout << "query: " << rc.query << "\nweights:";
  for (std::size_t m = 0; m < spaces.size(); ++m) {
    std::cout << " " << to_string(spaces[m]) << "=" << std::fixed << std::setprecision(6) << result.weights[m];
  }
  std::cout << "\n\nrank  video_id              s";
  for (Space s : spaces) std::cout << "         s_" << to_string(s)[0];
  std::cout << "\n";
  const std::size_t shown = std::min(rc.k, result.ranking.size());
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& r = result.ranking[i];
    std::cout << std::setw(4) << i + 1 << "  " << std::left << std::setw(20) << r.video_id << std::right
              << std::setw(10) << std::setprecision(6) << r.similarity;
    for (double v : r.per_space) std::cout << std::setw(12) << v;
    std::cout << "\n";
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
  if (rc.preset != "small" && rc.preset != "tiny") {
    throw ConfigError("gradcheck preset must be small or tiny, got " + rc.preset);
  }
  if (!rc.corrupt_backward.empty()) {
    const auto kind = op_from_name(rc.corrupt_backward);
    if (!kind) throw ConfigError("unknown op: " + rc.corrupt_backward);
    testing::corrupt_backward(*kind);
  }
  const auto report = run_gradcheck_suite(rc.preset, rc.seed);
  write_gradcheck_report(std::cout, report);
  return report.passed() ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-space visual-semantic embedding: synthesize, train, evaluate, retrieve"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file of option values; command-line flags take precedence");

  RunConfig rc;
  app.add_option("--seed", rc.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--preset", rc.preset, "Dimension preset: full, small or tiny")->capture_default_str();
  app.add_option("--chunks", rc.chunks, "Frames sampled per video (N)");
  app.add_option("--hidden", rc.hidden, "Recurrent state width (H)");
  app.add_option("--embed", rc.embed, "Joint space width (D)");
  app.add_option("--attention-dim", rc.attention_dim, "Attention code width (A)");
  app.add_option("--global-channels", rc.global_channels, "Global feature width, synth only");
  app.add_option("--grid-channels", rc.grid_channels, "Grid feature width, synth only");
  app.add_option("--action-dim", rc.action_dim, "Action feature width (0: none), synth only");
  app.add_option("--grid", rc.grid, "Spatial grid side, synth only");
  app.add_option("--token-dim", rc.token_dim, "Token vector width, synth only");
  app.add_option("--spaces", rc.spaces, "Space set: single, dual-S, dual-I or triple (default dual-S)");
  app.add_option("--fuse-mode", rc.fuse_mode, "weighted or average; eval compares both when omitted");
  app.add_flag("--no-attention", rc.no_attention, "Sequential head without spatial attention");
  app.add_option("--margin", rc.margin, "Triplet margin")->capture_default_str();
  app.add_option("--lr", rc.lr, "SGD learning rate")->capture_default_str();
  app.add_option("--epochs", rc.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch-size", rc.batch_size, "Pairs per batch")->capture_default_str();
  app.add_option("--negatives", rc.negatives, "sum-all or hardest")->capture_default_str();
  app.add_option("--train-videos", rc.train_videos, "Synthetic training videos")->capture_default_str();
  app.add_option("--test-videos", rc.test_videos, "Synthetic test videos")->capture_default_str();
  app.add_option("--sentences", rc.sentences, "Sentences per video")->capture_default_str();
  app.add_option("--split", rc.split, "Signal weights global,sequential,action")->delimiter(',')->expected(3);
  app.add_option("--noise", rc.noise, "Feature noise sigma")->capture_default_str();
  app.add_option("--slots", rc.slots, "Latent slots per video")->capture_default_str();
  app.add_option("--focus", rc.focus, "Sentence focus: all or split")->capture_default_str();
  app.add_option("--k", rc.k, "Rows printed by retrieve")->capture_default_str();
  app.add_option("--out-dir", rc.out_dir, "Directory for every output file")->capture_default_str();
  app.add_option("--data", rc.data, "Dataset container (default <out-dir>/data.mvse)");
  app.add_option("--train-manifest", rc.train_manifest, "Train split (default <out-dir>/train.manifest)");
  app.add_option("--test-manifest", rc.test_manifest, "Test split (default <out-dir>/test.manifest)");
  app.add_option("--checkpoint", rc.checkpoint, "Checkpoint (default <out-dir>/model.ckpt)");
  app.add_option("--corrupt-backward", rc.corrupt_backward)->group("");

  auto* synth = app.add_subcommand("synth", "Generate a planted-correlation corpus and its splits");
  auto* train_cmd = app.add_subcommand("train", "Train on the train split and save a checkpoint");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  auto* retrieve = app.add_subcommand("retrieve", "Rank videos for one sentence");
  retrieve->add_option("sentence", rc.query, "Query sentence")->required();
  auto* gradcheck = app.add_subcommand("gradcheck", "Check every backward rule against finite differences");
  for (auto* sub : {synth, train_cmd, eval, retrieve, gradcheck}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*synth) return cmd_synth(rc);
    if (*train_cmd) return cmd_train(rc);
    if (*eval) return cmd_eval(rc);
    if (*retrieve) return cmd_retrieve(rc);
    return cmd_gradcheck(rc);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
