#include "mvse/gradcheck_suite.hpp"

#include <chrono>
#include <iomanip>
#include <ostream>
#include <random>

#include "mvse/gradcheck.hpp"
#include "mvse/model.hpp"
#include "mvse/seed.hpp"
#include "mvse/synth.hpp"
#include "mvse/training.hpp"

namespace mvse {

bool GradCheckReport::passed() const {
  if (entries.empty()) return false;
  for (const auto& e : entries) {
    if (!e.passed) return false;
  }
  return true;
}

namespace {

constexpr double kMinKinkDistance = 1e-3;

struct Fixture {
  ModelConfig config;
  Dataset dataset;
  ModelParams params;
  std::vector<TrainingPair> batch;
  std::uint64_t frame_seed = 0;
};

/// Scalars of the model w.r.t. the named parameters; everything else constant.
using ModelOutputs = std::function<std::vector<Var>(const Model&, const ParamBinding&)>;

std::vector<GradCheckEntry> check(const std::vector<std::string>& entry_names, const Fixture& fx,
                                  const std::vector<std::string>& names, const ModelOutputs& outputs,
                                  double eps, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Tensor> inputs;
  for (const auto& n : names) inputs.push_back(fx.params.at(n));
  MultiOutputFn fn = [&](Tape& tape, std::span<const Var> leaves) {
    std::map<std::string, Var> overrides;
    for (std::size_t k = 0; k < names.size(); ++k) overrides.emplace(names[k], leaves[k]);
    ParamBinding binding(tape, fx.params, overrides);
    Model model(fx.config, binding);
    return outputs(model, binding);
  };
  const auto results = grad_check(fn, inputs, eps);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::vector<GradCheckEntry> entries;
  for (std::size_t o = 0; o < results.size(); ++o) {
    GradCheckEntry entry;
    entry.name = entry_names.at(o);
    entry.max_relative_error = results[o].max_relative_error;
    entry.coordinates = results[o].coordinates;
    entry.seconds = seconds / static_cast<double>(results.size());
    entry.passed = results[o].max_relative_error < tolerance;
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<std::string> with_prefix(const ModelParams& params, const std::vector<std::string>& prefixes) {
  std::vector<std::string> out;
  for (const auto& name : params.names()) {
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) {
        out.push_back(name);
        break;
      }
    }
  }
  return out;
}

}  // namespace

GradCheckReport run_gradcheck_suite(std::string_view preset, std::uint64_t seed, double eps, double tolerance) {
  if (preset != "tiny" && preset != "small") {
    throw std::invalid_argument("unknown gradcheck preset: " + std::string(preset) + " (expected tiny or small)");
  }
  Fixture fx;
  fx.config.dims = ModelDims::preset(preset);
  fx.config.spaces = SpaceSet::triple;
  fx.config.fuse = FuseMode::weighted;

  SynthConfig synth;
  synth.dims = fx.config.dims;
  synth.train_videos = 3;
  synth.test_videos = 0;
  synth.sentences_per_video = 1;
  synth.slots = 3;
  synth.split = {0.4, 0.3, 0.3};
  synth.seed = seed;
  auto generated = synth_generate(synth);
  fx.dataset = std::move(generated.dataset);
  for (std::size_t i = 0; i < 3; ++i) fx.batch.push_back({i, i});
  fx.frame_seed = derive_seed(seed, 0x6c);

  // Parameter draws whose batch loss sits on a hinge kink or a hardest-negative
  // tie are skipped: central differences are meaningless there.
  TripletConfig triplet;
  triplet.batch_size = 3;
  std::uint64_t init_seed = seed;
  for (int attempt = 0;; ++attempt, init_seed = mix64(init_seed)) {
    fx.params = init_params(fx.config, init_seed);
    Tape tape;
    ParamBinding binding(tape, fx.params, false);
    Model model(fx.config, binding);
    std::vector<std::vector<double>> sims;
    batch_loss(model, fx.dataset, fx.batch, triplet, fx.frame_seed, &sims);
    const double distance = std::min(kink_distance(sims, triplet.margin, NegativeMode::sum_all),
                                     kink_distance(sims, triplet.margin, NegativeMode::hardest));
    if (distance > kMinKinkDistance) break;
    if (attempt > 100) throw std::runtime_error("gradcheck: no parameter draw away from loss kinks");
  }

  const auto& video = fx.dataset.videos[0];
  const auto frames = select_frames(video, fx.config.dims.n_chunks, fx.frame_seed);
  const Tensor tokens = lookup(fx.dataset.sentences[0], fx.dataset.table);

  auto pair_score = [&](const Model& model) {
    return model.score(model.encode_video(video, frames), model.encode_sentence(tokens));
  };

  GradCheckReport report;
  report.preset = std::string(preset);
  report.tolerance = tolerance;
  auto run_all = [&](const std::vector<std::string>& entry_names, const std::vector<std::string>& prefixes,
                     const ModelOutputs& fn) {
    for (auto& e : check(entry_names, fx, with_prefix(fx.params, prefixes), fn, eps, tolerance)) {
      report.entries.push_back(std::move(e));
    }
  };
  using ModelScalar = std::function<Var(const Model&, const ParamBinding&)>;
  auto run = [&](const std::string& name, const std::vector<std::string>& prefixes, ModelScalar fn) {
    run_all({name}, prefixes, [fn = std::move(fn)](const Model& m, const ParamBinding& b) {
      return std::vector<Var>{fn(m, b)};
    });
  };

  run("global head", {"visual.global.", "text.proj.global."},
      [&](const Model& model, const ParamBinding&) { return pair_score(model).per_space[0]; });

  // Random linear readout of the attention map and the attended grid.
  std::mt19937_64 rng(derive_seed(seed, 0xa77));
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor readout({fx.config.dims.grid_flat()});
  for (auto& v : readout.storage()) v = normal(rng);
  Tensor map_readout({fx.config.dims.grid_cells()});
  for (auto& v : map_readout.storage()) v = normal(rng);
  run("attention", {"visual.attention."}, [&](const Model& model, const ParamBinding& binding) {
    Tape& tape = model.tape();
    const auto attention = bind_attention(binding, "visual.attention.");
    Var phi = model.encode_text(tokens);
    Var grid = tape.constant(video.grid_frames.row(frames.sequential[0]));
    const auto out = spatial_attention(grid, phi, attention);
    Var a = dot(reshape(out.attended, {fx.config.dims.grid_flat()}), tape.constant(readout));
    Var b = dot(reshape(out.map, {fx.config.dims.grid_cells()}), tape.constant(map_readout));
    return add(a, b);
  });

  run("sequential head", {"visual.lstm.", "visual.attention.", "text.proj.sequential."},
      [&](const Model& model, const ParamBinding&) { return pair_score(model).per_space[1]; });

  run("action projection", {"text.proj.action."},
      [&](const Model& model, const ParamBinding&) { return pair_score(model).per_space[2]; });

  run("gate", {"gate."}, [&](const Model& model, const ParamBinding&) { return pair_score(model).fused; });

  run("text encoder", {"text.gru."},
      [&](const Model& model, const ParamBinding&) { return pair_score(model).fused; });

  // Both negative modes read the same similarity matrix, so one forward pass
  // serves both losses.
  run_all({"batch loss (sum-all)", "batch loss (hardest)"}, {""},
          [&](const Model& model, const ParamBinding&) {
            const auto similarity = batch_similarity(model, fx.dataset, fx.batch, fx.frame_seed);
            std::vector<Var> losses;
            for (NegativeMode mode : {NegativeMode::sum_all, NegativeMode::hardest}) {
              losses.push_back(batch_loss(model.tape(), similarity, triplet.margin, mode));
            }
            return losses;
          });
  return report;
}

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report) {
  out << "gradient check, preset " << report.preset << ", tolerance " << report.tolerance << '\n';
  for (const auto& e : report.entries) {
    out << (e.passed ? "PASS " : "FAIL ") << std::left << std::setw(24) << e.name << std::right
        << " max_rel_err=" << std::scientific << std::setprecision(3) << e.max_relative_error
        << std::defaultfloat << " coords=" << e.coordinates << " time=" << std::fixed
        << std::setprecision(2) << e.seconds << "s" << std::defaultfloat << '\n';
  }
  out << (report.passed() ? "all gradient checks passed" : "gradient check FAILED") << '\n';
}

}  // namespace mvse
