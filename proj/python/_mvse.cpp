// Python bindings: numpy in and out, exceptions mapped to ValueError/RuntimeError.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>


#include "mvse/data_io.hpp"
#include "mvse/gradcheck_suite.hpp"
#include "mvse/retrieval.hpp"
#include "mvse/synth.hpp"
#include "mvse/training.hpp"

namespace py = pybind11;
using namespace mvse;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["r1"] = m.r1;
  d["r5"] = m.r5;
  d["r10"] = m.r10;
  d["median"] = m.median;
  return d;
}

// A container, its splits and (optionally) a checkpoint, kept together.
struct Corpus {
  Dataset dataset;
  Manifest train;
  Manifest test;
};

}  // namespace

PYBIND11_MODULE(_mvse, m) {
  m.doc() = "Multi-space visual-semantic embedding";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<SpaceUnavailable>(m, "SpaceUnavailable", PyExc_RuntimeError);
  py::register_exception<DegenerateEmbedding>(m, "DegenerateEmbedding", PyExc_RuntimeError);

  m.def("recall_at_k", [](std::vector<std::size_t> ranks, std::size_t k) { return recall_at_k(ranks, k); },
        py::arg("ranks"), py::arg("k"));
  m.def("median_rank", [](std::vector<std::size_t> ranks) { return median_rank(ranks); }, py::arg("ranks"));
  m.def("compute_metrics", [](std::vector<std::size_t> ranks) { return metrics_dict(compute_metrics(ranks)); },
        py::arg("ranks"));

  m.def(
      "gate_weights",
      [](const Array& phi, const Array& gate_matrix) {
        Tape tape;
        return to_array(gate_weights(tape.constant(to_tensor(phi)), tape.constant(to_tensor(gate_matrix))).value());
      },
      py::arg("phi"), py::arg("gate_matrix"), "softmax(W_t phi)");

  m.def(
      "batch_loss",
      [](const Array& similarity, double margin, const std::string& negatives) {
        const Tensor s = to_tensor(similarity);
        if (s.rank() != 2 || s.dim(0) != s.dim(1)) throw std::invalid_argument("similarity must be a square matrix");
        Tape tape;
        std::vector<std::vector<Var>> vars(s.dim(0));
        for (std::size_t i = 0; i < s.dim(0); ++i) {
          for (std::size_t j = 0; j < s.dim(1); ++j) vars[i].push_back(tape.constant(Tensor::scalar(s.at(i, j))));
        }
        return batch_loss(tape, vars, margin, parse_negative_mode(negatives)).item();
      },
      py::arg("similarity"), py::arg("margin") = 0.2, py::arg("negatives") = "hardest",
      "Bidirectional triplet loss of a batch; similarity[i][j] pairs video i with sentence j.");

  py::class_<Corpus>(m, "Corpus")
      .def_static(
          "synthesize",
          [](std::size_t train_videos, std::size_t test_videos, std::size_t sentences, std::array<double, 3> split,
             double noise, const std::string& focus, const std::string& preset, std::uint64_t seed) {
            SynthConfig c;
            c.dims = ModelDims::preset(preset);
            c.train_videos = train_videos;
            c.test_videos = test_videos;
            c.sentences_per_video = sentences;
            c.split = split;
            c.noise = noise;
            c.focus = parse_sentence_focus(focus);
            c.seed = seed;
            auto out = synth_generate(c);
            return Corpus{std::move(out.dataset), std::move(out.train), std::move(out.test)};
          },
          py::arg("train_videos") = 200, py::arg("test_videos") = 50, py::arg("sentences") = 2,
          py::arg("split") = std::array<double, 3>{1.0, 0.0, 0.0}, py::arg("noise") = 0.05,
          py::arg("focus") = "all", py::arg("preset") = "small", py::arg("seed") = 1)
      .def_static(
          "load",
          [](const std::filesystem::path& data, const std::filesystem::path& train, const std::filesystem::path& test) {
            return Corpus{load_container(data), load_manifest(train), load_manifest(test)};
          },
          py::arg("data"), py::arg("train"), py::arg("test"))
      .def("save",
           [](Corpus& c, const std::filesystem::path& data, const std::filesystem::path& train,
              const std::filesystem::path& test) {
             c.train.container = c.test.container = data.filename().string();
             save_container(data, c.dataset);
             save_manifest(train, c.train);
             save_manifest(test, c.test);
           },
           py::arg("data"), py::arg("train"), py::arg("test"))
      .def("container_bytes", [](const Corpus& c) {
        const auto bytes = write_container(c.dataset);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      })
      .def_property_readonly("video_ids",
                             [](const Corpus& c) {
                               std::vector<std::string> ids;
                               for (const auto& v : c.dataset.videos) ids.push_back(v.id);
                               return ids;
                             })
      .def_property_readonly("vocabulary", [](const Corpus& c) { return c.dataset.table.tokens(); })
      .def("sentence", [](const Corpus& c, std::size_t i) {
        std::vector<std::string> words;
        for (auto t : c.dataset.sentences.at(i)) words.push_back(c.dataset.table.tokens().at(t));
        return words;
      })
      .def("global_frames", [](const Corpus& c, std::size_t video) { return to_array(c.dataset.videos.at(video).global_frames); });

  py::class_<Checkpoint>(m, "Model")
      .def_static(
          "train",
          [](const Corpus& corpus, const std::string& spaces, const std::string& fuse_mode, const std::string& preset,
             double margin, double lr, std::size_t epochs, std::size_t batch_size, const std::string& negatives,
             std::uint64_t seed) {
            ModelConfig mc;
            mc.dims = ModelDims::preset(preset);
            const auto& d = corpus.dataset;
            mc.dims.grid = d.grid;
            mc.dims.global_channels = d.global_channels;
            mc.dims.grid_channels = d.grid_channels;
            mc.dims.action_dim = d.action_dim;
            mc.dims.token_dim = d.token_dim();
            mc.spaces = parse_space_set(spaces);
            mc.fuse = parse_fuse_mode(fuse_mode);
            TripletConfig tc;
            tc.margin = margin;
            tc.learning_rate = lr;
            tc.epochs = epochs;
            tc.batch_size = batch_size;
            tc.negatives = parse_negative_mode(negatives);
            tc.seed = seed;
            TrainResult result;
            {
              py::gil_scoped_release release;
              result = train(d, corpus.train, mc, tc);
            }
            return std::make_pair(Checkpoint{mc, std::move(result.params), triplet_echo(tc)}, result.epoch_loss);
          },
          py::arg("corpus"), py::arg("spaces") = "dual-S", py::arg("fuse_mode") = "weighted",
          py::arg("preset") = "small", py::arg("margin") = 0.2, py::arg("lr") = 0.05, py::arg("epochs") = 30,
          py::arg("batch_size") = 16, py::arg("negatives") = "hardest", py::arg("seed") = 1,
          "Returns (model, per-epoch loss).")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(p, c); }, py::arg("path"))
      .def("to_bytes", [](const Checkpoint& c) {
        const auto bytes = write_checkpoint(c);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      })
      .def_static("from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return read_checkpoint(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      })
      .def_property_readonly("spaces", [](const Checkpoint& c) {
        std::vector<std::string> names;
        for (Space s : c.model.space_list()) names.emplace_back(to_string(s));
        return names;
      })
      .def_property_readonly("parameter_names", [](const Checkpoint& c) { return c.params.names(); })
      .def("parameter", [](const Checkpoint& c, const std::string& name) { return to_array(c.params.at(name)); })
      .def(
          "evaluate",
          [](const Checkpoint& c, const Corpus& corpus, const std::string& fuse_mode, std::uint64_t seed) {
            ModelConfig mc = c.model;
            if (!fuse_mode.empty()) mc.fuse = parse_fuse_mode(fuse_mode);
            EvalReport report;
            {
              py::gil_scoped_release release;
              report = evaluate(corpus.dataset, corpus.test, Retriever(mc, c.params, seed));
            }
            py::dict out = metrics_dict(report.metrics);
            out["ranks"] = report.ranks;
            py::dict gates;
            for (std::size_t i = 0; i < report.gates.spaces().size(); ++i) {
              gates[py::str(std::string(to_string(report.gates.spaces()[i])))] = report.gates.mean(i);
            }
            out["gate_means"] = gates;
            return out;
          },
          py::arg("corpus"), py::arg("fuse_mode") = "", py::arg("seed") = 1)
      .def(
          "retrieve",
          [](const Checkpoint& c, const Corpus& corpus, const std::string& sentence, std::size_t k, std::uint64_t seed) {
            const Retriever retriever(c.model, c.params, seed);
            std::vector<const VideoFeature*> videos;
            for (const auto& e : corpus.test.videos) {
              videos.push_back(&corpus.dataset.videos[corpus.dataset.video_index(e.video_id)]);
            }
            const auto gallery = retriever.prepare(videos);
            const auto tokens = tokenize(sentence);
            const auto result = retriever.rank_all(lookup(tokens, corpus.dataset.table), gallery, sentence);
            py::list rows;
            for (std::size_t i = 0; i < std::min(k, result.ranking.size()); ++i) {
              const auto& r = result.ranking[i];
              rows.append(py::make_tuple(r.video_id, r.similarity, r.per_space));
            }
            return py::make_tuple(rows, result.weights);
          },
          py::arg("corpus"), py::arg("sentence"), py::arg("k") = 5, py::arg("seed") = 1,
          "Returns ([(video_id, score, per_space)], gate weights) over the test split.");

  m.def(
      "gradcheck",
      [](const std::string& preset, std::uint64_t seed) {
        GradCheckReport r;
        {
          py::gil_scoped_release release;
          r = run_gradcheck_suite(preset, seed);
        }
        py::dict errors;
        for (const auto& e : r.entries) errors[py::str(e.name)] = e.max_relative_error;
        return py::make_tuple(r.passed(), errors);
      },
      py::arg("preset") = "tiny", py::arg("seed") = 1, "Returns (passed, {check: max relative error}).");
}
