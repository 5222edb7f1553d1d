#include <doctest.h>

#include <sstream>

#include "mvse/gradcheck_suite.hpp"
#include "mvse/model.hpp"
#include "mvse/synth.hpp"
#include "support.hpp"

using namespace mvse;

TEST_CASE("space sets and names") {
  CHECK(spaces_of(SpaceSet::single) == std::vector<Space>{Space::global});
  CHECK(spaces_of(SpaceSet::dual_i) == std::vector<Space>{Space::global, Space::action});
  CHECK(spaces_of(SpaceSet::triple).size() == 3);
  for (auto s : {SpaceSet::single, SpaceSet::dual_s, SpaceSet::dual_i, SpaceSet::triple}) {
    CHECK(parse_space_set(to_string(s)) == s);
  }
  CHECK(parse_space_set("dual-S") == SpaceSet::dual_s);
  CHECK(parse_fuse_mode("average") == FuseMode::average);
  CHECK_THROWS_AS(parse_space_set("quad"), std::invalid_argument);
  CHECK_THROWS_AS(parse_fuse_mode("max"), std::invalid_argument);
  CHECK_THROWS_AS(ModelDims::preset("huge"), std::invalid_argument);
  CHECK(ModelDims::preset("small") == ModelDims::small());
}

TEST_CASE("parameter count of the single-space small model") {
  ModelConfig m;
  m.dims = ModelDims::small();
  m.spaces = SpaceSet::single;
  const auto p = init_params(m, 1);
  const std::size_t H = 16, E = 16, D = 16, Cg = 32;
  const std::size_t gru = 3 * (H * E + H * H + H);
  const std::size_t expect = gru + (D * H + D) + (D * Cg + D) + H;
  CHECK(p.parameter_count() == expect);
  CHECK(p.contains("gate.W_t"));
  CHECK(p.at("gate.W_t") == Tensor({1, H}));
}

TEST_CASE("parameters are checked against the configuration") {
  ModelConfig m;
  m.dims = ModelDims::tiny();
  m.spaces = SpaceSet::triple;
  auto p = init_params(m, 2);
  CHECK_NOTHROW(check_params(m, p));
  CHECK(p.at("text.proj.action.W").shape() == Shape{m.dims.action_dim, m.dims.hidden});
  CHECK(p.at("visual.lstm.b_f") == Tensor::filled({m.dims.hidden}, 1.0));

  ModelConfig single = m;
  single.spaces = SpaceSet::single;
  CHECK_THROWS_AS(check_params(single, p), std::invalid_argument);
  CHECK_THROWS_AS(check_params(m, init_params(single, 2)), std::invalid_argument);
  p.at("gate.W_t") = Tensor({2, m.dims.hidden});
  CHECK_THROWS_AS(check_params(m, p), std::invalid_argument);

  ModelConfig bad = m;
  bad.dims.embed = bad.dims.hidden + 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = m;
  bad.dims.hidden = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ModelConfig no_attention = m;
  no_attention.attention = false;
  CHECK_FALSE(init_params(no_attention, 2).contains("visual.attention.W_p"));
  CHECK(init_params(m, 2) == init_params(m, 2));
  CHECK_FALSE(init_params(m, 2) == init_params(m, 3));
}

TEST_CASE("model scores") {
  SynthConfig sc;
  sc.dims = ModelDims::tiny();
  sc.train_videos = 3;
  sc.test_videos = 0;
  sc.split = {0.5, 0.25, 0.25};
  const auto corpus = synth_generate(sc);
  const auto& d = corpus.dataset;

  for (auto set : {SpaceSet::single, SpaceSet::dual_s, SpaceSet::dual_i, SpaceSet::triple}) {
    CAPTURE(to_string(set));
    ModelConfig m;
    m.dims = ModelDims::tiny();
    m.spaces = set;
    const auto params = init_params(m, 5);
    Tape tape;
    ParamBinding binding(tape, params, false);
    Model model(m, binding);
    const auto sentence = model.encode_sentence(lookup(d.sentences[0], d.table));
    const std::size_t M = m.space_list().size();
    CHECK(sentence.text.size() == M);
    CHECK(sentence.weights.value() == Tensor::filled({M}, 1.0 / double(M)));
    CHECK(sentence.phi.value().size() == m.dims.hidden);
    const auto video = model.encode_video(d.videos[1], select_frames(d.videos[1], m.dims.n_chunks, 1));
    const auto score = model.score(video, sentence);
    REQUIRE(score.per_space.size() == M);
    double mean = 0.0;
    for (const auto& s : score.per_space) {
      CHECK(std::abs(s.item()) <= 1.0 + 1e-12);
      mean += s.item() / double(M);
    }
    CHECK(score.fused.item() == doctest::Approx(mean).epsilon(1e-12));
    if (!m.has(Space::sequential)) CHECK_THROWS(model.project_text(sentence.phi, Space::sequential));
  }
}

TEST_CASE("frame selection") {
  VideoFeature v{"v", Tensor({12, 2}), {}, {}};
  const auto a = select_frames(v, 4, 9);
  CHECK(a.sequential == std::vector<std::size_t>{0, 3, 6, 9});
  CHECK(a.global.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.global[i] >= 3 * i);
    CHECK(a.global[i] < 3 * i + 3);
  }
  CHECK(select_frames(v, 4, 9).global == a.global);
}

TEST_CASE("gradient check suite passes on the tiny preset") {
  const auto report = run_gradcheck_suite("tiny", 1);
  std::ostringstream out;
  write_gradcheck_report(out, report);
  INFO(out.str());
  CHECK(report.passed());
  CHECK(report.entries.size() >= 6);
  for (const auto& e : report.entries) CHECK(e.max_relative_error < 1e-4);
  CHECK(out.str().find("all gradient checks passed") != std::string::npos);
  CHECK_THROWS_AS(run_gradcheck_suite("full", 1), std::invalid_argument);
}

TEST_CASE("gradient check suite catches a broken backward rule") {
  for (OpKind kind : {OpKind::sigmoid, OpKind::softmax, OpKind::cosine}) {
    CAPTURE(op_name(kind));
    testing::corrupt_backward(kind);
    const auto report = run_gradcheck_suite("tiny", 1);
    testing::corrupt_backward(std::nullopt);
    CHECK_FALSE(report.passed());
    std::ostringstream out;
    write_gradcheck_report(out, report);
    CHECK(out.str().find("gradient check FAILED") != std::string::npos);
  }
}
