#include <doctest.h>

#include <random>

#include "mvse/gradcheck.hpp"
#include "mvse/text_encoder.hpp"
#include "support.hpp"

using namespace mvse;

namespace {

oracle::Gru gru_oracle(const ModelParams& p, const std::string& prefix) {
  auto m = [&](const char* n) { return oracle::to_mat(p.at(prefix + n)); };
  auto v = [&](const char* n) { return oracle::to_vec(p.at(prefix + n)); };
  return {m("W_z"), m("U_z"), m("W_r"), m("U_r"), m("W_n"), m("U_n"), v("b_z"), v("b_r"), v("b_n")};
}

oracle::Mat rows(const Tensor& t) { return oracle::to_mat(t); }

}  // namespace

TEST_CASE("tokenize examples") {
  CHECK(tokenize("A man, riding a Horse!") ==
        std::vector<std::string>{"a", "man", "riding", "a", "horse"});
  CHECK(tokenize("  tabs\tand\nnewlines ") == std::vector<std::string>{"tabs", "and", "newlines"});
  CHECK(tokenize("don't") == std::vector<std::string>{"dont"});
  CHECK_THROWS_AS(tokenize(""), EmptySentence);
  CHECK_THROWS_AS(tokenize(" ?! "), EmptySentence);
}

TEST_CASE("oov policies") {
  EmbeddingTable table({"cat", "dog"}, Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(table.index_of("dog") == 1u);
  CHECK_FALSE(table.index_of("bird").has_value());
  CHECK(table.vector_for("cat") == std::vector<double>{1, 2});
  CHECK(table.vector_for("bird") == std::vector<double>{0, 0});

  table.set_policy(OovPolicy::hashed_random);
  const auto a = table.vector_for("bird");
  CHECK(a == table.vector_for("bird"));
  CHECK(a != table.vector_for("fish"));
  CHECK(oracle::cosine(a, a) == doctest::Approx(1.0));

  CHECK(parse_oov_policy(to_string(OovPolicy::hashed_random)) == OovPolicy::hashed_random);
  CHECK_THROWS_AS(parse_oov_policy("ignore"), std::invalid_argument);

  const std::vector<std::string> toks{"dog", "bird"};
  table.set_policy(OovPolicy::zero_vector);
  const Tensor x = lookup(toks, table);
  CHECK(x.shape() == Shape{2, 2});
  CHECK(x.storage() == std::vector<double>{3, 4, 0, 0});
  const std::vector<std::uint32_t> idx{1, 0};
  CHECK(lookup(idx, table).storage() == std::vector<double>{3, 4, 1, 2});
  CHECK_THROWS_AS(lookup(std::span<const std::string>{}, table), EmptySentence);
}

TEST_CASE("random tables are seeded") {
  const auto t1 = EmbeddingTable::random({"a", "b", "c"}, 4, 9);
  const auto t2 = EmbeddingTable::random({"a", "b", "c"}, 4, 9);
  const auto t3 = EmbeddingTable::random({"a", "b", "c"}, 4, 10);
  CHECK(t1.vectors() == t2.vectors());
  CHECK_FALSE(t1.vectors() == t3.vectors());
  CHECK(t1.dim() == 4);
}

TEST_CASE("gru matches a hand-unrolled oracle") {
  std::mt19937_64 rng(7);
  for (int draw = 0; draw < 50; ++draw) {
    const std::size_t E = gen::size_in(rng, 1, 5), H = gen::size_in(rng, 1, 6), T = gen::size_in(rng, 1, 7);
    const auto params = ModelParams::initialize(gru_param_specs("gru.", E, H), 1000 + draw);
    const Tensor xs = gen::normal({T, E}, rng);
    Tape tape;
    ParamBinding binding(tape, params, false);
    const Tensor h = gru_encode(tape, xs, bind_gru(binding, "gru.")).value();
    const auto expect = gru_oracle(params, "gru.").run(rows(xs));
    REQUIRE(h.size() == H);
    for (std::size_t k = 0; k < H; ++k) REQUIRE(h[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
}

TEST_CASE("gru with zero weights keeps a zero state") {
  auto params = ModelParams::initialize(gru_param_specs("g.", 3, 2), 1);
  for (auto& [name, t] : params) {
    for (auto& v : t.storage()) v = 0.0;
  }
  Tape tape;
  ParamBinding binding(tape, params, false);
  const Tensor h = gru_encode(tape, Tensor::filled({4, 3}, 1.0), bind_gru(binding, "g.")).value();
  CHECK(h.storage() == std::vector<double>{0, 0});
}

TEST_CASE("gru is sensitive to token order") {
  std::mt19937_64 rng(8);
  const auto params = ModelParams::initialize(gru_param_specs("g.", 4, 5), 3);
  int changed = 0;
  for (int draw = 0; draw < 20; ++draw) {
    const Tensor xs = gen::normal({3, 4}, rng);
    Tensor swapped = xs;
    for (std::size_t j = 0; j < 4; ++j) std::swap(swapped.at(0, j), swapped.at(2, j));
    Tape tape;
    ParamBinding binding(tape, params, false);
    const auto vars = bind_gru(binding, "g.");
    const Tensor a = gru_encode(tape, xs, vars).value();
    const Tensor b = gru_encode(tape, swapped, vars).value();
    if (max_abs_diff(a, b) > 1e-6) ++changed;
  }
  CHECK(changed == 20);
}

TEST_CASE("gru rejects an empty sequence") {
  const auto params = ModelParams::initialize(gru_param_specs("g.", 2, 2), 1);
  Tape tape;
  ParamBinding binding(tape, params, false);
  CHECK_THROWS_AS(gru_encode(tape, Tensor({0, 2}), bind_gru(binding, "g.")), EmptySentence);
}

TEST_CASE("gru gradients") {
  std::mt19937_64 rng(4);
  const auto params = ModelParams::initialize(gru_param_specs("g.", 3, 4), 5);
  const Tensor xs = gen::normal({4, 3}, rng);
  const Tensor readout = gen::normal({4}, rng);
  std::vector<Tensor> inputs;
  std::vector<std::string> names = params.names();
  for (const auto& n : names) inputs.push_back(params.at(n));
  MultiScalarFn f = [&](Tape& tape, std::span<const Var> v) {
    std::map<std::string, Var> over;
    for (std::size_t i = 0; i < names.size(); ++i) over.emplace(names[i], v[i]);
    ParamBinding binding(tape, params, over);
    return dot(gru_encode(tape, xs, bind_gru(binding, "g.")), tape.constant(readout));
  };
  CHECK(grad_check(f, inputs, 1e-5).max_relative_error < 1e-6);
}

TEST_CASE("affine projection") {
  ModelParams params;
  params.insert("p.W", Tensor::matrix(2, 3, {1, 0, -1, 2, 1, 0}));
  params.insert("p.b", Tensor::vector({0.5, -0.5}));
  Tape tape;
  ParamBinding binding(tape, params, false);
  const auto map = bind_affine(binding, "p.");
  CHECK(affine(map, tape.constant(Tensor::vector({1, 2, 3}))).value() == Tensor::vector({-1.5, 3.5}));

  // Affine law: f(a x + (1-a) y) = a f(x) + (1-a) f(y).
  std::mt19937_64 rng(2);
  for (int draw = 0; draw < 100; ++draw) {
    const Tensor x = gen::normal({3}, rng), y = gen::normal({3}, rng);
    const double a = gen::real_in(rng, -2, 2);
    Tensor mix({3});
    for (std::size_t i = 0; i < 3; ++i) mix[i] = a * x[i] + (1 - a) * y[i];
    const Tensor fx = affine(map, tape.constant(x)).value();
    const Tensor fy = affine(map, tape.constant(y)).value();
    const Tensor fm = affine(map, tape.constant(mix)).value();
    for (std::size_t i = 0; i < 2; ++i) REQUIRE(fm[i] == doctest::Approx(a * fx[i] + (1 - a) * fy[i]).epsilon(1e-12));
  }
  const auto specs = affine_param_specs("q.", 4, 7);
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].shape == Shape{4, 7});
  CHECK(specs[1].shape == Shape{4});
}
