#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "mvse/aggregation.hpp"
#include "support.hpp"

using namespace mvse;

namespace {

Tensor vec(std::vector<double> v) { return Tensor::vector(std::move(v)); }

std::vector<Var> constants(Tape& tape, const std::vector<double>& sims) {
  std::vector<Var> out;
  for (double s : sims) out.push_back(tape.constant(Tensor::scalar(s)));
  return out;
}

}  // namespace

TEST_CASE("gate examples") {
  Tape tape;
  Var phi = tape.constant(vec({0.3, -2.0, 1.0}));
  CHECK(gate_weights(phi, tape.constant(Tensor({4, 3}))).value() == Tensor::filled({4}, 0.25));
  std::mt19937_64 rng(1);
  for (int draw = 0; draw < 20; ++draw) {
    CHECK(gate_weights(tape.constant(gen::normal({3}, rng)), tape.constant(gen::normal({1, 3}, rng))).value() ==
          vec({1.0}));
  }
  const auto specs = gate_param_specs("gate.", 3, 5);
  REQUIRE(specs.size() == 1);
  CHECK(specs[0].shape == Shape{3, 5});
}

TEST_CASE("gate matches the matvec then softmax oracle") {
  std::mt19937_64 rng(2);
  for (int draw = 0; draw < 200; ++draw) {
    const std::size_t M = gen::size_in(rng, 1, 3), H = gen::size_in(rng, 1, 6);
    const Tensor W = gen::normal({M, H}, rng, 2.0), phi = gen::normal({H}, rng);
    Tape tape;
    const Tensor got = gate_weights(tape.constant(phi), tape.constant(W)).value();
    const auto expect = oracle::softmax(oracle::matvec(oracle::to_mat(W), phi.storage()));
    for (std::size_t m = 0; m < M; ++m) REQUIRE(got[m] == doctest::Approx(expect[m]).epsilon(1e-12));
  }
}

TEST_CASE("gate weights are normalized and shift invariant") {
  std::mt19937_64 rng(3);
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t M = gen::size_in(rng, 1, 3), H = gen::size_in(rng, 1, 8);
    const Tensor W = gen::normal({M, H}, rng, 3.0);
    const Tensor phi = gen::normal({H}, rng);
    // Adding u with u.phi = c to every row shifts every logit by c.
    const double c = gen::real_in(rng, -20, 20);
    double pp = 0.0;
    for (double v : phi.storage()) pp += v * v;
    Tensor shifted = W;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t h = 0; h < H; ++h) shifted.at(m, h) += c * phi[h] / pp;
    }
    Tape tape;
    Var p = tape.constant(phi);
    const Tensor w = gate_weights(p, tape.constant(W)).value();
    const Tensor ws = gate_weights(p, tape.constant(shifted)).value();
    double total = 0.0;
    for (double v : w.storage()) {
      REQUIRE(v > 0.0);
      total += v;
    }
    REQUIRE(std::abs(total - 1.0) <= 1e-9);
    REQUIRE(max_abs_diff(w, ws) <= 1e-9);
  }
}

TEST_CASE("fuse examples") {
  Tape tape;
  CHECK(fuse(constants(tape, {0.2, 0.8}), tape.constant(vec({0.5, 0.5}))).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(fuse(constants(tape, {0.37, -0.4}), tape.constant(vec({1, 0}))).item() == 0.37);
  CHECK(fuse(constants(tape, {0.9, 0.1}), tape.constant(vec({0.52, 0.48}))).item() ==
        doctest::Approx(0.516).epsilon(1e-14));
  CHECK_THROWS_AS(fuse(constants(tape, {0.1, 0.2, 0.3}), tape.constant(vec({0.5, 0.5}))), ShapeError);

  Fuser avg(FuseMode::average, 2);
  Var phi = tape.constant(vec({1, 2}));
  Var gate = tape.constant(Tensor::matrix(2, 2, {5, 0, 0, -5}));
  CHECK(avg.fuse(tape, constants(tape, {0.4, 0.6}), phi, gate).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(avg.weights(tape, phi, gate).value() == vec({0.5, 0.5}));
}

TEST_CASE("weighted fuser with a hand-set gate matches the oracle") {
  Tape tape;
  const Tensor W = Tensor::matrix(3, 2, {1, 0, 0, 1, -1, -1});
  const Tensor phi = vec({0.5, -0.25});
  const std::vector<double> sims{0.1, 0.7, -0.3};
  const auto w = oracle::softmax(oracle::matvec(oracle::to_mat(W), phi.storage()));
  double expect = 0.0;
  for (std::size_t m = 0; m < 3; ++m) expect += w[m] * sims[m];
  Fuser f(FuseMode::weighted, 3);
  CHECK(f.fuse(tape, constants(tape, sims), tape.constant(phi), tape.constant(W)).item() ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("zero-gate weighted fusion equals average fusion") {
  std::mt19937_64 rng(4);
  for (std::size_t M = 1; M <= 3; ++M) {
    CAPTURE(M);
    const Fuser weighted(FuseMode::weighted, M), average(FuseMode::average, M);
    for (int draw = 0; draw < 1000; ++draw) {
      std::vector<double> sims(M);
      for (auto& s : sims) s = gen::real_in(rng, -1, 1);
      const std::size_t H = gen::size_in(rng, 1, 8);
      Tape tape;
      Var phi = tape.constant(gen::normal({H}, rng));
      Var zero = tape.constant(Tensor({M, H}));
      Var random_gate = tape.constant(gen::normal({M, H}, rng, 3.0));
      const auto s = constants(tape, sims);
      const double w = weighted.fuse(tape, s, phi, zero).item();
      const double a = average.fuse(tape, s, phi, random_gate).item();
      double mean = 0.0;
      for (double v : sims) mean += v / double(M);
      REQUIRE(std::abs(w - a) <= 1e-12);
      REQUIRE(std::abs(a - mean) <= 1e-12);

      const double g = weighted.fuse(tape, s, phi, random_gate).item();
      const auto [lo, hi] = std::minmax_element(sims.begin(), sims.end());
      REQUIRE(g >= *lo - 1e-12);
      REQUIRE(g <= *hi + 1e-12);
    }
  }
}

TEST_CASE("gate weights depend only on the sentence") {
  std::mt19937_64 rng(5);
  Tape tape;
  Var phi = tape.constant(gen::normal({4}, rng));
  Var gate = tape.constant(gen::normal({2, 4}, rng));
  Fuser f(FuseMode::weighted, 2);
  const Tensor first = f.weights(tape, phi, gate).value();
  for (int video = 0; video < 10; ++video) {
    f.fuse(tape, constants(tape, {gen::real_in(rng, -1, 1), gen::real_in(rng, -1, 1)}), phi, gate);
    REQUIRE(f.weights(tape, phi, gate).value() == first);
  }
}

TEST_CASE("gate statistics") {
  GateStatistics stats({Space::global, Space::sequential});
  const std::vector<std::vector<double>> rows{{0.2, 0.8}, {0.6, 0.4}, {0.505, 0.495}};
  for (const auto& r : rows) stats.add(r);
  CHECK(stats.count() == 3);
  CHECK(stats.mean(0) == doctest::Approx((0.2 + 0.6 + 0.505) / 3));
  CHECK(stats.min(0) == 0.2);
  CHECK(stats.max(1) == 0.8);
  const auto hist = stats.cumulative_histogram(0);
  REQUIRE(hist.size() == GateStatistics::kBins);
  CHECK(hist[0].first == doctest::Approx(0.01));
  CHECK(hist[99].first == doctest::Approx(1.0));
  CHECK(hist[18].second == 0.0);          // <= 0.19
  CHECK(hist[19].second == doctest::Approx(1.0 / 3));  // <= 0.20
  CHECK(hist[50].second == doctest::Approx(2.0 / 3));  // <= 0.51
  CHECK(hist[99].second == 1.0);
  for (std::size_t k = 1; k < hist.size(); ++k) CHECK(hist[k].second >= hist[k - 1].second);

  const std::vector<double> wrong{1.0};
  CHECK_THROWS(stats.add(wrong));

  std::ostringstream table, csv;
  write_gate_table(table, stats);
  CHECK(table.str().find("global") != std::string::npos);
  CHECK(table.str().find("sequential") != std::string::npos);
  write_gate_histogram_csv(csv, stats, 1);
  CHECK(csv.str().rfind("bin_upper,cumulative_fraction\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  CHECK(lines == 101);
}
