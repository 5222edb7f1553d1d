#pragma once

// Independent reference implementations and random generators for the unit
// tests. Everything here works on plain std::vector<double> so it shares no
// code path with the tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvse/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const mvse::Tensor& t) {
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  }
  return m;
}

inline Vec to_vec(const mvse::Tensor& t) { return t.storage(); }

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec out(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) out[i] += w[i][j] * x[j];
  }
  return out;
}

inline Vec plus(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec softmax(const Vec& x) {
  Vec e(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (e[i] = std::exp(x[i]));
  for (auto& v : e) v /= total;
  return e;
}

inline double cosine(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

/// Hand-unrolled GRU, one scalar at a time.
struct Gru {
  Mat Wz, Uz, Wr, Ur, Wn, Un;
  Vec bz, br, bn;

  Vec run(const Mat& xs) const {
    const std::size_t H = bz.size();
    Vec h(H, 0.0);
    for (const auto& x : xs) {
      Vec next(H);
      Vec r(H);
      for (std::size_t k = 0; k < H; ++k) {
        double a = br[k];
        for (std::size_t j = 0; j < x.size(); ++j) a += Wr[k][j] * x[j];
        for (std::size_t j = 0; j < H; ++j) a += Ur[k][j] * h[j];
        r[k] = sigmoid(a);
      }
      for (std::size_t k = 0; k < H; ++k) {
        double az = bz[k], an = bn[k];
        for (std::size_t j = 0; j < x.size(); ++j) {
          az += Wz[k][j] * x[j];
          an += Wn[k][j] * x[j];
        }
        for (std::size_t j = 0; j < H; ++j) {
          az += Uz[k][j] * h[j];
          an += Un[k][j] * r[j] * h[j];
        }
        const double z = sigmoid(az);
        next[k] = (1.0 - z) * h[k] + z * std::tanh(an);
      }
      h = next;
    }
    return h;
  }
};

/// Hand-unrolled LSTM.
struct Lstm {
  Mat Wi, Ui, Wf, Uf, Wg, Ug, Wo, Uo;
  Vec bi, bf, bg, bo;

  Vec run(const Mat& xs) const {
    const std::size_t H = bi.size();
    Vec h(H, 0.0), c(H, 0.0);
    auto pre = [&](const Mat& W, const Mat& U, const Vec& b, const Vec& x, std::size_t k) {
      double a = b[k];
      for (std::size_t j = 0; j < x.size(); ++j) a += W[k][j] * x[j];
      for (std::size_t j = 0; j < H; ++j) a += U[k][j] * h[j];
      return a;
    };
    for (const auto& x : xs) {
      Vec nh(H), nc(H);
      for (std::size_t k = 0; k < H; ++k) {
        const double i = sigmoid(pre(Wi, Ui, bi, x, k));
        const double f = sigmoid(pre(Wf, Uf, bf, x, k));
        const double g = std::tanh(pre(Wg, Ug, bg, x, k));
        const double o = sigmoid(pre(Wo, Uo, bo, x, k));
        nc[k] = f * c[k] + i * g;
        nh[k] = o * std::tanh(nc[k]);
      }
      h = nh;
      c = nc;
    }
    return h;
  }
};

/// Per-direction hinge terms of a batch similarity matrix S[i][j] = s(video i, sentence j).
struct LossTerms {
  std::vector<Vec> sentence;  // sentence[i][j]: anchor video i, negative sentence j (j != i)
  std::vector<Vec> video;     // video[i][j]: anchor sentence i, negative video j
};

inline LossTerms loss_terms(const Mat& S, double margin) {
  const std::size_t n = S.size();
  LossTerms t{std::vector<Vec>(n, Vec(n, 0.0)), std::vector<Vec>(n, Vec(n, 0.0))};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      t.sentence[i][j] = std::max(0.0, margin - S[i][i] + S[i][j]);
      t.video[i][j] = std::max(0.0, margin - S[i][i] + S[j][i]);
    }
  }
  return t;
}

inline double sum_all_loss(const Mat& S, double margin) {
  const auto t = loss_terms(S, margin);
  double total = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    for (std::size_t j = 0; j < S.size(); ++j) total += t.sentence[i][j] + t.video[i][j];
  }
  return total;
}

/// The hinge is monotone in the negative's similarity, so the hardest-negative
/// term per anchor equals the largest per-negative term.
inline double hardest_loss(const Mat& S, double margin) {
  const auto t = loss_terms(S, margin);
  double total = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    double ms = 0.0, mv = 0.0;
    for (std::size_t j = 0; j < S.size(); ++j) {
      if (j == i) continue;
      ms = std::max(ms, t.sentence[i][j]);
      mv = std::max(mv, t.video[i][j]);
    }
    total += ms + mv;
  }
  return total;
}

inline bool all_constraints_hold(const Mat& S, double margin) {
  for (std::size_t i = 0; i < S.size(); ++i) {
    for (std::size_t j = 0; j < S.size(); ++j) {
      if (i == j) continue;
      if (S[i][i] - S[i][j] < margin || S[i][i] - S[j][i] < margin) return false;
    }
  }
  return true;
}

/// 1 + #items strictly more similar + #tied items with a smaller id.
inline std::size_t count_rank(const std::vector<std::pair<std::string, double>>& items,
                              const std::string& truth) {
  double s = 0.0;
  for (const auto& [id, sim] : items) {
    if (id == truth) s = sim;
  }
  std::size_t rank = 1;
  for (const auto& [id, sim] : items) {
    if (sim > s || (sim == s && id < truth)) ++rank;
  }
  return rank;
}

}  // namespace oracle

namespace gen {

inline mvse::Tensor normal(mvse::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  mvse::Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

inline mvse::Tensor uniform(mvse::Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  mvse::Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

inline std::size_t size_in(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double real_in(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace gen
