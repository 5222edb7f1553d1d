#include "mvse/text_encoder.hpp"

#include <cctype>
#include <random>

namespace mvse {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  if (tokens.empty()) throw EmptySentence("empty sentence");
  return tokens;
}

std::string_view to_string(OovPolicy policy) {
  return policy == OovPolicy::zero_vector ? "zero-vector" : "hashed-random";
}

OovPolicy parse_oov_policy(std::string_view name) {
  if (name == "zero-vector") return OovPolicy::zero_vector;
  if (name == "hashed-random") return OovPolicy::hashed_random;
  throw std::invalid_argument("unknown OOV policy: " + std::string(name));
}

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Tensor vectors, OovPolicy policy)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), policy_(policy) {
  if (vectors_.rank() != 2 || vectors_.dim(0) != tokens_.size()) {
    throw ShapeError("embedding table: " + std::to_string(tokens_.size()) +
                     " tokens but vectors have shape " + to_string(vectors_.shape()));
  }
  for (std::uint32_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw std::invalid_argument("embedding table: duplicate token '" + tokens_[i] + "'");
    }
  }
}

EmbeddingTable EmbeddingTable::random(std::vector<std::string> tokens, std::size_t dim,
                                      std::uint64_t seed, OovPolicy policy) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor vectors({tokens.size(), dim});
  for (auto& v : vectors.storage()) v = normal(rng);
  return EmbeddingTable(std::move(tokens), std::move(vectors), policy);
}

std::optional<std::uint32_t> EmbeddingTable::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> EmbeddingTable::vector_for(std::string_view token) const {
  const std::size_t e = dim();
  if (auto idx = index_of(token)) {
    const auto first = vectors_.data().begin() + static_cast<std::ptrdiff_t>(*idx * e);
    return {first, first + static_cast<std::ptrdiff_t>(e)};
  }
  std::vector<double> out(e, 0.0);
  if (policy_ == OovPolicy::hashed_random) {
    // FNV-1a over the token bytes seeds the generator.
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (char c : token) {
      hash ^= static_cast<unsigned char>(c);
      hash *= 0x100000001b3ULL;
    }
    std::mt19937_64 rng(hash);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : out) v = normal(rng);
  }
  return out;
}

Tensor lookup(std::span<const std::string> tokens, const EmbeddingTable& table) {
  if (tokens.empty()) throw EmptySentence("empty sentence");
  const std::size_t e = table.dim();
  Tensor out({tokens.size(), e});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto row = table.vector_for(tokens[t]);
    std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(t * e));
  }
  return out;
}

Tensor lookup(std::span<const std::uint32_t> indices, const EmbeddingTable& table) {
  if (indices.empty()) throw EmptySentence("empty sentence");
  const std::size_t e = table.dim();
  Tensor out({indices.size(), e});
  for (std::size_t t = 0; t < indices.size(); ++t) {
    if (indices[t] >= table.size()) {
      throw std::out_of_range("token index " + std::to_string(indices[t]) +
                              " outside vocabulary of " + std::to_string(table.size()));
    }
    const auto first = table.vectors().data().begin() + static_cast<std::ptrdiff_t>(indices[t] * e);
    std::copy(first, first + static_cast<std::ptrdiff_t>(e),
              out.data().begin() + static_cast<std::ptrdiff_t>(t * e));
  }
  return out;
}

std::vector<ParamSpec> gru_param_specs(const std::string& prefix, std::size_t input_dim,
                                       std::size_t hidden_dim) {
  std::vector<ParamSpec> specs;
  for (const char* gate : {"z", "r", "n"}) {
    specs.push_back({prefix + "W_" + gate, {hidden_dim, input_dim}, hidden_dim, std::nullopt});
    specs.push_back({prefix + "U_" + gate, {hidden_dim, hidden_dim}, hidden_dim, std::nullopt});
    specs.push_back({prefix + "b_" + gate, {hidden_dim}, hidden_dim, std::nullopt});
  }
  return specs;
}

GruVars bind_gru(const ParamBinding& binding, const std::string& prefix) {
  auto get = [&](const char* name) { return binding[prefix + name]; };
  return GruVars{get("W_z"), get("U_z"), get("b_z"), get("W_r"), get("U_r"),
                 get("b_r"), get("W_n"), get("U_n"), get("b_n")};
}

Var gru_encode(Tape& tape, const Tensor& token_vectors, const GruVars& gru) {
  if (token_vectors.rank() != 2 || token_vectors.dim(0) == 0) {
    throw EmptySentence("gru_encode: need at least one token, got shape " +
                        to_string(token_vectors.shape()));
  }
  const std::size_t hidden = gru.b_z.value().size();
  Var h = tape.constant(Tensor({hidden}));
  for (std::size_t t = 0; t < token_vectors.dim(0); ++t) {
    Var x = tape.constant(token_vectors.row(t));
    Var z = sigmoid(add(add(matvec(gru.W_z, x), matvec(gru.U_z, h)), gru.b_z));
    Var r = sigmoid(add(add(matvec(gru.W_r, x), matvec(gru.U_r, h)), gru.b_r));
    Var n = tanh(add(add(matvec(gru.W_n, x), matvec(gru.U_n, elementwise_mul(r, h))), gru.b_n));
    h = add(elementwise_mul(one_minus(z), h), elementwise_mul(z, n));
  }
  return h;
}

std::vector<ParamSpec> affine_param_specs(const std::string& prefix, std::size_t out_dim,
                                          std::size_t in_dim) {
  return {{prefix + "W", {out_dim, in_dim}, in_dim, std::nullopt},
          {prefix + "b", {out_dim}, in_dim, std::nullopt}};
}

AffineVars bind_affine(const ParamBinding& binding, const std::string& prefix) {
  return AffineVars{binding[prefix + "W"], binding[prefix + "b"]};
}

Var affine(const AffineVars& map, Var x) { return add(matvec(map.W, x), map.b); }

}  // namespace mvse
