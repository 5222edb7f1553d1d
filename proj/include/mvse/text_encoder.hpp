#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mvse/autodiff.hpp"
#include "mvse/params.hpp"

namespace mvse {

class EmptySentence : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Lowercases, removes ASCII punctuation, splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

enum class OovPolicy : std::uint8_t { zero_vector = 0, hashed_random = 1 };

std::string_view to_string(OovPolicy policy);
OovPolicy parse_oov_policy(std::string_view name);

/// Frozen token vectors. Rows are never bound as trainable leaves.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> tokens, Tensor vectors,
                 OovPolicy policy = OovPolicy::zero_vector);

  /// Standard-normal rows drawn from `seed`.
  static EmbeddingTable random(std::vector<std::string> tokens, std::size_t dim, std::uint64_t seed,
                               OovPolicy policy = OovPolicy::zero_vector);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t dim() const noexcept { return vectors_.rank() == 2 ? vectors_.dim(1) : 0; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const Tensor& vectors() const noexcept { return vectors_; }
  OovPolicy policy() const noexcept { return policy_; }
  void set_policy(OovPolicy policy) noexcept { policy_ = policy; }

  std::optional<std::uint32_t> index_of(std::string_view token) const;
  /// Table row for a known token; zeros or a token-hash-seeded vector otherwise.
  std::vector<double> vector_for(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  Tensor vectors_;
  OovPolicy policy_ = OovPolicy::zero_vector;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// [T, E] token vectors for a token sequence.
Tensor lookup(std::span<const std::string> tokens, const EmbeddingTable& table);
/// [T, E] rows for pre-resolved vocabulary indices.
Tensor lookup(std::span<const std::uint32_t> indices, const EmbeddingTable& table);

/// Cho-style GRU, zero initial state:
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   n = tanh(W_n x + U_n (r * h) + b_n)
///   h' = (1 - z) * h + z * n
template <typename T>
struct GruWeights {
  T W_z, U_z, b_z;
  T W_r, U_r, b_r;
  T W_n, U_n, b_n;
};

using GruParams = GruWeights<Tensor>;
using GruVars = GruWeights<Var>;

std::vector<ParamSpec> gru_param_specs(const std::string& prefix, std::size_t input_dim,
                                       std::size_t hidden_dim);
GruVars bind_gru(const ParamBinding& binding, const std::string& prefix);

/// Final hidden state after one step per row of `token_vectors`.
Var gru_encode(Tape& tape, const Tensor& token_vectors, const GruVars& gru);

/// Affine map W x + b.
template <typename T>
struct AffineWeights {
  T W, b;
};
using AffineVars = AffineWeights<Var>;

std::vector<ParamSpec> affine_param_specs(const std::string& prefix, std::size_t out_dim,
                                          std::size_t in_dim);
AffineVars bind_affine(const ParamBinding& binding, const std::string& prefix);
Var affine(const AffineVars& map, Var x);

}  // namespace mvse
