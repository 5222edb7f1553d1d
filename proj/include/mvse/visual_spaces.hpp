#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvse/autodiff.hpp"
#include "mvse/config.hpp"
#include "mvse/params.hpp"
#include "mvse/text_encoder.hpp"

namespace mvse {

/// Precomputed visual features of one video.
struct VideoFeature {
  std::string id;
  Tensor global_frames;  // [F, C_g]
  Tensor grid_frames;    // [F, G, G, C_s]; empty when the container has no grid section
  Tensor action;         // [C_a]; empty when the container has no action section

  std::size_t frame_count() const { return global_frames.rank() == 2 ? global_frames.dim(0) : 0; }
  bool has_grid() const { return !grid_frames.empty(); }
  bool has_action() const { return !action.empty(); }
};

class SpaceUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SampleMode : std::uint8_t { random, first };

/// One frame index per chunk. Chunk i covers [floor(i*F/n), floor((i+1)*F/n)).
/// `first` takes the chunk start; `random` draws uniformly inside the chunk.
/// An empty chunk (F < n) repeats frame min(floor(i*F/n), F-1).
std::vector<std::size_t> chunk_sample(std::size_t frames, std::size_t n_chunks, SampleMode mode,
                                      std::uint64_t seed);

/// f_g = W_g * mean(selected global frames) + b_g
Var global_embed(Tape& tape, const VideoFeature& video, std::span<const std::size_t> indices,
                 const AffineVars& head);

template <typename T>
struct AttentionWeights {
  T W_p, b_p;  // grid frame -> attention code p
  T W_q, b_q;  // sentence -> attention code q
  T W_a, b_a;  // p + q -> one logit per grid cell
};
using AttentionVars = AttentionWeights<Var>;

std::vector<ParamSpec> attention_param_specs(const std::string& prefix, const ModelDims& dims);
AttentionVars bind_attention(const ParamBinding& binding, const std::string& prefix);

struct AttentionOutput {
  Var map;       // [G, G], softmax over all cells
  Var attended;  // [G, G, C_s]
};

/// p = tanh(W_p flatten(grid) + b_p). Depends only on the frame.
Var attention_frame_code(Var grid_frame, const AttentionVars& params);
/// q = tanh(W_q phi + b_q). Depends only on the sentence.
Var attention_sentence_code(Var phi, const AttentionVars& params);
/// a = softmax(tanh(W_a (p + q) + b_a)); attended = grid * a over channels.
AttentionOutput attend(Var grid_frame, Var frame_code, Var sentence_code,
                       const AttentionVars& params);
AttentionOutput spatial_attention(Var grid_frame, Var phi, const AttentionVars& params);

/// Standard 4-gate LSTM with zero initial state.
template <typename T>
struct LstmWeights {
  T W_i, U_i, b_i;
  T W_f, U_f, b_f;
  T W_g, U_g, b_g;
  T W_o, U_o, b_o;
};
using LstmVars = LstmWeights<Var>;

/// Forget-gate bias starts at 1.
std::vector<ParamSpec> lstm_param_specs(const std::string& prefix, std::size_t input_dim,
                                        std::size_t hidden_dim);
LstmVars bind_lstm(const ParamBinding& binding, const std::string& prefix);
/// Final hidden state.
Var lstm_encode(Tape& tape, std::span<const Var> inputs, const LstmVars& lstm);

struct SequentialVars {
  AttentionVars attention;
  LstmVars lstm;
};

/// Sentence-independent part of the sequential head for one video: the
/// selected grid frames as tape constants and their attention codes.
struct SequentialFrames {
  std::vector<Var> grids;
  std::vector<Var> codes;
};

SequentialFrames prepare_sequential(Tape& tape, const VideoFeature& video,
                                    std::span<const std::size_t> indices,
                                    const SequentialVars& params, bool use_attention = true);

/// f_s = LSTM over per-frame attended grids; `sentence_code` is q for the query.
/// With attention disabled the raw flattened grids are fed and the code is unused.
Var sequential_embed(Tape& tape, const SequentialFrames& frames, Var sentence_code,
                     const SequentialVars& params, bool use_attention = true);

Var sequential_embed(Tape& tape, const VideoFeature& video, std::span<const std::size_t> indices,
                     Var phi, const SequentialVars& params, bool use_attention = true);

/// Cosine similarity inside one joint space.
Var space_similarity(Var video_embedding, Var text_embedding);

/// The stored action vector, unchanged; throws SpaceUnavailable when absent.
const Tensor& action_embed(const VideoFeature& video);

}  // namespace mvse
