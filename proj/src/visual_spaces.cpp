#include "mvse/visual_spaces.hpp"

#include <algorithm>
#include <random>

namespace mvse {

std::vector<std::size_t> chunk_sample(std::size_t frames, std::size_t n_chunks, SampleMode mode,
                                      std::uint64_t seed) {
  if (frames == 0 || n_chunks == 0) {
    throw std::invalid_argument("chunk_sample: need at least one frame and one chunk");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(n_chunks);
  for (std::size_t i = 0; i < n_chunks; ++i) {
    const std::size_t begin = i * frames / n_chunks;
    const std::size_t end = (i + 1) * frames / n_chunks;
    if (end <= begin) {
      out.push_back(std::min(begin, frames - 1));
    } else if (mode == SampleMode::first) {
      out.push_back(begin);
    } else {
      std::uniform_int_distribution<std::size_t> pick(begin, end - 1);
      out.push_back(pick(rng));
    }
  }
  return out;
}

namespace {

void check_indices(const VideoFeature& video, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("no frames selected for video " + video.id);
  for (auto i : indices) {
    if (i >= video.frame_count()) {
      throw std::out_of_range("frame " + std::to_string(i) + " out of range for video " +
                              video.id + " with " + std::to_string(video.frame_count()) +
                              " frames");
    }
  }
}

}  // namespace

Var global_embed(Tape& tape, const VideoFeature& video, std::span<const std::size_t> indices,
                 const AffineVars& head) {
  check_indices(video, indices);
  const std::size_t width = video.global_frames.dim(1);
  Tensor selected({indices.size(), width});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = video.global_frames.data().subspan(indices[k] * width, width);
    std::copy(src.begin(), src.end(), selected.data().begin() + static_cast<std::ptrdiff_t>(k * width));
  }
  Var pooled = mean_over_axis(tape.constant(std::move(selected)), 0);
  return affine(head, pooled);
}

std::vector<ParamSpec> attention_param_specs(const std::string& prefix, const ModelDims& dims) {
  const std::size_t a = dims.attention_dim;
  return {
      {prefix + "W_p", {a, dims.grid_flat()}, dims.grid_flat(), std::nullopt},
      {prefix + "b_p", {a}, dims.grid_flat(), std::nullopt},
      {prefix + "W_q", {a, dims.hidden}, dims.hidden, std::nullopt},
      {prefix + "b_q", {a}, dims.hidden, std::nullopt},
      {prefix + "W_a", {dims.grid_cells(), a}, a, std::nullopt},
      {prefix + "b_a", {dims.grid_cells()}, a, std::nullopt},
  };
}

AttentionVars bind_attention(const ParamBinding& binding, const std::string& prefix) {
  auto get = [&](const char* name) { return binding[prefix + name]; };
  return AttentionVars{get("W_p"), get("b_p"), get("W_q"), get("b_q"), get("W_a"), get("b_a")};
}

Var attention_frame_code(Var grid_frame, const AttentionVars& params) {
  Var flat = reshape(grid_frame, {grid_frame.value().size()});
  return tanh(add(matvec(params.W_p, flat), params.b_p));
}

Var attention_sentence_code(Var phi, const AttentionVars& params) {
  return tanh(add(matvec(params.W_q, phi), params.b_q));
}

AttentionOutput attend(Var grid_frame, Var frame_code, Var sentence_code,
                       const AttentionVars& params) {
  const Shape grid_shape = grid_frame.shape();
  if (grid_shape.size() != 3) {
    throw ShapeError("attention: grid frame must be [G,G,C], got " + to_string(grid_shape));
  }
  Var logits = tanh(add(matvec(params.W_a, add(frame_code, sentence_code)), params.b_a));
  Var map = reshape(softmax(logits), {grid_shape[0], grid_shape[1]});
  return {map, channel_mul(grid_frame, map)};
}

AttentionOutput spatial_attention(Var grid_frame, Var phi, const AttentionVars& params) {
  return attend(grid_frame, attention_frame_code(grid_frame, params),
                attention_sentence_code(phi, params), params);
}

std::vector<ParamSpec> lstm_param_specs(const std::string& prefix, std::size_t input_dim,
                                        std::size_t hidden_dim) {
  std::vector<ParamSpec> specs;
  for (const char* gate : {"i", "f", "g", "o"}) {
    specs.push_back({prefix + "W_" + gate, {hidden_dim, input_dim}, input_dim, std::nullopt});
    specs.push_back({prefix + "U_" + gate, {hidden_dim, hidden_dim}, hidden_dim, std::nullopt});
    std::optional<double> fill;
    if (std::string_view(gate) == "f") fill = 1.0;
    specs.push_back({prefix + "b_" + gate, {hidden_dim}, hidden_dim, fill});
  }
  return specs;
}

LstmVars bind_lstm(const ParamBinding& binding, const std::string& prefix) {
  auto get = [&](const char* name) { return binding[prefix + name]; };
  return LstmVars{get("W_i"), get("U_i"), get("b_i"), get("W_f"), get("U_f"), get("b_f"),
                  get("W_g"), get("U_g"), get("b_g"), get("W_o"), get("U_o"), get("b_o")};
}

Var lstm_encode(Tape& tape, std::span<const Var> inputs, const LstmVars& lstm) {
  if (inputs.empty()) throw std::invalid_argument("lstm_encode: empty sequence");
  const std::size_t hidden = lstm.b_i.value().size();
  Var h = tape.constant(Tensor({hidden}));
  Var c = tape.constant(Tensor({hidden}));
  auto gate = [&](Var x, Var W, Var U, Var b) { return add(add(matvec(W, x), matvec(U, h)), b); };
  for (const Var& x : inputs) {
    Var i = sigmoid(gate(x, lstm.W_i, lstm.U_i, lstm.b_i));
    Var f = sigmoid(gate(x, lstm.W_f, lstm.U_f, lstm.b_f));
    Var g = tanh(gate(x, lstm.W_g, lstm.U_g, lstm.b_g));
    Var o = sigmoid(gate(x, lstm.W_o, lstm.U_o, lstm.b_o));
    c = add(elementwise_mul(f, c), elementwise_mul(i, g));
    h = elementwise_mul(o, tanh(c));
  }
  return h;
}

SequentialFrames prepare_sequential(Tape& tape, const VideoFeature& video,
                                    std::span<const std::size_t> indices,
                                    const SequentialVars& params, bool use_attention) {
  check_indices(video, indices);
  if (!video.has_grid()) throw SpaceUnavailable("space unavailable: video " + video.id + " has no grid features");
  SequentialFrames frames;
  for (auto index : indices) {
    Var grid = tape.constant(video.grid_frames.row(index));
    frames.grids.push_back(grid);
    if (use_attention) frames.codes.push_back(attention_frame_code(grid, params.attention));
  }
  return frames;
}

Var sequential_embed(Tape& tape, const SequentialFrames& frames, Var sentence_code,
                     const SequentialVars& params, bool use_attention) {
  std::vector<Var> inputs;
  inputs.reserve(frames.grids.size());
  for (std::size_t k = 0; k < frames.grids.size(); ++k) {
    const Var& grid = frames.grids[k];
    Var fed = use_attention ? attend(grid, frames.codes[k], sentence_code, params.attention).attended
                            : grid;
    inputs.push_back(reshape(fed, {grid.value().size()}));
  }
  return lstm_encode(tape, inputs, params.lstm);
}

Var sequential_embed(Tape& tape, const VideoFeature& video, std::span<const std::size_t> indices,
                     Var phi, const SequentialVars& params, bool use_attention) {
  const auto frames = prepare_sequential(tape, video, indices, params, use_attention);
  Var code = use_attention ? attention_sentence_code(phi, params.attention) : phi;
  return sequential_embed(tape, frames, code, params, use_attention);
}

Var space_similarity(Var video_embedding, Var text_embedding) {
  return cosine(video_embedding, text_embedding);
}

const Tensor& action_embed(const VideoFeature& video) {
  if (!video.has_action()) {
    throw SpaceUnavailable("space unavailable: video " + video.id + " has no action feature");
  }
  return video.action;
}

}  // namespace mvse
