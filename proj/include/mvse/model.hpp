#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mvse/aggregation.hpp"
#include "mvse/config.hpp"
#include "mvse/params.hpp"
#include "mvse/text_encoder.hpp"
#include "mvse/visual_spaces.hpp"

namespace mvse {

/// Every learnable tensor for `config`, named "module.name".
std::vector<ParamSpec> model_param_specs(const ModelConfig& config);
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws std::invalid_argument naming the first missing or mis-shaped tensor.
void check_params(const ModelConfig& config, const ModelParams& params);

struct SentenceEncoding {
  Var phi;
  std::vector<Var> text;  // g_m(y), one per active space
  Var weights;            // fusion weights, [M]
  Var attention_code;     // q, when the sequential space uses attention
};

struct VideoEncoding {
  std::optional<Var> global;
  std::optional<Var> action;
  std::optional<SequentialFrames> sequential;
};

struct PairScore {
  Var fused;
  std::vector<Var> per_space;
};

/// Frame indices for both visual heads of one video.
struct FrameSelection {
  std::vector<std::size_t> global;      // chunk-random
  std::vector<std::size_t> sequential;  // chunk-first
};

FrameSelection select_frames(const VideoFeature& video, std::size_t n_chunks, std::uint64_t seed);

/// The multi-space model bound to one tape.
class Model {
 public:
  Model(const ModelConfig& config, const ParamBinding& binding);

  const ModelConfig& config() const noexcept { return config_; }
  Tape& tape() const { return *tape_; }

  Var encode_text(const Tensor& token_vectors) const;
  /// g_m(phi) = W_m phi + b_m for an active space; throws for an inactive one.
  Var project_text(Var phi, Space space) const;
  SentenceEncoding encode_sentence(const Tensor& token_vectors) const;
  SentenceEncoding encode_phi(Var phi) const;

  VideoEncoding encode_video(const VideoFeature& video, const FrameSelection& frames) const;

  PairScore score(const VideoEncoding& video, const SentenceEncoding& sentence) const;

 private:
  ModelConfig config_;
  Tape* tape_;
  std::vector<Space> spaces_;
  GruVars gru_;
  std::map<Space, AffineVars> projections_;
  std::optional<AffineVars> global_head_;
  std::optional<SequentialVars> sequential_;
  Var gate_;
  Fuser fuser_;
};

}  // namespace mvse
