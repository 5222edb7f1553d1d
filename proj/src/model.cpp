#include "mvse/model.hpp"

#include "mvse/seed.hpp"

namespace mvse {

namespace {

std::string projection_prefix(Space space) {
  return "text.proj." + std::string(to_string(space)) + ".";
}

std::size_t projection_width(const ModelConfig& config, Space space) {
  return space == Space::action ? config.dims.action_dim : config.dims.embed;
}

}  // namespace

std::vector<ParamSpec> model_param_specs(const ModelConfig& config) {
  config.validate();
  const auto& d = config.dims;
  std::vector<ParamSpec> specs = gru_param_specs("text.gru.", d.token_dim, d.hidden);
  auto append = [&specs](std::vector<ParamSpec> more) {
    specs.insert(specs.end(), more.begin(), more.end());
  };
  const auto spaces = config.space_list();
  for (Space space : spaces) {
    append(affine_param_specs(projection_prefix(space), projection_width(config, space), d.hidden));
  }
  append(affine_param_specs("visual.global.", d.embed, d.global_channels));
  if (config.has(Space::sequential)) {
    if (config.attention) append(attention_param_specs("visual.attention.", d));
    append(lstm_param_specs("visual.lstm.", d.grid_flat(), d.hidden));
  }
  append(gate_param_specs("gate.", spaces.size(), d.hidden));
  return specs;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  return ModelParams::initialize(model_param_specs(config), derive_seed(seed, 0x1417));
}

void check_params(const ModelConfig& config, const ModelParams& params) {
  const auto specs = model_param_specs(config);
  for (const auto& spec : specs) {
    if (!params.contains(spec.name)) {
      throw std::invalid_argument("parameters missing '" + spec.name + "' required by the " +
                                  std::string(to_string(config.spaces)) + " configuration");
    }
    if (params.at(spec.name).shape() != spec.shape) {
      throw std::invalid_argument("parameter '" + spec.name + "' has shape " +
                                  to_string(params.at(spec.name).shape()) + ", expected " +
                                  to_string(spec.shape));
    }
  }
  if (params.size() != specs.size()) {
    throw std::invalid_argument("parameters contain tensors not used by the " +
                                std::string(to_string(config.spaces)) + " configuration");
  }
}

FrameSelection select_frames(const VideoFeature& video, std::size_t n_chunks, std::uint64_t seed) {
  return FrameSelection{
      chunk_sample(video.frame_count(), n_chunks, SampleMode::random, seed),
      chunk_sample(video.frame_count(), n_chunks, SampleMode::first, seed),
  };
}

Model::Model(const ModelConfig& config, const ParamBinding& binding)
    : config_(config),
      tape_(&binding.tape()),
      spaces_(config.space_list()),
      gru_(bind_gru(binding, "text.gru.")),
      gate_(binding["gate.W_t"]),
      fuser_(config.fuse, spaces_.size()) {
  config_.validate();
  for (Space space : spaces_) projections_.emplace(space, bind_affine(binding, projection_prefix(space)));
  global_head_ = bind_affine(binding, "visual.global.");
  if (config_.has(Space::sequential)) {
    SequentialVars seq;
    if (config_.attention) seq.attention = bind_attention(binding, "visual.attention.");
    seq.lstm = bind_lstm(binding, "visual.lstm.");
    sequential_ = seq;
  }
}

Var Model::encode_text(const Tensor& token_vectors) const {
  return gru_encode(*tape_, token_vectors, gru_);
}

Var Model::project_text(Var phi, Space space) const {
  auto it = projections_.find(space);
  if (it == projections_.end()) {
    throw SpaceUnavailable("space unavailable: " + std::string(to_string(space)) +
                           " is not part of the " + std::string(to_string(config_.spaces)) +
                           " model");
  }
  return affine(it->second, phi);
}

SentenceEncoding Model::encode_sentence(const Tensor& token_vectors) const {
  return encode_phi(encode_text(token_vectors));
}

SentenceEncoding Model::encode_phi(Var phi) const {
  SentenceEncoding out;
  out.phi = phi;
  for (Space space : spaces_) out.text.push_back(project_text(phi, space));
  out.weights = fuser_.weights(*tape_, phi, gate_);
  if (sequential_ && config_.attention) {
    out.attention_code = attention_sentence_code(phi, sequential_->attention);
  }
  return out;
}

VideoEncoding Model::encode_video(const VideoFeature& video, const FrameSelection& frames) const {
  VideoEncoding out;
  out.global = global_embed(*tape_, video, frames.global, *global_head_);
  if (sequential_) {
    out.sequential = prepare_sequential(*tape_, video, frames.sequential, *sequential_, config_.attention);
  }
  if (config_.has(Space::action)) out.action = tape_->constant(action_embed(video));
  return out;
}

PairScore Model::score(const VideoEncoding& video, const SentenceEncoding& sentence) const {
  PairScore out;
  for (std::size_t m = 0; m < spaces_.size(); ++m) {
    Var visual;
    switch (spaces_[m]) {
      case Space::global:
        visual = *video.global;
        break;
      case Space::sequential:
        visual = sequential_embed(*tape_, *video.sequential,
                                  config_.attention ? sentence.attention_code : sentence.phi,
                                  *sequential_, config_.attention);
        break;
      case Space::action:
        visual = *video.action;
        break;
    }
    out.per_space.push_back(space_similarity(visual, sentence.text[m]));
  }
  out.fused = fuse(out.per_space, sentence.weights);
  return out;
}

}  // namespace mvse
