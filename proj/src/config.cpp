#include "mvse/config.hpp"

#include <algorithm>
#include <stdexcept>

namespace mvse {

std::string_view to_string(Space space) {
  switch (space) {
    case Space::global: return "global";
    case Space::sequential: return "sequential";
    case Space::action: return "action";
  }
  return "?";
}

Space parse_space(std::string_view tag) {
  if (tag == "global") return Space::global;
  if (tag == "sequential") return Space::sequential;
  if (tag == "action") return Space::action;
  throw std::invalid_argument("unknown space tag: " + std::string(tag));
}

std::string_view to_string(SpaceSet set) {
  switch (set) {
    case SpaceSet::single: return "single";
    case SpaceSet::dual_s: return "dual-S";
    case SpaceSet::dual_i: return "dual-I";
    case SpaceSet::triple: return "triple";
  }
  return "?";
}

SpaceSet parse_space_set(std::string_view name) {
  if (name == "single") return SpaceSet::single;
  if (name == "dual-S" || name == "dual-s") return SpaceSet::dual_s;
  if (name == "dual-I" || name == "dual-i") return SpaceSet::dual_i;
  if (name == "triple") return SpaceSet::triple;
  throw std::invalid_argument("unknown space set: " + std::string(name) +
                              " (expected single, dual-S, dual-I, triple)");
}

std::vector<Space> spaces_of(SpaceSet set) {
  switch (set) {
    case SpaceSet::single: return {Space::global};
    case SpaceSet::dual_s: return {Space::global, Space::sequential};
    case SpaceSet::dual_i: return {Space::global, Space::action};
    case SpaceSet::triple: return {Space::global, Space::sequential, Space::action};
  }
  return {};
}

std::string_view to_string(FuseMode mode) {
  return mode == FuseMode::weighted ? "weighted" : "average";
}

FuseMode parse_fuse_mode(std::string_view name) {
  if (name == "weighted") return FuseMode::weighted;
  if (name == "average") return FuseMode::average;
  throw std::invalid_argument("unknown fuse mode: " + std::string(name) +
                              " (expected weighted or average)");
}

ModelDims ModelDims::full() { return ModelDims{}; }

ModelDims ModelDims::small() {
  ModelDims d;
  d.n_chunks = 4;
  d.grid = 2;
  d.global_channels = 32;
  d.grid_channels = 32;
  d.action_dim = 16;
  d.hidden = 16;
  d.embed = 16;
  d.token_dim = 16;
  d.attention_dim = 16;
  return d;
}

ModelDims ModelDims::tiny() {
  ModelDims d;
  d.n_chunks = 2;
  d.grid = 2;
  d.global_channels = 5;
  d.grid_channels = 3;
  d.action_dim = 4;
  d.hidden = 4;
  d.embed = 4;
  d.token_dim = 3;
  d.attention_dim = 4;
  return d;
}

ModelDims ModelDims::preset(std::string_view name) {
  if (name == "full") return full();
  if (name == "small") return small();
  if (name == "tiny") return tiny();
  throw std::invalid_argument("unknown preset: " + std::string(name) + " (expected tiny, small or full)");
}

bool ModelConfig::has(Space space) const {
  const auto list = space_list();
  return std::find(list.begin(), list.end(), space) != list.end();
}

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> extents[] = {
      {"n_chunks", dims.n_chunks},       {"grid", dims.grid},
      {"global_channels", dims.global_channels}, {"hidden", dims.hidden},
      {"embed", dims.embed},             {"token_dim", dims.token_dim},
  };
  for (const auto& [name, value] : extents) {
    if (value == 0) throw std::invalid_argument(std::string("dimension ") + name + " must be positive");
  }
  if (has(Space::sequential)) {
    if (dims.grid_channels == 0 || dims.attention_dim == 0) {
      throw std::invalid_argument("sequential space needs positive grid_channels and attention_dim");
    }
    if (dims.embed != dims.hidden) {
      throw std::invalid_argument("sequential space needs embed == hidden (the LSTM state is the embedding)");
    }
  }
  if (has(Space::action) && dims.action_dim == 0) {
    throw std::invalid_argument("action space needs positive action_dim");
  }
}

}  // namespace mvse
