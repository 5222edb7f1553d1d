#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mvse {

/// One joint embedding space: a visual head paired with a text projection.
enum class Space : std::uint8_t { global = 0, sequential = 1, action = 2 };

std::string_view to_string(Space space);
/// Throws std::invalid_argument on an unknown tag.
Space parse_space(std::string_view tag);

/// single = {global}, dual-S = {global, sequential}, dual-I = {global, action},
/// triple = all three. Order within a set is fixed and defines gate columns.
enum class SpaceSet : std::uint8_t { single, dual_s, dual_i, triple };

std::string_view to_string(SpaceSet set);
SpaceSet parse_space_set(std::string_view name);
std::vector<Space> spaces_of(SpaceSet set);

enum class FuseMode : std::uint8_t { weighted, average };

std::string_view to_string(FuseMode mode);
FuseMode parse_fuse_mode(std::string_view name);

struct ModelDims {
  std::size_t n_chunks = 20;          // frames sampled per video
  std::size_t grid = 7;               // spatial grid side
  std::size_t global_channels = 2048; // per-frame global feature width
  std::size_t grid_channels = 2048;   // per-cell grid feature width
  std::size_t action_dim = 1024;      // action feature width
  std::size_t hidden = 512;           // GRU and LSTM state width
  std::size_t embed = 512;            // joint space width for global/sequential
  std::size_t token_dim = 300;        // token vector width
  std::size_t attention_dim = 512;    // width of the attention codes p and q

  static ModelDims full();
  static ModelDims small();
  static ModelDims tiny();
  /// Named preset: "full", "small" or "tiny". Throws std::invalid_argument otherwise.
  static ModelDims preset(std::string_view name);

  std::size_t grid_cells() const { return grid * grid; }
  std::size_t grid_flat() const { return grid * grid * grid_channels; }

  bool operator==(const ModelDims&) const = default;
};

struct ModelConfig {
  ModelDims dims;
  SpaceSet spaces = SpaceSet::dual_s;
  FuseMode fuse = FuseMode::weighted;
  bool attention = true;

  std::vector<Space> space_list() const { return spaces_of(spaces); }
  bool has(Space space) const;
  /// Throws std::invalid_argument on zero extents or a sequential space whose
  /// embed width differs from the hidden width.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace mvse
