#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mvse/config.hpp"
#include "mvse/data_io.hpp"

namespace mvse {

/// Which slots a sentence mentions.
enum class SentenceFocus : std::uint8_t {
  all,    // every slot of the video's code
  split,  // even sentences: global-space slots only; odd: sequential-space slots only
};

std::string_view to_string(SentenceFocus focus);
SentenceFocus parse_sentence_focus(std::string_view name);

/// Planted-correlation corpus. Every video has a latent code of `slots`
/// categorical values. Slots are divided among the global, sequential and
/// action spaces in proportion to `split`; each space's features carry only
/// its own slots. Sentences name slot values through per-value synonym tokens.
struct SynthConfig {
  ModelDims dims = ModelDims::small();
  std::size_t frames = 0;  // 0: use dims.n_chunks
  std::size_t train_videos = 200;
  std::size_t test_videos = 50;
  std::size_t sentences_per_video = 2;
  std::array<double, 3> split = {1.0, 0.0, 0.0};  // global, sequential, action
  double noise = 0.05;
  std::size_t slots = 4;
  std::size_t values_per_slot = 5;
  std::size_t synonyms = 2;
  std::size_t max_fillers = 2;
  SentenceFocus focus = SentenceFocus::all;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument (e.g. split weights negative or not summing to 1).
  void validate() const;
};

/// Generative ground truth, kept for probes and tests.
struct SynthTruth {
  std::vector<std::vector<std::size_t>> codes;  // [video][slot] -> value
  std::vector<Space> slot_space;                // owning space of each slot
  std::vector<Tensor> global_codebook;          // per slot: [values, C_g]
  Tensor grid_codebook;                         // [values, C_s], shared by sequential slots
  std::vector<Tensor> action_codebook;          // per slot: [values, C_a]
  /// For each vocabulary row: (slot, value), or (-1, -1) for filler words.
  std::vector<std::pair<int, int>> token_meaning;
  /// Sequential slot carried by each frame, or -1 when there is none.
  std::vector<int> frame_slot;
};

struct SynthOutput {
  Dataset dataset;
  Manifest train;
  Manifest test;
  SynthTruth truth;
};

SynthOutput synth_generate(const SynthConfig& config);

/// Slot count per space from the split weights (largest remainder rounding).
std::array<std::size_t, 3> allocate_slots(const std::array<double, 3>& split, std::size_t slots);

}  // namespace mvse
