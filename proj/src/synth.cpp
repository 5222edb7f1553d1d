#include "mvse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "mvse/seed.hpp"

namespace mvse {

namespace {

constexpr std::array<const char*, 8> kFillers = {"a", "the", "with", "and", "video", "of", "shows", "is"};

enum Stream : std::uint64_t { kCodes = 1, kCodebooks, kFeatures, kTable, kSentences };

double quantize(double x) { return static_cast<double>(static_cast<float>(x)); }

std::string slot_token(std::size_t slot, std::size_t value, std::size_t synonym) {
  return "s" + std::to_string(slot) + "v" + std::to_string(value) +
         static_cast<char>('a' + static_cast<int>(synonym));
}

Tensor gaussian(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = normal(rng);
  return t;
}

}  // namespace

std::string_view to_string(SentenceFocus focus) {
  return focus == SentenceFocus::all ? "all" : "split";
}

SentenceFocus parse_sentence_focus(std::string_view name) {
  if (name == "all") return SentenceFocus::all;
  if (name == "split") return SentenceFocus::split;
  throw std::invalid_argument("unknown sentence focus: " + std::string(name) + " (expected all or split)");
}

void SynthConfig::validate() const {
  double total = 0.0;
  for (double w : split) {
    if (w < 0.0 || !std::isfinite(w)) throw std::invalid_argument("split weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split weights must sum to 1 (got " + std::to_string(total) + ")");
  }
  if (train_videos + test_videos < 2) throw std::invalid_argument("need at least 2 videos");
  if (sentences_per_video == 0) throw std::invalid_argument("need at least 1 sentence per video");
  if (slots == 0 || values_per_slot == 0 || synonyms == 0 || synonyms > 26) {
    throw std::invalid_argument("slots, values_per_slot and synonyms (<= 26) must be positive");
  }
  if (noise < 0.0) throw std::invalid_argument("noise must be nonnegative");
  if (dims.global_channels == 0 || dims.token_dim == 0 || dims.n_chunks == 0) {
    throw std::invalid_argument("global_channels, token_dim and n_chunks must be positive");
  }
  const auto counts = allocate_slots(split, slots);
  if (counts[1] && (dims.grid == 0 || dims.grid_channels == 0)) {
    throw std::invalid_argument("sequential slots need a grid");
  }
  if (counts[2] && dims.action_dim == 0) throw std::invalid_argument("action slots need action_dim > 0");
  const double combos = std::pow(static_cast<double>(values_per_slot), static_cast<double>(slots));
  if (combos < static_cast<double>(train_videos + test_videos)) {
    throw std::invalid_argument("values_per_slot^slots is smaller than the number of videos");
  }
}

std::array<std::size_t, 3> allocate_slots(const std::array<double, 3>& split, std::size_t slots) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t used = 0;
  for (std::size_t m = 0; m < 3; ++m) {
    const double exact = split[m] * static_cast<double>(slots);
    counts[m] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[m] = exact - static_cast<double>(counts[m]);
    used += counts[m];
  }
  while (used < slots) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < 3; ++m) {
      if (remainder[m] > remainder[best] + 1e-12) best = m;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++used;
  }
  return counts;
}

SynthOutput synth_generate(const SynthConfig& config) {
  config.validate();
  const auto& dims = config.dims;
  const std::size_t frames = config.frames ? config.frames : dims.n_chunks;
  const std::size_t n_videos = config.train_videos + config.test_videos;
  const auto counts = allocate_slots(config.split, config.slots);
  const bool has_grid = dims.grid > 0 && dims.grid_channels > 0;
  const bool has_action = dims.action_dim > 0;

  SynthOutput out;
  SynthTruth& truth = out.truth;
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t k = 0; k < counts[m]; ++k) truth.slot_space.push_back(static_cast<Space>(m));
  }
  std::vector<std::size_t> sequential_slots;
  for (std::size_t k = 0; k < config.slots; ++k) {
    if (truth.slot_space[k] == Space::sequential) sequential_slots.push_back(k);
  }

  // Distinct latent codes.
  {
    std::mt19937_64 rng(derive_seed(config.seed, kCodes));
    std::uniform_int_distribution<std::size_t> value(0, config.values_per_slot - 1);
    std::set<std::vector<std::size_t>> seen;
    while (truth.codes.size() < n_videos) {
      std::vector<std::size_t> code(config.slots);
      for (auto& c : code) c = value(rng);
      if (seen.insert(code).second) truth.codes.push_back(std::move(code));
    }
  }

  {
    std::mt19937_64 rng(derive_seed(config.seed, kCodebooks));
    for (std::size_t k = 0; k < config.slots; ++k) {
      const bool global = truth.slot_space[k] == Space::global;
      const bool action = truth.slot_space[k] == Space::action;
      truth.global_codebook.push_back(global ? gaussian({config.values_per_slot, dims.global_channels}, rng)
                                             : Tensor());
      truth.action_codebook.push_back(action ? gaussian({config.values_per_slot, dims.action_dim}, rng)
                                             : Tensor());
    }
    if (has_grid) truth.grid_codebook = gaussian({config.values_per_slot, dims.grid_channels}, rng);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    truth.frame_slot.push_back(sequential_slots.empty()
                                   ? -1
                                   : static_cast<int>(sequential_slots[t % sequential_slots.size()]));
  }

  Dataset& data = out.dataset;
  data.frames = frames;
  data.global_channels = dims.global_channels;
  data.grid = has_grid ? dims.grid : 0;
  data.grid_channels = has_grid ? dims.grid_channels : 0;
  data.action_dim = has_action ? dims.action_dim : 0;

  {
    std::mt19937_64 rng(derive_seed(config.seed, kFeatures));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> gain(0.5, 1.5);
    char id[32];
    for (std::size_t i = 0; i < n_videos; ++i) {
      const auto& code = truth.codes[i];
      VideoFeature v;
      std::snprintf(id, sizeof id, "v%04zu", i);
      v.id = id;

      std::vector<double> base(dims.global_channels, 0.0);
      for (std::size_t k = 0; k < config.slots; ++k) {
        if (truth.slot_space[k] != Space::global) continue;
        const auto row = truth.global_codebook[k].row(code[k]);
        for (std::size_t c = 0; c < base.size(); ++c) base[c] += row[c];
      }
      v.global_frames = Tensor({frames, dims.global_channels});
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < base.size(); ++c) {
          v.global_frames.at(t, c) = quantize(base[c] + config.noise * normal(rng));
        }
      }

      if (has_grid) {
        const std::size_t cells = dims.grid_cells();
        std::vector<double> gains(cells);
        for (auto& g : gains) g = gain(rng);
        v.grid_frames = Tensor({frames, dims.grid, dims.grid, dims.grid_channels});
        auto& grid = v.grid_frames.storage();
        for (std::size_t t = 0; t < frames; ++t) {
          const int slot = truth.frame_slot[t];
          for (std::size_t cell = 0; cell < cells; ++cell) {
            for (std::size_t c = 0; c < dims.grid_channels; ++c) {
              double signal = 0.0;
              if (slot >= 0) signal = gains[cell] * truth.grid_codebook.at(code[static_cast<std::size_t>(slot)], c);
              grid[(t * cells + cell) * dims.grid_channels + c] = quantize(signal + config.noise * normal(rng));
            }
          }
        }
      }

      if (has_action) {
        v.action = Tensor({dims.action_dim});
        for (std::size_t k = 0; k < config.slots; ++k) {
          if (truth.slot_space[k] != Space::action) continue;
          const auto row = truth.action_codebook[k].row(code[k]);
          for (std::size_t c = 0; c < dims.action_dim; ++c) v.action[c] += row[c];
        }
        for (auto& x : v.action.storage()) x = quantize(x + config.noise * normal(rng));
      }
      data.videos.push_back(std::move(v));
    }
  }

  // Vocabulary: fillers, then one token per (slot, value, synonym).
  std::vector<std::string> tokens(kFillers.begin(), kFillers.end());
  truth.token_meaning.assign(kFillers.size(), {-1, -1});
  for (std::size_t k = 0; k < config.slots; ++k) {
    for (std::size_t v = 0; v < config.values_per_slot; ++v) {
      for (std::size_t s = 0; s < config.synonyms; ++s) {
        tokens.push_back(slot_token(k, v, s));
        truth.token_meaning.emplace_back(static_cast<int>(k), static_cast<int>(v));
      }
    }
  }
  {
    auto table = EmbeddingTable::random(tokens, dims.token_dim, derive_seed(config.seed, kTable));
    Tensor vectors = table.vectors();
    for (auto& x : vectors.storage()) x = quantize(x);
    data.table = EmbeddingTable(std::move(tokens), std::move(vectors), OovPolicy::zero_vector);
  }

  std::vector<std::size_t> global_slots;
  for (std::size_t k = 0; k < config.slots; ++k) {
    if (truth.slot_space[k] == Space::global) global_slots.push_back(k);
  }
  std::vector<std::size_t> all_slots(config.slots);
  std::iota(all_slots.begin(), all_slots.end(), 0);

  {
    std::mt19937_64 rng(derive_seed(config.seed, kSentences));
    std::uniform_int_distribution<std::size_t> synonym(0, config.synonyms - 1);
    std::uniform_int_distribution<std::size_t> filler_count(0, config.max_fillers);
    std::uniform_int_distribution<std::size_t> filler(0, kFillers.size() - 1);
    const std::uint32_t first_slot_token = static_cast<std::uint32_t>(kFillers.size());
    for (std::size_t i = 0; i < n_videos; ++i) {
      for (std::size_t j = 0; j < config.sentences_per_video; ++j) {
        std::vector<std::size_t> mentioned = all_slots;
        if (config.focus == SentenceFocus::split) {
          const auto& chosen = (j % 2 == 0) ? global_slots : sequential_slots;
          if (!chosen.empty()) mentioned = chosen;
        }
        std::shuffle(mentioned.begin(), mentioned.end(), rng);
        std::vector<std::uint32_t> sentence;
        for (auto k : mentioned) {
          const auto v = truth.codes[i][k];
          sentence.push_back(first_slot_token + static_cast<std::uint32_t>(
                                                    (k * config.values_per_slot + v) * config.synonyms +
                                                    synonym(rng)));
        }
        const auto extra = filler_count(rng);
        for (std::size_t f = 0; f < extra; ++f) {
          std::uniform_int_distribution<std::size_t> pos(0, sentence.size());
          sentence.insert(sentence.begin() + static_cast<std::ptrdiff_t>(pos(rng)),
                          static_cast<std::uint32_t>(filler(rng)));
        }
        data.sentences.push_back(std::move(sentence));
      }
    }
  }

  auto fill_manifest = [&](Manifest& m, const char* split, std::size_t begin, std::size_t end) {
    m.split = split;
    for (std::size_t i = begin; i < end; ++i) {
      Manifest::Entry e{data.videos[i].id, {}};
      for (std::size_t j = 0; j < config.sentences_per_video; ++j) {
        const auto sid = static_cast<std::uint32_t>(i * config.sentences_per_video + j);
        e.sentences.push_back(sid);
        if (config.focus == SentenceFocus::split) {
          m.groups[j % 2 == 0 ? "global" : "sequential"].push_back(sid);
        }
      }
      m.videos.push_back(std::move(e));
    }
  };
  fill_manifest(out.train, "train", 0, config.train_videos);
  fill_manifest(out.test, "test", config.train_videos, n_videos);
  data.validate();
  return out;
}

}  // namespace mvse
