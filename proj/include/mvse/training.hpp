#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvse/data_io.hpp"
#include "mvse/model.hpp"

namespace mvse {

enum class NegativeMode : std::uint8_t { sum_all, hardest };

std::string_view to_string(NegativeMode mode);
NegativeMode parse_negative_mode(std::string_view name);

struct TripletConfig {
  double margin = 0.2;
  NegativeMode negatives = NegativeMode::hardest;
  double learning_rate = 0.05;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TripletLosses {
  double sentence = 0.0;  // negative sentence for the anchor video
  double video = 0.0;     // negative video for the anchor sentence
};

/// max(0, margin - s_pos + s_neg) for both directions.
TripletLosses triplet_losses(double s_pos, double s_neg_sentence, double s_neg_video, double margin);

/// Loss over a similarity matrix, similarity[i][j] = s(video i, sentence j),
/// positives on the diagonal.
///   sum_all: sum_i sum_{j != i} [m - S_ii + S_ij]_+ + [m - S_ii + S_ji]_+
///   hardest: sum_i [m - S_ii + max_{j != i} S_ij]_+ + [m - S_ii + max_{j != i} S_ji]_+
/// Ties in the max go to the lowest index. Throws std::invalid_argument for
/// fewer than two pairs.
Var batch_loss(Tape& tape, const std::vector<std::vector<Var>>& similarity, double margin,
               NegativeMode mode);

/// Smallest distance of any active hinge argument from its kink, and of any
/// hardest-negative choice from a tie. Finite-difference checks need this away from 0.
double kink_distance(const std::vector<std::vector<double>>& similarity, double margin,
                     NegativeMode mode);

/// One (video, sentence) training pair, as indices into a Dataset.
struct TrainingPair {
  std::size_t video;
  std::size_t sentence;

  bool operator==(const TrainingPair&) const = default;
};

/// similarity[i][j] = fused s(video of pair i, sentence of pair j) on `model`'s tape.
std::vector<std::vector<Var>> batch_similarity(const Model& model, const Dataset& dataset,
                                               std::span<const TrainingPair> batch,
                                               std::uint64_t frame_seed);

/// Builds the batch similarity matrix on `model`'s tape and returns the loss.
/// `frame_seed` feeds per-video frame sampling.
Var batch_loss(const Model& model, const Dataset& dataset, std::span<const TrainingPair> batch,
               const TripletConfig& config, std::uint64_t frame_seed,
               std::vector<std::vector<double>>* similarity_out = nullptr);

/// Mini-batches for one epoch: each round pairs every video with one of its
/// sentences; rounds are shuffled and cut into batches of distinct videos.
/// A trailing batch smaller than two is dropped.
std::vector<std::vector<TrainingPair>> epoch_batches(const Dataset& dataset, const Manifest& split,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     std::size_t epoch);

/// Frame-sampling seed for (run seed, epoch).
std::uint64_t frame_seed(std::uint64_t seed, std::size_t epoch);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Plain SGD over `split`. Fully determined by `config.seed`. Starts from
/// `initial` when given, otherwise from seeded initialization.
TrainResult train(const Dataset& dataset, const Manifest& split, const ModelConfig& model,
                  const TripletConfig& config, const ModelParams* initial = nullptr,
                  const EpochCallback& on_epoch = {});

std::map<std::string, std::string> triplet_echo(const TripletConfig& config);

}  // namespace mvse
