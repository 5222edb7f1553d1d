#include "mvse/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "mvse/seed.hpp"

namespace mvse {

std::string_view to_string(NegativeMode mode) {
  return mode == NegativeMode::sum_all ? "sum-all" : "hardest";
}

NegativeMode parse_negative_mode(std::string_view name) {
  if (name == "sum-all") return NegativeMode::sum_all;
  if (name == "hardest") return NegativeMode::hardest;
  throw std::invalid_argument("unknown negative mode: " + std::string(name) +
                              " (expected sum-all or hardest)");
}

void TripletConfig::validate() const {
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be positive");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be finite and nonnegative");
  }
}

TripletLosses triplet_losses(double s_pos, double s_neg_sentence, double s_neg_video, double margin) {
  return {std::max(0.0, margin - s_pos + s_neg_sentence), std::max(0.0, margin - s_pos + s_neg_video)};
}

namespace {

void check_square(std::size_t n, const std::vector<std::vector<Var>>& similarity) {
  if (n < 2) throw std::invalid_argument("batch_loss: batch needs at least two pairs");
  for (const auto& row : similarity) {
    if (row.size() != n) throw ShapeError("batch_loss: similarity matrix must be square");
  }
}

/// argmax over j != anchor of value(j); lowest index wins ties.
template <typename Fn>
std::size_t hardest_index(std::size_t n, std::size_t anchor, Fn value) {
  std::size_t best = anchor == 0 ? 1 : 0;
  for (std::size_t j = best + 1; j < n; ++j) {
    if (j != anchor && value(j) > value(best)) best = j;
  }
  return best;
}

}  // namespace

Var batch_loss(Tape& tape, const std::vector<std::vector<Var>>& similarity, double margin,
               NegativeMode mode) {
  const std::size_t n = similarity.size();
  check_square(n, similarity);
  std::vector<Var> terms;
  auto hinge_term = [&](Var positive, Var negative) {
    // [margin - s_pos + s_neg]_+
    Var slack = sub(negative, positive);
    terms.push_back(hinge(add(slack, tape.constant(Tensor::scalar(margin)))));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Var positive = similarity[i][i];
    if (mode == NegativeMode::sum_all) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        hinge_term(positive, similarity[i][j]);
        hinge_term(positive, similarity[j][i]);
      }
    } else {
      const auto js = hardest_index(n, i, [&](std::size_t j) { return similarity[i][j].item(); });
      const auto jv = hardest_index(n, i, [&](std::size_t j) { return similarity[j][i].item(); });
      hinge_term(positive, similarity[i][js]);
      hinge_term(positive, similarity[jv][i]);
    }
  }
  return sum(concat(terms));
}

double kink_distance(const std::vector<std::vector<double>>& s, double margin, NegativeMode mode) {
  const std::size_t n = s.size();
  double nearest = std::numeric_limits<double>::infinity();
  auto consider = [&](double pos, double neg) { nearest = std::min(nearest, std::abs(margin - pos + neg)); };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      consider(s[i][i], s[i][j]);
      consider(s[i][i], s[j][i]);
    }
    if (mode == NegativeMode::hardest) {
      // gap between best and runner-up negatives
      for (int direction = 0; direction < 2; ++direction) {
        std::vector<double> negatives;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) negatives.push_back(direction == 0 ? s[i][j] : s[j][i]);
        }
        std::sort(negatives.rbegin(), negatives.rend());
        if (negatives.size() > 1) nearest = std::min(nearest, negatives[0] - negatives[1]);
      }
    }
  }
  return nearest;
}

std::vector<std::vector<Var>> batch_similarity(const Model& model, const Dataset& dataset,
                                               std::span<const TrainingPair> batch,
                                               std::uint64_t frame_seed_value) {
  const std::size_t n = batch.size();
  std::vector<VideoEncoding> videos;
  std::vector<SentenceEncoding> sentences;
  for (const auto& pair : batch) {
    const auto& video = dataset.videos.at(pair.video);
    const auto frames =
        select_frames(video, model.config().dims.n_chunks, derive_seed(frame_seed_value, 0, video.id));
    videos.push_back(model.encode_video(video, frames));
    sentences.push_back(model.encode_sentence(lookup(dataset.sentences.at(pair.sentence), dataset.table)));
  }
  std::vector<std::vector<Var>> similarity(n, std::vector<Var>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) similarity[i][j] = model.score(videos[i], sentences[j]).fused;
  }
  return similarity;
}

Var batch_loss(const Model& model, const Dataset& dataset, std::span<const TrainingPair> batch,
               const TripletConfig& config, std::uint64_t frame_seed_value,
               std::vector<std::vector<double>>* similarity_out) {
  const std::size_t n = batch.size();
  if (n < 2) throw std::invalid_argument("batch_loss: batch needs at least two pairs");
  const auto similarity = batch_similarity(model, dataset, batch, frame_seed_value);
  if (similarity_out) {
    similarity_out->assign(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) (*similarity_out)[i][j] = similarity[i][j].item();
    }
  }
  return batch_loss(model.tape(), similarity, config.margin, config.negatives);
}

std::uint64_t frame_seed(std::uint64_t seed, std::size_t epoch) {
  return derive_seed(seed, 0x5eed0000ULL + epoch);
}

std::vector<std::vector<TrainingPair>> epoch_batches(const Dataset& dataset, const Manifest& split,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     std::size_t epoch) {
  std::mt19937_64 rng(derive_seed(seed, 0xba7c0000ULL + epoch));
  struct Item {
    std::size_t video;
    std::vector<std::uint32_t> sentences;
  };
  std::vector<Item> items;
  std::size_t rounds = 0;
  for (const auto& entry : split.videos) {
    if (entry.sentences.empty()) continue;
    Item item{dataset.video_index(entry.video_id), entry.sentences};
    std::shuffle(item.sentences.begin(), item.sentences.end(), rng);
    rounds = std::max(rounds, item.sentences.size());
    items.push_back(std::move(item));
  }
  std::vector<std::vector<TrainingPair>> batches;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<TrainingPair> round;
    for (const auto& item : items) {
      round.push_back({item.video, item.sentences[r % item.sentences.size()]});
    }
    std::shuffle(round.begin(), round.end(), rng);
    for (std::size_t start = 0; start < round.size(); start += batch_size) {
      const std::size_t end = std::min(round.size(), start + batch_size);
      if (end - start < 2) continue;
      batches.emplace_back(round.begin() + static_cast<std::ptrdiff_t>(start),
                           round.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

TrainResult train(const Dataset& dataset, const Manifest& split, const ModelConfig& model_config,
                  const TripletConfig& config, const ModelParams* initial,
                  const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (split.videos.empty()) throw std::invalid_argument("train: empty split");
  split.validate(dataset);
  for (Space space : model_config.space_list()) {
    if (!dataset.supports(space)) {
      throw SpaceUnavailable("space unavailable: dataset has no features for " + std::string(to_string(space)));
    }
  }

  TrainResult result;
  result.params = initial ? *initial : init_params(model_config, config.seed);
  check_params(model_config, result.params);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = epoch_batches(dataset, split, config.batch_size, config.seed, epoch);
    if (batches.empty()) throw std::invalid_argument("train: split yields no batch of two or more pairs");
    const auto fseed = frame_seed(config.seed, epoch);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      ParamBinding binding(tape, result.params, true);
      Model model(model_config, binding);
      Var loss = batch_loss(model, dataset, batches[b], config, fseed);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (videos";
        for (const auto& pair : batches[b]) msg << ' ' << dataset.videos[pair.video].id;
        msg << ')';
        throw NonFiniteLoss(msg.str());
      }
      tape.backward(loss);
      sgd_step(result.params, binding.gradients(), config.learning_rate);
      total += value;
    }
    result.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

std::map<std::string, std::string> triplet_echo(const TripletConfig& config) {
  auto num = [](double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  };
  return {
      {"train.margin", num(config.margin)},
      {"train.negatives", std::string(to_string(config.negatives))},
      {"train.learning_rate", num(config.learning_rate)},
      {"train.epochs", std::to_string(config.epochs)},
      {"train.batch_size", std::to_string(config.batch_size)},
      {"train.seed", std::to_string(config.seed)},
  };
}

}  // namespace mvse
