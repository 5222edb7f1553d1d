#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvse/aggregation.hpp"
#include "mvse/data_io.hpp"
#include "mvse/model.hpp"

namespace mvse {

struct RankedVideo {
  std::string video_id;
  double similarity = 0.0;
  std::vector<double> per_space;
};

struct RankingResult {
  std::string query_id;
  std::vector<RankedVideo> ranking;  // descending similarity, ascending id on ties
  std::vector<double> weights;       // gate weights of the query sentence
  std::size_t rank_of_ground_truth = 0;
};

/// Orders `items` (descending similarity, then ascending video id) and locates
/// the ground truth. Throws std::invalid_argument when it is absent.
RankingResult rank_scored(std::string query_id, std::vector<RankedVideo> items,
                          const std::string& ground_truth, std::vector<double> weights = {});

struct QueryScores {
  std::vector<double> fused;  // one per gallery video
  std::vector<std::vector<double>> per_space;  // [video][space]
  std::vector<double> weights;
};

/// Query-independent encodings of gallery videos, computed once.
struct GalleryVideo {
  const VideoFeature* video = nullptr;
  std::optional<Tensor> global;
  std::optional<Tensor> action;
  std::vector<Tensor> grids;
  std::vector<Tensor> codes;
};

/// Read-only model snapshot for ranking. Gate weights depend only on the
/// sentence, so they are computed once per query.
class Retriever {
 public:
  Retriever(ModelConfig config, ModelParams params, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const ModelParams& params() const noexcept { return params_; }

  std::vector<GalleryVideo> prepare(std::span<const VideoFeature* const> gallery) const;

  /// Fused and per-space similarity of one sentence against every gallery video.
  QueryScores score(const Tensor& token_vectors, std::span<const GalleryVideo> gallery) const;

  /// Scores every gallery video against one sentence (token vectors [T, E]).
  RankingResult rank_gallery(const Tensor& token_vectors, std::span<const GalleryVideo> gallery,
                             const std::string& ground_truth, std::string query_id = {}) const;

  /// Like rank_gallery but without a ground truth (rank_of_ground_truth stays 0).
  RankingResult rank_all(const Tensor& token_vectors, std::span<const GalleryVideo> gallery,
                         std::string query_id = {}) const;

 private:
  ModelConfig config_;
  ModelParams params_;
  std::uint64_t seed_;
};

/// Fraction of ranks <= k. Throws std::invalid_argument for empty input, k == 0
/// or a rank of 0.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);
/// Median; mean of the two middle values for an even count.
double median_rank(std::span<const std::size_t> ranks);

struct Metrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;  // fractions in [0, 1]
  double median = 0.0;
};

Metrics compute_metrics(std::span<const std::size_t> ranks);

struct Query {
  std::string id;
  std::size_t sentence = 0;
  std::string ground_truth;
  std::string group;  // empty when the manifest defines no groups
};

using QueryScorer = std::function<QueryScores(const Query&)>;

struct EvalReport {
  Metrics metrics;
  std::vector<std::size_t> ranks;
  GateStatistics gates;
  std::map<std::string, GateStatistics> group_gates;
  std::map<std::string, Metrics> group_metrics;
};

/// Runs every query against `gallery_ids` through `scorer`.
EvalReport evaluate(std::span<const Query> queries, std::span<const std::string> gallery_ids,
                    const QueryScorer& scorer, const std::vector<Space>& spaces);

/// One query per (video, sentence) entry of `split`, gallery = the split's videos.
std::vector<Query> split_queries(const Manifest& split);

EvalReport evaluate(const Dataset& dataset, const Manifest& split, const Retriever& retriever);

struct MetricsRow {
  std::string method;
  Metrics metrics;
};

/// R@k printed as percentages.
void write_metrics_table(std::ostream& out, std::span<const MetricsRow> rows);
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

}  // namespace mvse
