#include "mvse/retrieval.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "mvse/seed.hpp"

namespace mvse {

namespace {
constexpr std::uint64_t kEvalFrames = 0xe7a1;
}

RankingResult rank_scored(std::string query_id, std::vector<RankedVideo> items,
                          const std::string& ground_truth, std::vector<double> weights) {
  if (items.empty()) throw std::invalid_argument("rank_gallery: empty gallery");
  std::sort(items.begin(), items.end(), [](const RankedVideo& a, const RankedVideo& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.video_id < b.video_id;
  });
  RankingResult result{std::move(query_id), std::move(items), std::move(weights), 0};
  for (std::size_t i = 0; i < result.ranking.size(); ++i) {
    if (result.ranking[i].video_id == ground_truth) {
      result.rank_of_ground_truth = i + 1;
      break;
    }
  }
  if (result.rank_of_ground_truth == 0) {
    throw std::invalid_argument("rank_gallery: ground truth '" + ground_truth + "' not in gallery");
  }
  return result;
}

Retriever::Retriever(ModelConfig config, ModelParams params, std::uint64_t seed)
    : config_(std::move(config)), params_(std::move(params)), seed_(seed) {
  check_params(config_, params_);
}

std::vector<GalleryVideo> Retriever::prepare(std::span<const VideoFeature* const> gallery) const {
  std::vector<GalleryVideo> out;
  out.reserve(gallery.size());
  for (const VideoFeature* video : gallery) {
    Tape tape;
    ParamBinding binding(tape, params_, false);
    Model model(config_, binding);
    const auto frames = select_frames(*video, config_.dims.n_chunks, derive_seed(seed_, kEvalFrames, video->id));
    const auto enc = model.encode_video(*video, frames);
    GalleryVideo g;
    g.video = video;
    if (enc.global) g.global = enc.global->value();
    if (enc.action) g.action = enc.action->value();
    if (enc.sequential) {
      for (const auto& v : enc.sequential->grids) g.grids.push_back(v.value());
      for (const auto& v : enc.sequential->codes) g.codes.push_back(v.value());
    }
    out.push_back(std::move(g));
  }
  return out;
}

QueryScores Retriever::score(const Tensor& token_vectors, std::span<const GalleryVideo> gallery) const {
  Tape tape;
  ParamBinding binding(tape, params_, false);
  Model model(config_, binding);
  const auto sentence = model.encode_sentence(token_vectors);
  QueryScores out;
  out.weights = sentence.weights.value().storage();
  for (const auto& g : gallery) {
    VideoEncoding enc;
    if (g.global) enc.global = tape.constant(*g.global);
    if (g.action) enc.action = tape.constant(*g.action);
    if (config_.has(Space::sequential)) {
      SequentialFrames frames;
      for (const auto& t : g.grids) frames.grids.push_back(tape.constant(t));
      for (const auto& t : g.codes) frames.codes.push_back(tape.constant(t));
      enc.sequential = std::move(frames);
    }
    const auto pair = model.score(enc, sentence);
    out.fused.push_back(pair.fused.item());
    std::vector<double> per_space;
    for (const auto& s : pair.per_space) per_space.push_back(s.item());
    out.per_space.push_back(std::move(per_space));
  }
  return out;
}

namespace {

std::vector<RankedVideo> to_items(const QueryScores& scores, std::span<const std::string> ids) {
  if (scores.fused.size() != ids.size()) {
    throw std::logic_error("scorer returned " + std::to_string(scores.fused.size()) +
                           " scores for a gallery of " + std::to_string(ids.size()));
  }
  std::vector<RankedVideo> items;
  items.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    items.push_back({ids[i], scores.fused[i],
                     i < scores.per_space.size() ? scores.per_space[i] : std::vector<double>{}});
  }
  return items;
}

std::vector<std::string> gallery_ids(std::span<const GalleryVideo> gallery) {
  std::vector<std::string> ids;
  for (const auto& g : gallery) ids.push_back(g.video->id);
  return ids;
}

}  // namespace

RankingResult Retriever::rank_gallery(const Tensor& token_vectors, std::span<const GalleryVideo> gallery,
                                      const std::string& ground_truth, std::string query_id) const {
  if (gallery.empty()) throw std::invalid_argument("rank_gallery: empty gallery");
  auto scores = score(token_vectors, gallery);
  return rank_scored(std::move(query_id), to_items(scores, gallery_ids(gallery)), ground_truth,
                     std::move(scores.weights));
}

RankingResult Retriever::rank_all(const Tensor& token_vectors, std::span<const GalleryVideo> gallery,
                                  std::string query_id) const {
  if (gallery.empty()) throw std::invalid_argument("rank_gallery: empty gallery");
  auto scores = score(token_vectors, gallery);
  auto ids = gallery_ids(gallery);
  auto result = rank_scored(std::move(query_id), to_items(scores, ids), ids.front(),
                            std::move(scores.weights));
  result.rank_of_ground_truth = 0;
  return result;
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: no ranks");
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be at least 1");
  std::size_t hits = 0;
  for (auto r : ranks) {
    if (r == 0) throw std::invalid_argument("recall_at_k: ranks start at 1");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double median_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("median_rank: no ranks");
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return static_cast<double>(sorted[mid]);
  return (static_cast<double>(sorted[mid - 1]) + static_cast<double>(sorted[mid])) / 2.0;
}

Metrics compute_metrics(std::span<const std::size_t> ranks) {
  return {recall_at_k(ranks, 1), recall_at_k(ranks, 5), recall_at_k(ranks, 10), median_rank(ranks)};
}

EvalReport evaluate(std::span<const Query> queries, std::span<const std::string> gallery_ids,
                    const QueryScorer& scorer, const std::vector<Space>& spaces) {
  if (queries.empty()) throw std::invalid_argument("evaluate: no queries");
  EvalReport report;
  report.gates = GateStatistics(spaces);
  std::map<std::string, std::vector<std::size_t>> group_ranks;
  for (const auto& query : queries) {
    auto scores = scorer(query);
    const auto weights = scores.weights;
    const auto ranked = rank_scored(query.id, to_items(scores, gallery_ids), query.ground_truth);
    report.ranks.push_back(ranked.rank_of_ground_truth);
    if (!weights.empty()) report.gates.add(weights);
    if (!query.group.empty()) {
      group_ranks[query.group].push_back(ranked.rank_of_ground_truth);
      auto [it, _] = report.group_gates.try_emplace(query.group, spaces);
      if (!weights.empty()) it->second.add(weights);
    }
  }
  report.metrics = compute_metrics(report.ranks);
  for (const auto& [group, ranks] : group_ranks) report.group_metrics[group] = compute_metrics(ranks);
  return report;
}

std::vector<Query> split_queries(const Manifest& split) {
  std::map<std::uint32_t, std::string> group_of;
  for (const auto& [name, ids] : split.groups) {
    for (auto id : ids) group_of[id] = name;
  }
  std::vector<Query> queries;
  for (const auto& entry : split.videos) {
    for (auto sid : entry.sentences) {
      auto it = group_of.find(sid);
      queries.push_back({"s" + std::to_string(sid), sid, entry.video_id,
                         it == group_of.end() ? std::string() : it->second});
    }
  }
  return queries;
}

EvalReport evaluate(const Dataset& dataset, const Manifest& split, const Retriever& retriever) {
  split.validate(dataset);
  for (Space space : retriever.config().space_list()) {
    if (!dataset.supports(space)) {
      throw SpaceUnavailable("space unavailable: dataset has no features for " + std::string(to_string(space)));
    }
  }
  std::vector<const VideoFeature*> videos;
  std::vector<std::string> ids;
  for (const auto& entry : split.videos) {
    videos.push_back(&dataset.videos[dataset.video_index(entry.video_id)]);
    ids.push_back(entry.video_id);
  }
  const auto gallery = retriever.prepare(videos);
  const auto queries = split_queries(split);
  QueryScorer scorer = [&](const Query& q) {
    return retriever.score(lookup(dataset.sentences.at(q.sentence), dataset.table), gallery);
  };
  return evaluate(queries, ids, scorer, retriever.config().space_list());
}

void write_metrics_table(std::ostream& out, std::span<const MetricsRow> rows) {
  std::size_t width = 6;
  for (const auto& row : rows) width = std::max(width, row.method.size());
  out << std::left << std::setw(static_cast<int>(width)) << "method" << std::right << std::setw(8)
      << "R@1" << std::setw(8) << "R@5" << std::setw(8) << "R@10" << std::setw(8) << "MedR" << '\n';
  out << std::fixed;
  for (const auto& row : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << row.method << std::right
        << std::setprecision(1) << std::setw(8) << 100.0 * row.metrics.r1 << std::setw(8)
        << 100.0 * row.metrics.r5 << std::setw(8) << 100.0 * row.metrics.r10 << std::setw(8)
        << row.metrics.median << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "method,R@1,R@5,R@10,MedR\n";
  out << std::fixed;
  for (const auto& row : rows) {
    out << row.method << std::setprecision(2) << ',' << 100.0 * row.metrics.r1 << ','
        << 100.0 * row.metrics.r5 << ',' << 100.0 * row.metrics.r10 << ',' << std::setprecision(1)
        << row.metrics.median << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace mvse
