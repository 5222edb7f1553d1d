#include "mvse/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace mvse {

Var gate_weights(Var phi, Var gate_matrix) { return softmax(matvec(gate_matrix, phi)); }

std::vector<ParamSpec> gate_param_specs(const std::string& prefix, std::size_t spaces,
                                        std::size_t hidden) {
  return {{prefix + "W_t", {spaces, hidden}, hidden, 0.0}};
}

Var fuse(std::span<const Var> similarities, Var weights) {
  if (similarities.size() != weights.value().size()) {
    throw ShapeError("fuse: " + std::to_string(similarities.size()) + " similarities but weights " +
                     to_string(weights.shape()));
  }
  return dot(concat(similarities), weights);
}

Fuser::Fuser(FuseMode mode, std::size_t spaces) : mode_(mode), spaces_(spaces) {
  if (spaces == 0) throw std::invalid_argument("fuser: need at least one space");
}

Var Fuser::weights(Tape& tape, Var phi, Var gate_matrix) const {
  if (mode_ == FuseMode::average) {
    return tape.constant(Tensor::filled({spaces_}, 1.0 / static_cast<double>(spaces_)));
  }
  return gate_weights(phi, gate_matrix);
}

Var Fuser::fuse(Tape& tape, std::span<const Var> similarities, Var phi, Var gate_matrix) const {
  return mvse::fuse(similarities, weights(tape, phi, gate_matrix));
}

Fuser fuse_mode(FuseMode mode, std::size_t spaces) { return Fuser(mode, spaces); }

GateStatistics::GateStatistics(std::vector<Space> spaces)
    : spaces_(std::move(spaces)),
      sum_(spaces_.size(), 0.0),
      min_(spaces_.size(), std::numeric_limits<double>::infinity()),
      max_(spaces_.size(), -std::numeric_limits<double>::infinity()),
      bins_(spaces_.size(), std::vector<std::size_t>(kBins, 0)) {}

void GateStatistics::add(std::span<const double> weights) {
  if (weights.size() != spaces_.size()) {
    throw ShapeError("gate statistics: expected " + std::to_string(spaces_.size()) +
                     " weights, got " + std::to_string(weights.size()));
  }
  ++count_;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    const double w = weights[m];
    sum_[m] += w;
    min_[m] = std::min(min_[m], w);
    max_[m] = std::max(max_[m], w);
    // smallest k with w <= k/100
    auto k = static_cast<std::size_t>(std::ceil(w * static_cast<double>(kBins) - 1e-12));
    k = std::clamp<std::size_t>(k, 1, kBins);
    ++bins_[m][k - 1];
  }
}

double GateStatistics::mean(std::size_t space) const {
  return count_ ? sum_.at(space) / static_cast<double>(count_) : 0.0;
}

std::vector<std::pair<double, double>> GateStatistics::cumulative_histogram(std::size_t space) const {
  std::vector<std::pair<double, double>> out;
  std::size_t running = 0;
  for (std::size_t k = 0; k < kBins; ++k) {
    running += bins_.at(space)[k];
    const double fraction = count_ ? static_cast<double>(running) / static_cast<double>(count_) : 0.0;
    out.emplace_back(static_cast<double>(k + 1) / static_cast<double>(kBins), fraction);
  }
  return out;
}

void write_gate_table(std::ostream& out, const GateStatistics& stats) {
  out << std::left << std::setw(12) << "space" << std::right << std::setw(10) << "mean"
      << std::setw(10) << "min" << std::setw(10) << "max" << '\n';
  out << std::fixed << std::setprecision(4);
  for (std::size_t m = 0; m < stats.spaces().size(); ++m) {
    out << std::left << std::setw(12) << to_string(stats.spaces()[m]) << std::right
        << std::setw(10) << stats.mean(m) << std::setw(10) << stats.min(m) << std::setw(10)
        << stats.max(m) << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_gate_histogram_csv(std::ostream& out, const GateStatistics& stats, std::size_t space) {
  out << "bin_upper,cumulative_fraction\n";
  out << std::fixed;
  for (const auto& [upper, fraction] : stats.cumulative_histogram(space)) {
    out << std::setprecision(2) << upper << ',' << std::setprecision(6) << fraction << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace mvse
