#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvse/autodiff.hpp"
#include "mvse/config.hpp"
#include "mvse/params.hpp"

namespace mvse {

/// Sentence gate: softmax(W_t phi), one weight per active space. No bias.
Var gate_weights(Var phi, Var gate_matrix);

std::vector<ParamSpec> gate_param_specs(const std::string& prefix, std::size_t spaces,
                                        std::size_t hidden);

/// Weighted sum of per-space similarities. Throws ShapeError on a count mismatch.
Var fuse(std::span<const Var> similarities, Var weights);

/// Produces fusion weights for a sentence. `average` ignores the gate and
/// returns 1/M everywhere.
class Fuser {
 public:
  Fuser(FuseMode mode, std::size_t spaces);

  FuseMode mode() const noexcept { return mode_; }
  std::size_t spaces() const noexcept { return spaces_; }

  /// `gate_matrix` is only read in weighted mode.
  Var weights(Tape& tape, Var phi, Var gate_matrix) const;
  Var fuse(Tape& tape, std::span<const Var> similarities, Var phi, Var gate_matrix) const;

 private:
  FuseMode mode_;
  std::size_t spaces_;
};

Fuser fuse_mode(FuseMode mode, std::size_t spaces);

/// Running summary of gate weights over queries: per-space mean/min/max and a
/// cumulative histogram with 0.01-wide bins.
class GateStatistics {
 public:
  static constexpr std::size_t kBins = 100;

  explicit GateStatistics(std::vector<Space> spaces = {});

  void add(std::span<const double> weights);

  const std::vector<Space>& spaces() const noexcept { return spaces_; }
  std::size_t count() const noexcept { return count_; }
  double mean(std::size_t space) const;
  double min(std::size_t space) const { return min_.at(space); }
  double max(std::size_t space) const { return max_.at(space); }
  /// (bin upper edge, fraction of queries with weight <= edge) for k = 1..100.
  std::vector<std::pair<double, double>> cumulative_histogram(std::size_t space) const;

 private:
  std::vector<Space> spaces_;
  std::size_t count_ = 0;
  std::vector<double> sum_, min_, max_;
  std::vector<std::vector<std::size_t>> bins_;
};

/// "space mean min max" table.
void write_gate_table(std::ostream& out, const GateStatistics& stats);
/// CSV with header bin_upper,cumulative_fraction.
void write_gate_histogram_csv(std::ostream& out, const GateStatistics& stats, std::size_t space);

}  // namespace mvse
