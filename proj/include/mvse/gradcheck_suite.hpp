#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mvse {

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  double seconds = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::string preset;
  double tolerance = 1e-4;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
};

/// Finite-difference checks of every head, the gate, the text encoder and the
/// full triplet batch loss of a triple-space model built from `preset` dims.
/// Throws std::invalid_argument for an unknown preset.
GradCheckReport run_gradcheck_suite(std::string_view preset, std::uint64_t seed, double eps = 1e-5,
                                    double tolerance = 1e-4);

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report);

}  // namespace mvse
