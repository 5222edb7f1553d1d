#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mvse/autodiff.hpp"

namespace mvse {

/// Builds a scalar on `tape` from leaves bound to the given input values.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using ScalarFn = std::function<Var(Tape&, Var)>;
/// Several scalars from one forward pass.
using MultiOutputFn = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares tape gradients against central differences. The error per
/// coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// `stride` > 1 checks every stride-th coordinate of each input (the first
/// coordinate is always checked).
GradCheckResult grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs, double eps,
                           std::size_t stride = 1);

/// One result per output of `f`. Each finite-difference probe evaluates `f`
/// once for all outputs.
std::vector<GradCheckResult> grad_check(const MultiOutputFn& f, const std::vector<Tensor>& inputs,
                                        double eps, std::size_t stride = 1);

double grad_check(const ScalarFn& f, const Tensor& x, double eps);

}  // namespace mvse
