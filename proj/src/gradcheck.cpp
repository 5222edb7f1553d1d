#include "mvse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvse {

namespace {

std::vector<double> evaluate(const MultiOutputFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.constant(t));
  std::vector<double> out;
  for (const Var& v : f(tape, leaves)) out.push_back(v.item());
  return out;
}

}  // namespace

std::vector<GradCheckResult> grad_check(const MultiOutputFn& f, const std::vector<Tensor>& inputs,
                                        double eps, std::size_t stride) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw std::invalid_argument("grad_check: eps must be in (0, 1e-2]");
  stride = std::max<std::size_t>(stride, 1);

  // analytic[o][k]: gradient of output o w.r.t. input k.
  std::vector<std::vector<Tensor>> analytic;
  for (std::size_t o = 0;; ++o) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    const auto outputs = f(tape, leaves);
    if (outputs.empty()) throw std::invalid_argument("grad_check: function has no outputs");
    tape.backward(outputs.at(o));
    std::vector<Tensor> grads;
    for (const auto& leaf : leaves) grads.push_back(tape.grad(leaf));
    analytic.push_back(std::move(grads));
    if (o + 1 == outputs.size()) break;
  }

  std::vector<GradCheckResult> results(analytic.size());
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); i += stride) {
      const double original = probe[k][i];
      probe[k][i] = original + eps;
      const auto up = evaluate(f, probe);
      probe[k][i] = original - eps;
      const auto down = evaluate(f, probe);
      probe[k][i] = original;
      for (std::size_t o = 0; o < results.size(); ++o) {
        const double numeric = (up.at(o) - down.at(o)) / (2.0 * eps);
        const double a = analytic[o][k][i];
        const double err =
            std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        auto& r = results[o];
        ++r.coordinates;
        if (err > r.max_relative_error) {
          r.max_relative_error = err;
          r.worst_input = k;
          r.worst_index = i;
        }
      }
    }
  }
  return results;
}

GradCheckResult grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs, double eps,
                           std::size_t stride) {
  MultiOutputFn wrapped = [&f](Tape& tape, std::span<const Var> leaves) {
    return std::vector<Var>{f(tape, leaves)};
  };
  return grad_check(wrapped, inputs, eps, stride).front();
}

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  MultiScalarFn wrapped = [&f](Tape& tape, std::span<const Var> leaves) {
    return f(tape, leaves[0]);
  };
  return grad_check(wrapped, {x}, eps).max_relative_error;
}

}  // namespace mvse
