#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvse/autodiff.hpp"

namespace mvse {

/// Declares one learnable tensor: its name, extents, and how to initialize it.
/// Values are drawn uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] unless `fill`
/// is set, in which case every entry is `*fill`.
struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 1;
  std::optional<double> fill;
};

/// Every learnable tensor of a model, addressed as "module.name". Ordered by
/// name, so iteration (and therefore checkpoint layout) is deterministic.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams initialize(const std::vector<ParamSpec>& specs, std::uint64_t seed);

  void insert(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }

  bool operator==(const ModelParams&) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

using Gradients = std::map<std::string, Tensor>;

/// Parameters placed on one tape as leaves.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ModelParams& params, bool requires_grad);
  /// Uses the given Vars for some names and constant leaves for the rest.
  ParamBinding(Tape& tape, const ModelParams& params, const std::map<std::string, Var>& overrides);

  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  Tape& tape() const { return *tape_; }

  /// Gradients for every bound parameter after tape.backward().
  Gradients gradients() const;

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// p <- p - lr * g for every parameter. Throws ShapeError when a gradient
/// does not match its parameter, std::invalid_argument when one is missing.
void sgd_step(ModelParams& params, const Gradients& grads, double learning_rate);

}  // namespace mvse
