#include "mvse/params.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace mvse {

ModelParams ModelParams::initialize(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ModelParams params;
  std::mt19937_64 rng(seed);
  for (const auto& spec : specs) {
    Tensor t(spec.shape);
    if (spec.fill) {
      for (auto& v : t.storage()) v = *spec.fill;
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(spec.fan_in, 1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.storage()) v = dist(rng);
    }
    params.insert(spec.name, std::move(t));
  }
  return params;
}

void ModelParams::insert(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

ParamBinding::ParamBinding(Tape& tape, const ModelParams& params, bool requires_grad)
    : tape_(&tape) {
  for (const auto& [name, value] : params) vars_.emplace(name, tape.leaf(value, requires_grad));
}

ParamBinding::ParamBinding(Tape& tape, const ModelParams& params,
                           const std::map<std::string, Var>& overrides)
    : tape_(&tape) {
  for (const auto& [name, value] : params) {
    auto it = overrides.find(name);
    vars_.emplace(name, it != overrides.end() ? it->second : tape.constant(value));
  }
}

Var ParamBinding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("parameter not bound: " + name);
  return it->second;
}

Gradients ParamBinding::gradients() const {
  Gradients out;
  for (const auto& [name, var] : vars_) out.emplace(name, tape_->grad(var));
  return out;
}

void sgd_step(ModelParams& params, const Gradients& grads, double learning_rate) {
  const bool frozen = learning_rate == 0.0;
  for (auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("sgd_step: no gradient for " + name);
    if (it->second.shape() != value.shape()) {
      throw ShapeError("sgd_step: gradient for " + name + " has shape " +
                       to_string(it->second.shape()) + ", parameter has " +
                       to_string(value.shape()));
    }
    if (frozen) continue;
    const auto& g = it->second.storage();
    auto& p = value.storage();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
  }
}

}  // namespace mvse
