#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mvse/tensor.hpp"

namespace mvse {

enum class OpKind : std::uint8_t {
  leaf,
  matvec,
  add,
  sub,
  elementwise_mul,
  scale,
  one_minus,
  tanh,
  sigmoid,
  softmax,
  mean_over_axis,
  l2_normalize,
  concat,
  slice,
  dot,
  sum,
  cosine,
  hinge,
  channel_mul,
  reshape,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

/// Raised by cosine when either side has (near) zero norm.
class DegenerateEmbedding : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-tensor arguments of an operation. Which fields matter depends on the kind:
/// scale uses `scalar`, mean_over_axis uses `axis`, slice uses `offset`/`length`,
/// reshape uses `shape`.
struct OpAttrs {
  double scalar = 0.0;
  std::size_t axis = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  Shape shape;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run gradient tape. Nodes are appended in evaluation order, so the
/// node list is always topologically sorted. Rebuild one per forward pass.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input or parameter. Only leaves created with requires_grad (and nodes that
  /// depend on them) receive gradients.
  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends a computed node. Used by the op functions; not needed by callers.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, OpAttrs attrs = {});

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. d(loss)/d(loss) = 1.
  void backward(Var loss);

  /// Gradient of the last backward() loss w.r.t. `v`; zeros when `v` is not an
  /// ancestor of the loss or does not require gradients.
  Tensor grad(Var v) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    OpAttrs attrs;
    bool requires_grad;
  };

  Tensor& grad_slot(std::size_t id);
  void propagate(std::size_t id, const Tensor& upstream);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Primitive operations. Shape violations throw ShapeError naming the kind and shapes.
Var matvec(Var matrix, Var vec);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var elementwise_mul(Var a, Var b);
Var scale(Var a, double factor);
Var one_minus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// Normalizes over the last axis, with max-subtraction.
Var softmax(Var a);
Var mean_over_axis(Var a, std::size_t axis);
Var l2_normalize(Var a);
/// Joins scalars and rank-1 tensors into one rank-1 tensor.
Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
Var dot(Var a, Var b);
Var sum(Var a);
Var cosine(Var a, Var b);
/// max(0, x) elementwise; subgradient 0 at the kink.
Var hinge(Var a);
/// grid[..., c] * weights[...]: broadcasts `weights` across the trailing channel axis.
Var channel_mul(Var grid, Var weights);
Var reshape(Var a, Shape shape);

/// Generic entry point dispatching on `kind`.
Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

inline constexpr double kDegenerateNorm = 1e-12;

namespace testing {
/// Mutation hook: when set, the backward rule of `kind` is deliberately wrong.
/// Exists so gradient checks can be shown to catch a broken rule.
void corrupt_backward(std::optional<OpKind> kind);
}  // namespace testing

}  // namespace mvse
