#include "mvse/autodiff.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <string>

namespace mvse {

namespace {

constexpr std::array<std::string_view, 20> kOpNames = {
    "leaf",   "matvec",       "add",    "sub",    "elementwise_mul", "scale",   "one_minus",
    "tanh",   "sigmoid",      "softmax", "mean_over_axis", "l2_normalize", "concat", "slice",
    "dot",    "sum",          "cosine", "hinge",  "channel_mul",     "reshape",
};

std::atomic<int> g_corrupted{-1};

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + to_string(a) +
                   " and " + to_string(b));
}

[[noreturn]] void shape_fail(OpKind kind, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op_name(kind)) + ": " + why + " (shape " + to_string(a) + ")");
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
  return a.tape();
}

double sigmoid_value(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::string_view op_name(OpKind kind) { return kOpNames[static_cast<std::size_t>(kind)]; }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

namespace testing {
void corrupt_backward(std::optional<OpKind> kind) {
  g_corrupted.store(kind ? static_cast<int>(*kind) : -1);
}
}  // namespace testing

const Tensor& Var::value() const { return tape_->value(id_); }

Tape& Var::tape() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return *tape_;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::leaf, {}, std::move(value), {}, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, OpAttrs attrs) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_[id].requires_grad;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), std::move(attrs), needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(std::size_t id) {
  auto& slot = grads_[id];
  if (slot.shape() != nodes_[id].value.shape() || slot.empty()) {
    slot = Tensor(nodes_[id].value.shape());
  }
  return slot;
}

Tensor Tape::grad(Var v) const {
  if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
  return Tensor(nodes_[v.id()].value.shape());
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::logic_error("backward: loss belongs to another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     to_string(nodes_[loss.id()].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.kind == OpKind::leaf || !node.requires_grad || grads_[id].empty()) continue;
    propagate(id, grads_[id]);
  }
}

void Tape::propagate(std::size_t id, const Tensor& upstream) {
  const Node& node = nodes_[id];
  const auto& g = upstream.storage();
  const auto& y = node.value.storage();
  const double corruption = g_corrupted.load() == static_cast<int>(node.kind) ? 1.1 : 1.0;

  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };
  auto input = [&](std::size_t k) -> const std::vector<double>& {
    return nodes_[node.inputs[k]].value.storage();
  };
  auto slot = [&](std::size_t k) -> std::vector<double>& {
    return grad_slot(node.inputs[k]).storage();
  };

  switch (node.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matvec: {
      const auto& w = input(0);
      const auto& x = input(1);
      const std::size_t rows = nodes_[node.inputs[0]].value.dim(0);
      const std::size_t cols = x.size();
      if (wants(0)) {
        auto& dw = slot(0);
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g[i] * corruption;
          if (gi == 0.0) continue;
          double* row = dw.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
        }
      }
      if (wants(1)) {
        auto& dx = slot(1);
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g[i] * corruption;
          if (gi == 0.0) continue;
          const double* row = w.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) dx[j] += row[j] * gi;
        }
      }
      break;
    }
    case OpKind::add:
    case OpKind::sub: {
      const double sign = node.kind == OpKind::sub ? -1.0 : 1.0;
      if (wants(0)) {
        auto& da = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * corruption;
      }
      if (wants(1)) {
        auto& db = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += sign * g[i] * corruption;
      }
      break;
    }
    case OpKind::elementwise_mul: {
      const auto& a = input(0);
      const auto& b = input(1);
      if (wants(0)) {
        auto& da = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i] * corruption;
      }
      if (wants(1)) {
        auto& db = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i] * corruption;
      }
      break;
    }
    case OpKind::scale: {
      auto& da = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += node.attrs.scalar * g[i] * corruption;
      break;
    }
    case OpKind::one_minus: {
      auto& da = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i] * corruption;
      break;
    }
    case OpKind::tanh: {
      auto& da = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]) * corruption;
      break;
    }
    case OpKind::sigmoid: {
      auto& da = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]) * corruption;
      break;
    }
    case OpKind::softmax: {
      auto& da = slot(0);
      const Shape& shape = node.value.shape();
      const std::size_t width = shape.back();
      for (std::size_t base = 0; base < y.size(); base += width) {
        double inner = 0.0;
        for (std::size_t k = 0; k < width; ++k) inner += g[base + k] * y[base + k];
        for (std::size_t k = 0; k < width; ++k) {
          da[base + k] += y[base + k] * (g[base + k] - inner) * corruption;
        }
      }
      break;
    }
    case OpKind::mean_over_axis: {
      auto& da = slot(0);
      const auto s = split_axis(nodes_[node.inputs[0]].value.shape(), node.attrs.axis);
      const double inv = corruption / static_cast<double>(s.extent);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.extent; ++k) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            da[(o * s.extent + k) * s.inner + i] += g[o * s.inner + i] * inv;
          }
        }
      }
      break;
    }
    case OpKind::l2_normalize: {
      auto& da = slot(0);
      const double norm = node.attrs.scalar;
      double inner = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * g[i];
      for (std::size_t i = 0; i < y.size(); ++i) {
        da[i] += (g[i] - y[i] * inner) / norm * corruption;
      }
      break;
    }
    case OpKind::concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t n = nodes_[node.inputs[k]].value.size();
        if (wants(k)) {
          auto& dk = slot(k);
          for (std::size_t i = 0; i < n; ++i) dk[i] += g[offset + i] * corruption;
        }
        offset += n;
      }
      break;
    }
    case OpKind::slice: {
      auto& da = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[node.attrs.offset + i] += g[i] * corruption;
      break;
    }
    case OpKind::dot: {
      const auto& a = input(0);
      const auto& b = input(1);
      const double g0 = g[0] * corruption;
      if (wants(0)) {
        auto& da = slot(0);
        for (std::size_t i = 0; i < a.size(); ++i) da[i] += g0 * b[i];
      }
      if (wants(1)) {
        auto& db = slot(1);
        for (std::size_t i = 0; i < b.size(); ++i) db[i] += g0 * a[i];
      }
      break;
    }
    case OpKind::sum: {
      auto& da = slot(0);
      for (double& v : da) v += g[0] * corruption;
      break;
    }
    case OpKind::cosine: {
      const auto& a = input(0);
      const auto& b = input(1);
      const double na = l2_norm(a);
      const double nb = l2_norm(b);
      const double c = node.attrs.scalar;  // unclamped cosine
      const double g0 = g[0] * corruption;
      if (wants(0)) {
        auto& da = slot(0);
        for (std::size_t i = 0; i < a.size(); ++i) {
          da[i] += g0 * (b[i] / (na * nb) - c * a[i] / (na * na));
        }
      }
      if (wants(1)) {
        auto& db = slot(1);
        for (std::size_t i = 0; i < b.size(); ++i) {
          db[i] += g0 * (a[i] / (na * nb) - c * b[i] / (nb * nb));
        }
      }
      break;
    }
    case OpKind::hinge: {
      const auto& a = input(0);
      auto& da = slot(0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > 0.0) da[i] += g[i] * corruption;
      }
      break;
    }
    case OpKind::channel_mul: {
      const auto& grid = input(0);
      const auto& weights = input(1);
      const std::size_t channels = nodes_[node.inputs[0]].value.shape().back();
      if (wants(0)) {
        auto& dg = slot(0);
        for (std::size_t k = 0; k < weights.size(); ++k) {
          for (std::size_t c = 0; c < channels; ++c) {
            dg[k * channels + c] += g[k * channels + c] * weights[k] * corruption;
          }
        }
      }
      if (wants(1)) {
        auto& dw = slot(1);
        for (std::size_t k = 0; k < weights.size(); ++k) {
          double acc = 0.0;
          for (std::size_t c = 0; c < channels; ++c) {
            acc += g[k * channels + c] * grid[k * channels + c];
          }
          dw[k] += acc * corruption;
        }
      }
      break;
    }
    case OpKind::reshape: {
      auto& da = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * corruption;
      break;
    }
  }
}

// ---- forward rules ----

Var matvec(Var matrix, Var vec) {
  Tape& tape = same_tape(matrix, vec);
  const Tensor& w = matrix.value();
  const Tensor& x = vec.value();
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) {
    shape_fail(OpKind::matvec, w.shape(), x.shape());
  }
  const std::size_t rows = w.dim(0);
  const std::size_t cols = w.dim(1);
  Tensor out({rows});
  const double* wd = w.data().data();
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = wd + i * cols;
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      acc[0] += row[j] * xd[j];
      acc[1] += row[j + 1] * xd[j + 1];
      acc[2] += row[j + 2] * xd[j + 2];
      acc[3] += row[j + 3] * xd[j + 3];
    }
    for (; j < cols; ++j) acc[0] += row[j] * xd[j];
    out[i] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  }
  return tape.record(OpKind::matvec, {matrix.id(), vec.id()}, std::move(out));
}

namespace {

template <typename Fn>
Var binary_same_shape(OpKind kind, Var a, Var b, Fn fn) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.shape() != z.shape()) shape_fail(kind, x.shape(), z.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], z[i]);
  return tape.record(kind, {a.id(), b.id()}, std::move(out));
}

template <typename Fn>
Var unary(OpKind kind, Var a, Fn fn, OpAttrs attrs = {}) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i]);
  return a.tape().record(kind, {a.id()}, std::move(out), std::move(attrs));
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(OpKind::add, a, b, [](double x, double z) { return x + z; });
}

Var sub(Var a, Var b) {
  return binary_same_shape(OpKind::sub, a, b, [](double x, double z) { return x - z; });
}

Var elementwise_mul(Var a, Var b) {
  return binary_same_shape(OpKind::elementwise_mul, a, b,
                           [](double x, double z) { return x * z; });
}

Var scale(Var a, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return unary(OpKind::scale, a, [factor](double x) { return factor * x; }, attrs);
}

Var one_minus(Var a) {
  return unary(OpKind::one_minus, a, [](double x) { return 1.0 - x; });
}

Var tanh(Var a) {
  return unary(OpKind::tanh, a, [](double x) { return std::tanh(x); });
}

Var sigmoid(Var a) { return unary(OpKind::sigmoid, a, sigmoid_value); }

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.shape().back() == 0) {
    shape_fail(OpKind::softmax, x.shape(), "softmax over empty axis");
  }
  const std::size_t width = x.shape().back();
  Tensor out(x.shape());
  for (std::size_t base = 0; base < x.size(); base += width) {
    double peak = x[base];
    for (std::size_t k = 1; k < width; ++k) peak = std::max(peak, x[base + k]);
    double total = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      out[base + k] = std::exp(x[base + k] - peak);
      total += out[base + k];
    }
    for (std::size_t k = 0; k < width; ++k) out[base + k] /= total;
  }
  return a.tape().record(OpKind::softmax, {a.id()}, std::move(out));
}

Var mean_over_axis(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  if (axis >= x.rank()) {
    shape_fail(OpKind::mean_over_axis, x.shape(), "axis " + std::to_string(axis) + " >= rank");
  }
  const auto s = split_axis(x.shape(), axis);
  if (s.extent == 0) shape_fail(OpKind::mean_over_axis, x.shape(), "mean over empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += x[(o * s.extent + k) * s.inner + i];
      }
    }
  }
  for (auto& v : out.storage()) v *= inv;
  OpAttrs attrs;
  attrs.axis = axis;
  return a.tape().record(OpKind::mean_over_axis, {a.id()}, std::move(out), attrs);
}

Var l2_normalize(Var a) {
  const Tensor& x = a.value();
  const double norm = l2_norm(x.data());
  if (norm < kDegenerateNorm) throw DegenerateEmbedding("l2_normalize: degenerate embedding");
  OpAttrs attrs;
  attrs.scalar = norm;
  return unary(OpKind::l2_normalize, a, [norm](double v) { return v / norm; }, attrs);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = parts.front().tape();
  std::vector<double> values;
  std::vector<std::size_t> ids;
  for (const Var& part : parts) {
    if (&part.tape() != &tape) throw std::logic_error("operands recorded on different tapes");
    const Tensor& t = part.value();
    if (t.rank() > 1) shape_fail(OpKind::concat, t.shape(), "inputs must be scalars or vectors");
    values.insert(values.end(), t.data().begin(), t.data().end());
    ids.push_back(part.id());
  }
  return tape.record(OpKind::concat, std::move(ids), Tensor::vector(std::move(values)));
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& x = a.value();
  if (x.rank() != 1 || offset + length > x.size() || length == 0) {
    shape_fail(OpKind::slice, x.shape(),
               "bad range [" + std::to_string(offset) + "," + std::to_string(offset + length) + ")");
  }
  std::vector<double> values(x.data().begin() + static_cast<std::ptrdiff_t>(offset),
                             x.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  OpAttrs attrs;
  attrs.offset = offset;
  attrs.length = length;
  return a.tape().record(OpKind::slice, {a.id()}, Tensor::vector(std::move(values)), attrs);
}

Var dot(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.rank() != 1 || x.shape() != z.shape()) shape_fail(OpKind::dot, x.shape(), z.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * z[i];
  return tape.record(OpKind::dot, {a.id(), b.id()}, Tensor::scalar(acc));
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape().record(OpKind::sum, {a.id()}, Tensor::scalar(acc));
}

Var cosine(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.rank() != 1 || x.shape() != z.shape() || x.size() == 0) {
    shape_fail(OpKind::cosine, x.shape(), z.shape());
  }
  const double nx = l2_norm(x.data());
  const double nz = l2_norm(z.data());
  if (nx < kDegenerateNorm || nz < kDegenerateNorm) {
    throw DegenerateEmbedding("cosine: degenerate embedding (zero-norm vector)");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * z[i];
  const double c = acc / (nx * nz);
  OpAttrs attrs;
  attrs.scalar = c;
  return tape.record(OpKind::cosine, {a.id(), b.id()},
                     Tensor::scalar(std::clamp(c, -1.0, 1.0)), attrs);
}

Var hinge(Var a) {
  return unary(OpKind::hinge, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Var channel_mul(Var grid, Var weights) {
  Tape& tape = same_tape(grid, weights);
  const Tensor& x = grid.value();
  const Tensor& w = weights.value();
  const bool ok = x.rank() == w.rank() + 1 &&
                  std::equal(w.shape().begin(), w.shape().end(), x.shape().begin());
  if (!ok) shape_fail(OpKind::channel_mul, x.shape(), w.shape());
  const std::size_t channels = x.shape().back();
  Tensor out(x.shape());
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[k * channels + c] = x[k * channels + c] * w[k];
    }
  }
  return tape.record(OpKind::channel_mul, {grid.id(), weights.id()}, std::move(out));
}

Var reshape(Var a, Shape shape) {
  const Tensor& x = a.value();
  if (volume(shape) != x.size()) shape_fail(OpKind::reshape, x.shape(), shape);
  OpAttrs attrs;
  attrs.shape = shape;
  return a.tape().record(OpKind::reshape, {a.id()}, x.reshaped(std::move(shape)),
                         std::move(attrs));
}

Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::leaf:
      throw std::invalid_argument("apply: leaf is not an operation");
    case OpKind::matvec: arity(2); return matvec(inputs[0], inputs[1]);
    case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::sub: arity(2); return sub(inputs[0], inputs[1]);
    case OpKind::elementwise_mul: arity(2); return elementwise_mul(inputs[0], inputs[1]);
    case OpKind::scale: arity(1); return scale(inputs[0], attrs.scalar);
    case OpKind::one_minus: arity(1); return one_minus(inputs[0]);
    case OpKind::tanh: arity(1); return tanh(inputs[0]);
    case OpKind::sigmoid: arity(1); return sigmoid(inputs[0]);
    case OpKind::softmax: arity(1); return softmax(inputs[0]);
    case OpKind::mean_over_axis: arity(1); return mean_over_axis(inputs[0], attrs.axis);
    case OpKind::l2_normalize: arity(1); return l2_normalize(inputs[0]);
    case OpKind::concat: return concat(inputs);
    case OpKind::slice: arity(1); return slice(inputs[0], attrs.offset, attrs.length);
    case OpKind::dot: arity(2); return dot(inputs[0], inputs[1]);
    case OpKind::sum: arity(1); return sum(inputs[0]);
    case OpKind::cosine: arity(2); return cosine(inputs[0], inputs[1]);
    case OpKind::hinge: arity(1); return hinge(inputs[0]);
    case OpKind::channel_mul: arity(2); return channel_mul(inputs[0], inputs[1]);
    case OpKind::reshape: arity(1); return reshape(inputs[0], attrs.shape);
  }
  throw std::invalid_argument("apply: unknown op kind");
}

}  // namespace mvse
