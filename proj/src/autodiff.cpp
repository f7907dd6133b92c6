#include "mcvae/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mcvae::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct Dims {
  std::size_t r;
  std::size_t c;
};

Dims dims_of(const Shape& s) {
  switch (s.size()) {
    case 0: return {1, 1};
    case 1: return {1, s[0]};
    case 2: return {s[0], s[1]};
    default: throw ShapeError("tensor rank " + std::to_string(s.size()) + " unsupported (max 2)");
  }
}

Shape shape_from(Dims d, std::size_t rank) {
  if (rank == 0) return {};
  if (rank == 1) return {d.c};
  return {d.r, d.c};
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const Dims da = dims_of(a);
  const Dims db = dims_of(b);
  auto combine = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    mismatch(op, a, b);
  };
  const Dims out{combine(da.r, db.r), combine(da.c, db.c)};
  const std::size_t rank = std::max(a.size(), b.size());
  if (rank < 2 && out.r != 1) mismatch(op, a, b);
  return shape_from(out, rank);
}

// Accumulates a gradient of shape `out` into a (possibly broadcast) input.
void accumulate_reduced(Node& in, const std::vector<double>& g, Dims out) {
  const Dims d = dims_of(in.shape);
  auto& dst = in.grad_buffer();
  for (std::size_t i = 0; i < out.r; ++i) {
    const std::size_t ri = d.r == 1 ? 0 : i;
    for (std::size_t j = 0; j < out.c; ++j) {
      dst[ri * d.c + (d.c == 1 ? 0 : j)] += g[i * out.c + j];
    }
  }
}

template <typename Fwd, typename Grad>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Grad grad) {
  Shape shape = broadcast_shape(op, a.shape(), b.shape());
  const Dims out = dims_of(shape);
  const Dims da = dims_of(a.shape());
  const Dims db = dims_of(b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> value(out.r * out.c);
  for (std::size_t i = 0; i < out.r; ++i) {
    for (std::size_t j = 0; j < out.c; ++j) {
      const double x = av[(da.r == 1 ? 0 : i) * da.c + (da.c == 1 ? 0 : j)];
      const double y = bv[(db.r == 1 ? 0 : i) * db.c + (db.c == 1 ? 0 : j)];
      value[i * out.c + j] = fwd(x, y);
    }
  }
  return make_result(std::move(shape), std::move(value), {a, b}, [da, db, out, grad](Node& self) {
    Node& na = *self.inputs[0].node();
    Node& nb = *self.inputs[1].node();
    std::vector<double> ga(na.requires_grad ? self.value.size() : 0);
    std::vector<double> gb(nb.requires_grad ? self.value.size() : 0);
    for (std::size_t i = 0; i < out.r; ++i) {
      for (std::size_t j = 0; j < out.c; ++j) {
        const std::size_t k = i * out.c + j;
        const double x = na.value[(da.r == 1 ? 0 : i) * da.c + (da.c == 1 ? 0 : j)];
        const double y = nb.value[(db.r == 1 ? 0 : i) * db.c + (db.c == 1 ? 0 : j)];
        const auto [dx, dy] = grad(x, y, self.value[k]);
        if (!ga.empty()) ga[k] = dx * self.grad[k];
        if (!gb.empty()) gb[k] = dy * self.grad[k];
      }
    }
    if (!ga.empty()) accumulate_reduced(na, ga, out);
    if (!gb.empty()) accumulate_reduced(nb, gb, out);
  });
}

// Elementwise op; deriv(x, y) returns dy/dx given input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> value(xv.size());
  std::transform(xv.begin(), xv.end(), value.begin(), fwd);
  return make_result(x.shape(), std::move(value), {x}, [deriv](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += deriv(in.value[i], self.value[i]) * self.grad[i];
  });
}

int check_axis(const char* op, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError(std::string(op) + ": axis must be 0 or 1");
  return axis;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// -- Tensor -----------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (shape.size() > 2) throw ShapeError("tensor rank " + std::to_string(shape.size()) + " unsupported (max 2)");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (values.size() != numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + to_string(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::constant(Shape shape, double fill) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return dims_of(shape()).r; }
std::size_t Tensor::cols() const { return dims_of(shape()).c; }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_rule) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->is_leaf = false;
  n->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward_rule = std::move(backward_rule);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].node();
      if (child->requires_grad && !child->is_leaf && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty()) continue;
    n.backward_rule(n);
  }
}

// -- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) mismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) mismatch("matmul", a.shape(), b.shape());

  std::vector<double> value(m * n);
  ConstMap A(a.values().data(), m, k);
  ConstMap B(b.values().data(), b.rows(), b.cols());
  MutMap C(value.data(), m, n);
  if (transpose_b) {
    C.noalias() = A * B.transpose();
  } else {
    C.noalias() = A * B;
  }
  return make_result({m, n}, std::move(value), {a, b}, [m, k, n, transpose_b](Node& self) {
    Node& na = *self.inputs[0].node();
    Node& nb = *self.inputs[1].node();
    ConstMap G(self.grad.data(), m, n);
    if (na.requires_grad) {
      MutMap GA(na.grad_buffer().data(), m, k);
      ConstMap B(nb.value.data(), transpose_b ? n : k, transpose_b ? k : n);
      if (transpose_b) {
        GA.noalias() += G * B;
      } else {
        GA.noalias() += G * B.transpose();
      }
    }
    if (nb.requires_grad) {
      ConstMap A(na.value.data(), m, k);
      if (transpose_b) {
        MutMap GB(nb.grad_buffer().data(), n, k);
        GB.noalias() += G.transpose() * A;
      } else {
        MutMap GB(nb.grad_buffer().data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    }
  });
}

// -- binary -------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double x, double y, double) { return std::pair{y, x}; });
}

namespace {
double clamp_denominator(double d) {
  if (std::abs(d) >= kEpsilon) return d;
  return d < 0 ? -kEpsilon : kEpsilon;
}
}  // namespace

Tensor div(const Tensor& a, const Tensor& b) {
  return binary("div", a, b, [](double x, double y) { return x / clamp_denominator(y); },
                [](double x, double y, double) {
                  const double d = clamp_denominator(y);
                  const double dy = std::abs(y) >= kEpsilon ? -x / (d * d) : 0.0;
                  return std::pair{1.0 / d, dy};
                });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape("broadcast", x.shape(), shape) != shape) mismatch("broadcast", x.shape(), shape);
  const Dims out = dims_of(shape);
  const Dims d = dims_of(x.shape());
  const auto xv = x.values();
  std::vector<double> value(out.r * out.c);
  for (std::size_t i = 0; i < out.r; ++i) {
    for (std::size_t j = 0; j < out.c; ++j) {
      value[i * out.c + j] = xv[(d.r == 1 ? 0 : i) * d.c + (d.c == 1 ? 0 : j)];
    }
  }
  return make_result(shape, std::move(value), {x}, [out](Node& self) {
    Node& in = *self.inputs[0].node();
    if (in.requires_grad) accumulate_reduced(in, self.grad, out);
  });
}

// -- unary ----------------------------------------------------------------------

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kEpsilon)); },
      [](double v, double) { return v >= kEpsilon ? 1.0 / v : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(std::max(v, kEpsilon)); },
      [](double v, double y) { return v >= kEpsilon ? 0.5 / y : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// -- reductions -----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({}, {s}, {x}, [](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor sum(const Tensor& x, int axis) {
  check_axis("sum", axis);
  const Dims d = dims_of(x.shape());
  const auto xv = x.values();
  const Dims out = axis == 0 ? Dims{1, d.c} : Dims{d.r, 1};
  std::vector<double> value(out.r * out.c, 0.0);
  for (std::size_t i = 0; i < d.r; ++i) {
    for (std::size_t j = 0; j < d.c; ++j) value[axis == 0 ? j : i] += xv[i * d.c + j];
  }
  return make_result({out.r, out.c}, std::move(value), {x}, [d, axis](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < d.r; ++i) {
      for (std::size_t j = 0; j < d.c; ++j) g[i * d.c + j] += self.grad[axis == 0 ? j : i];
    }
  });
}

Tensor mean(const Tensor& x, int axis) {
  check_axis("mean", axis);
  const double n = static_cast<double>(axis == 0 ? x.rows() : x.cols());
  return scale(sum(x, axis), 1.0 / n);
}

Tensor logsumexp(const Tensor& x, int axis) {
  check_axis("logsumexp", axis);
  const Dims d = dims_of(x.shape());
  const auto xv = x.values();
  const std::size_t lanes = axis == 0 ? d.c : d.r;
  const std::size_t len = axis == 0 ? d.r : d.c;
  auto at = [d, axis](std::size_t lane, std::size_t t) {
    return axis == 0 ? t * d.c + lane : lane * d.c + t;
  };
  std::vector<double> value(lanes);
  for (std::size_t l = 0; l < lanes; ++l) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) m = std::max(m, xv[at(l, t)]);
    if (std::isinf(m) && m < 0) {
      value[l] = m;
      continue;
    }
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += std::exp(xv[at(l, t)] - m);
    value[l] = m + std::log(s);
  }
  Shape shape = axis == 0 ? Shape{1, d.c} : Shape{d.r, 1};
  return make_result(std::move(shape), std::move(value), {x}, [lanes, len, at](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t l = 0; l < lanes; ++l) {
      if (std::isinf(self.value[l])) continue;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t k = at(l, t);
        g[k] += std::exp(in.value[k] - self.value[l]) * self.grad[l];
      }
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  check_axis("softmax", axis);
  const Dims d = dims_of(x.shape());
  const auto xv = x.values();
  const std::size_t lanes = axis == 0 ? d.c : d.r;
  const std::size_t len = axis == 0 ? d.r : d.c;
  auto at = [d, axis](std::size_t lane, std::size_t t) {
    return axis == 0 ? t * d.c + lane : lane * d.c + t;
  };
  std::vector<double> value(xv.size());
  for (std::size_t l = 0; l < lanes; ++l) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) m = std::max(m, xv[at(l, t)]);
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double e = std::exp(xv[at(l, t)] - m);
      value[at(l, t)] = e;
      s += e;
    }
    for (std::size_t t = 0; t < len; ++t) value[at(l, t)] /= s;
  }
  return make_result(x.shape(), std::move(value), {x}, [lanes, len, at](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t l = 0; l < lanes; ++l) {
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += self.grad[at(l, t)] * self.value[at(l, t)];
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t k = at(l, t);
        g[k] += self.value[k] * (self.grad[k] - dot);
      }
    }
  });
}

Tensor l2_norm(const Tensor& x, int axis) { return sqrt(sum(square(x), axis)); }

// -- structure --------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check_axis("concat", axis);
  if (xs.empty()) throw ShapeError("concat: no inputs");
  std::vector<Dims> ds;
  for (const auto& t : xs) ds.push_back(dims_of(t.shape()));
  Dims out = ds[0];
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (axis == 0) {
      if (ds[i].c != out.c) mismatch("concat", xs[0].shape(), xs[i].shape());
      out.r += ds[i].r;
    } else {
      if (ds[i].r != out.r) mismatch("concat", xs[0].shape(), xs[i].shape());
      out.c += ds[i].c;
    }
  }
  std::vector<double> value(out.r * out.c);
  std::size_t offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto v = xs[t].values();
    for (std::size_t i = 0; i < ds[t].r; ++i) {
      for (std::size_t j = 0; j < ds[t].c; ++j) {
        const std::size_t oi = axis == 0 ? i + offset : i;
        const std::size_t oj = axis == 0 ? j : j + offset;
        value[oi * out.c + oj] = v[i * ds[t].c + j];
      }
    }
    offset += axis == 0 ? ds[t].r : ds[t].c;
  }
  return make_result({out.r, out.c}, std::move(value), xs, [ds, out, axis](Node& self) {
    std::size_t offset = 0;
    for (std::size_t t = 0; t < self.inputs.size(); ++t) {
      Node& in = *self.inputs[t].node();
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < ds[t].r; ++i) {
          for (std::size_t j = 0; j < ds[t].c; ++j) {
            const std::size_t oi = axis == 0 ? i + offset : i;
            const std::size_t oj = axis == 0 ? j : j + offset;
            g[i * ds[t].c + j] += self.grad[oi * out.c + oj];
          }
        }
      }
      offset += axis == 0 ? ds[t].r : ds[t].c;
    }
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  check_axis("slice", axis);
  const Dims d = dims_of(x.shape());
  const std::size_t extent = axis == 0 ? d.r : d.c;
  if (begin >= end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of bounds for shape " + to_string(x.shape()));
  }
  const Dims out = axis == 0 ? Dims{end - begin, d.c} : Dims{d.r, end - begin};
  const auto xv = x.values();
  std::vector<double> value(out.r * out.c);
  for (std::size_t i = 0; i < out.r; ++i) {
    for (std::size_t j = 0; j < out.c; ++j) {
      value[i * out.c + j] = axis == 0 ? xv[(i + begin) * d.c + j] : xv[i * d.c + j + begin];
    }
  }
  return make_result({out.r, out.c}, std::move(value), {x}, [d, out, axis, begin](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < out.r; ++i) {
      for (std::size_t j = 0; j < out.c; ++j) {
        const std::size_t k = axis == 0 ? (i + begin) * d.c + j : i * d.c + j + begin;
        g[k] += self.grad[i * out.c + j];
      }
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const Dims d = dims_of(x.shape());
  if (rows.empty()) throw ShapeError("gather_rows: empty row set");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (auto r : idx) {
    if (r >= d.r) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " + to_string(x.shape()));
  }
  const auto xv = x.values();
  std::vector<double> value(idx.size() * d.c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(idx[i] * d.c), d.c, value.begin() + static_cast<std::ptrdiff_t>(i * d.c));
  }
  return make_result({idx.size(), d.c}, std::move(value), {x}, [idx, d](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d.c; ++j) g[idx[i] * d.c + j] += self.grad[i * d.c + j];
    }
  });
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t total_rows) {
  const Dims d = dims_of(x.shape());
  if (rows.size() != d.r) throw ShapeError("scatter_rows: index count does not match rows of " + to_string(x.shape()));
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const auto xv = x.values();
  std::vector<double> value(total_rows * d.c, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= total_rows) throw ShapeError("scatter_rows: target row out of range");
    for (std::size_t j = 0; j < d.c; ++j) value[idx[i] * d.c + j] = xv[i * d.c + j];
  }
  return make_result({total_rows, d.c}, std::move(value), {x}, [idx, d](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d.c; ++j) g[i * d.c + j] += self.grad[idx[i] * d.c + j];
    }
  });
}

Tensor take(const Tensor& x, std::span<const std::size_t> flat_indices) {
  if (flat_indices.empty()) throw ShapeError("take: empty index set");
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  const auto xv = x.values();
  std::vector<double> value(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= xv.size()) throw ShapeError("take: index out of range for " + to_string(x.shape()));
    value[i] = xv[idx[i]];
  }
  return make_result({idx.size()}, std::move(value), {x}, [idx](Node& self) {
    Node& in = *self.inputs[0].node();
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) mismatch("cosine_similarity", a.shape(), b.shape());
  const std::size_t na = a.rows();
  const std::size_t nb = b.rows();
  const std::size_t dim = a.cols();

  auto normalize = [dim](std::span<const double> v, std::size_t rows, std::vector<double>& unit,
                         std::vector<double>& norms) {
    unit.resize(rows * dim);
    norms.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += v[i * dim + j] * v[i * dim + j];
      norms[i] = std::max(std::sqrt(s), kEpsilon);
      for (std::size_t j = 0; j < dim; ++j) unit[i * dim + j] = v[i * dim + j] / norms[i];
    }
  };
  std::vector<double> ua, ub, norm_a, norm_b;
  normalize(a.values(), na, ua, norm_a);
  normalize(b.values(), nb, ub, norm_b);

  std::vector<double> value(na * nb);
  MutMap(value.data(), na, nb).noalias() = ConstMap(ua.data(), na, dim) * ConstMap(ub.data(), nb, dim).transpose();

  return make_result({na, nb}, std::move(value), {a, b},
                     [ua = std::move(ua), ub = std::move(ub), norm_a = std::move(norm_a),
                      norm_b = std::move(norm_b), na, nb, dim](Node& self) {
                       ConstMap G(self.grad.data(), na, nb);
                       // d(unit)/d(x) = (I - u u^T) / |x| when |x| is above the clamp.
                       auto project = [dim](const RowMatrix& g_unit, const std::vector<double>& unit,
                                            const std::vector<double>& norms, std::vector<double>& dst) {
                         for (std::size_t i = 0; i < norms.size(); ++i) {
                           const bool clamped = norms[i] <= kEpsilon;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < dim; ++j) dot += g_unit(i, j) * unit[i * dim + j];
                           for (std::size_t j = 0; j < dim; ++j) {
                             const double proj = clamped ? g_unit(i, j) : g_unit(i, j) - dot * unit[i * dim + j];
                             dst[i * dim + j] += proj / norms[i];
                           }
                         }
                       };
                       Node& in_a = *self.inputs[0].node();
                       Node& in_b = *self.inputs[1].node();
                       if (in_a.requires_grad) {
                         RowMatrix g_unit = G * ConstMap(ub.data(), nb, dim);
                         project(g_unit, ua, norm_a, in_a.grad_buffer());
                       }
                       if (in_b.requires_grad) {
                         RowMatrix g_unit = G.transpose() * ConstMap(ua.data(), na, dim);
                         project(g_unit, ub, norm_b, in_b.grad_buffer());
                       }
                     });
}

}  // namespace mcvae::ad
