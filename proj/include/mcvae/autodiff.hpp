#pragma once

// Define-by-run reverse-mode differentiation over dense float64 tensors.
//
// A Tensor is a shared handle. Operations build the graph implicitly: every
// result keeps references to its inputs and a backward rule. backward() sorts
// the reachable nodes topologically and runs each rule exactly once, in
// reverse order, accumulating gradients additively.
//
// Tensors have rank 0, 1 or 2. For broadcasting and reductions a rank-1
// tensor of extent n behaves as a 1 x n row and a scalar as 1 x 1.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcvae::ad {

/// Global stability constant: log and sqrt clamp their input from below to
/// kEpsilon (zero derivative in the clamped region) and division clamps the
/// denominator magnitude to at least kEpsilon, preserving sign.
inline constexpr double kEpsilon = 1e-8;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node;

class Tensor {
 public:
  Tensor() = default;

  /// Leaf that never participates in differentiation.
  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor constant(Shape shape, double fill);
  static Tensor scalar(double v) { return constant({}, std::vector<double>{v}); }
  /// Leaf whose gradient is kept after backward().
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Rows/cols of the 2-D view.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  /// True once backward() has written into this tensor's gradient.
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no graph history, no gradient.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& handle() const { return node_; }

 private:
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(Node&)>);
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<Tensor> inputs;
  std::function<void(Node&)> backward_rule;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Builds an op result. backward_rule receives the output node (whose grad
/// is populated) and must accumulate into inputs that require grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_rule);

/// Runs reverse accumulation from a scalar loss.
void backward(const Tensor& loss);

// -- linear algebra -------------------------------------------------------
/// a (m x k) times b (k x n), or b^T when transpose_b is set (b is n x k).
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

// -- broadcasting binary ops ---------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

// -- elementwise ---------------------------------------------------------
Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
/// Clamps into [lo, hi]; derivative is zero outside.
Tensor clamp(const Tensor& x, double lo, double hi);

// -- reductions ------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// axis 0 reduces rows (-> 1 x cols), axis 1 reduces columns (-> rows x 1).
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);
Tensor softmax(const Tensor& x, int axis);
Tensor l2_norm(const Tensor& x, int axis);

// -- structure -------------------------------------------------------------
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Places row r of x at output row rows[r]; other rows are zero.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t total_rows);
/// Flat element gather, result has rank 1.
Tensor take(const Tensor& x, std::span<const std::size_t> flat_indices);

/// Pairwise cosine similarity between the rows of a and the rows of b.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double s) { return scale(x, s); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }
inline Tensor operator+(const Tensor& x, double s) { return add_scalar(x, s); }

}  // namespace mcvae::ad
