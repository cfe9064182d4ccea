#pragma once

// Dense double-precision tensors with define-by-run reverse-mode
// differentiation. Every operation on a tensor that requires gradients
// records a node; `backward()` replays the recorded nodes in reverse
// topological order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace latentkit {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

// Arguments of log() below this value are clamped, so log(0) is about -690.8.
inline constexpr double kLogFloor = 1e-300;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until an adjoint is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // In-place access for leaves (optimizers, initializers, checkpoint loads).
  std::span<double> mutable_values();
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  // Zeros when no adjoint has reached this tensor yet.
  std::vector<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  // Same values, cut from the graph.
  Tensor detach() const;
  // Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  // Root must hold a single element. Adjoints accumulate into leaves across
  // calls; interior adjoints are recomputed on every call.
  void backward() const;

  // Identity of the underlying storage, used as a key by optimizers.
  const void* id() const { return node_.get(); }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

void zero_grads(const ParameterList& params);

// Disables gradient recording for a set of leaves for the lifetime of the
// guard, restoring the previous flags afterwards.
class FreezeGuard {
 public:
  explicit FreezeGuard(const ParameterList& params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Tensor, bool>> saved_;
};

// While alive on a thread, operations on that thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise operations broadcast numpy-style.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

// [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]; [k]x[k,n] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // clamped below kLogFloor
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sqrt(const Tensor& x);
// max(x, floor) elementwise; the adjoint passes only where x >= floor.
Tensor maximum(const Tensor& x, double floor);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);

// Along the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor log_sum_exp(const Tensor& x);

// Row `index` of a rank-2 table (embedding lookup).
Tensor row(const Tensor& table, std::size_t index);
// Elements at the given flat indices, as a rank-1 tensor.
Tensor take(const Tensor& x, std::span<const std::size_t> flat_indices);
Tensor take(const Tensor& x, std::initializer_list<std::size_t> flat_indices);
// Single element as a scalar.
Tensor pick(const Tensor& x, std::size_t flat_index);
// Flattened concatenation.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
// Flat slice [start, start + length).
Tensor slice(const Tensor& x, std::size_t start, std::size_t length);
// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator+(const Tensor& a, double b) { return add_scalar(a, b); }
inline Tensor operator+(double a, const Tensor& b) { return add_scalar(b, a); }
inline Tensor operator-(const Tensor& a, double b) { return add_scalar(a, -b); }
inline Tensor operator-(double a, const Tensor& b) { return add_scalar(neg(b), a); }
inline Tensor operator*(const Tensor& a, double b) { return scale(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return scale(b, a); }
inline Tensor operator/(const Tensor& a, double b) { return scale(a, 1.0 / b); }

// Plain-double helpers shared by value-only code paths.
double log_sum_exp(std::span<const double> values);
std::vector<double> softmax(std::span<const double> values);
double safe_log(double x);

}  // namespace latentkit
