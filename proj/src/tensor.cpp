#include "latentkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "latentkit/error.hpp"

namespace latentkit {

using detail::Node;

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

std::vector<double> softmax(std::span<const double> values) {
  const double lse = log_sum_exp(values);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::exp(values[i] - lse);
  return out;
}

// ---------------------------------------------------------------------------
// Tensor handle

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values,
                                bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) fail(ErrorCode::shape_mismatch, "tensor extents must be positive, got " + shape_string(shape));
  }
  if (values.size() != numel_of(shape)) {
    fail(ErrorCode::shape_mismatch,
         "tensor of shape " + shape_string(shape) + " needs " +
             std::to_string(numel_of(shape)) + " values, got " +
             std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

const Node& checked(const std::shared_ptr<Node>& node) {
  if (!node) fail(ErrorCode::invalid_argument, "use of an undefined tensor");
  return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, fill), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    fail(ErrorCode::out_of_range, "axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).value.size(); }

std::span<const double> Tensor::values() const { return checked(node_).value; }

std::span<double> Tensor::mutable_values() {
  checked(node_);
  return node_->value;
}

std::vector<double> Tensor::to_vector() const { return checked(node_).value; }

double Tensor::item() const {
  const Node& n = checked(node_);
  if (n.value.size() != 1) {
    fail(ErrorCode::shape_mismatch, "item() on tensor of shape " + shape_string(n.shape));
  }
  return n.value[0];
}

double Tensor::operator[](std::size_t flat_index) const {
  const Node& n = checked(node_);
  if (flat_index >= n.value.size()) {
    fail(ErrorCode::out_of_range, "flat index " + std::to_string(flat_index) + " out of range for shape " + shape_string(n.shape));
  }
  return n.value[flat_index];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  checked(node_);
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return !checked(node_).backward; }

std::vector<double> Tensor::grad() const {
  const Node& n = checked(node_);
  if (n.grad.size() != n.value.size()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

bool Tensor::has_grad() const { return checked(node_).grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
  checked(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const Node& n = checked(node_);
  return Tensor(make_leaf(n.shape, n.value, false));
}

Tensor Tensor::clone(bool requires_grad) const {
  const Node& n = checked(node_);
  return Tensor(make_leaf(n.shape, n.value, requires_grad));
}

void Tensor::backward() const {
  const Node& root = checked(node_);
  if (root.value.size() != 1) {
    fail(ErrorCode::shape_mismatch, "backward() needs a single-element root, got shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

FreezeGuard::FreezeGuard(const ParameterList& params) {
  saved_.reserve(params.size());
  for (const auto& p : params) {
    Tensor t = p.tensor;
    saved_.emplace_back(t, t.requires_grad());
    t.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (auto& [t, flag] : saved_) t.set_requires_grad(flag);
}

// ---------------------------------------------------------------------------
// Op plumbing

namespace {

thread_local bool grad_mode = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (checked(t->node()).requires_grad) return true;
  }
  return false;
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_mode && any_requires_grad(inputs)) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_op_n(Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
                 std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = false;
  if (grad_mode)
    for (const Tensor& t : inputs) any = any || checked(t.node()).requires_grad;
  if (any) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Index maps from each output element into both operands.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  bool trivial = false;  // identical shapes
};

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.trivial = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      fail(ErrorCode::shape_mismatch, std::string(op) + ": cannot broadcast shapes " +
                                          shape_string(a) + " and " + shape_string(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  auto strides = [rank](const Shape& s) {
    std::vector<std::size_t> st(rank, 0);
    std::size_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
      st[i] = s[i] == 1 ? 0 : acc;
      acc *= s[i];
    }
    return st;
  };
  const auto sa = strides(pa);
  const auto sb = strides(pb);
  const std::size_t n = numel_of(plan.out);
  plan.ia.resize(n);
  plan.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      oa += idx[i] * sa[i];
      ob += idx[i] * sb[i];
    }
    plan.ia[flat] = oa;
    plan.ib[flat] = ob;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < plan.out[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

// f(a, b) elementwise; da/db return partial derivatives given (a, b, out).
template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto plan = std::make_shared<Broadcast>(broadcast(op, a.shape(), b.shape()));
  const auto va = a.values();
  const auto vb = b.values();
  const std::size_t n = numel_of(plan->out);
  std::vector<double> out(n);
  if (plan->trivial) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(va[i], vb[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(va[plan->ia[i]], vb[plan->ib[i]]);
  }
  return make_op(plan->out, std::move(out), {&a, &b}, [plan, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const std::size_t n = self.value.size();
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = plan->trivial ? i : plan->ia[i];
        const std::size_t ib = plan->trivial ? i : plan->ib[i];
        g[ia] += self.grad[i] * da(pa.value[ia], pb.value[ib], self.value[i]);
      }
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = plan->trivial ? i : plan->ia[i];
        const std::size_t ib = plan->trivial ? i : plan->ib[i];
        g[ib] += self.grad[i] * db(pa.value[ia], pb.value[ib], self.value[i]);
      }
    }
  });
}

// f(x) elementwise; df returns dy/dx given (x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < vx.size(); ++i) out[i] = f(vx[i]);
  return make_op(x.shape(), std::move(out), {&x}, [df](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    }
  });
}

// Split a shape around its last axis into (rows, width).
std::pair<std::size_t, std::size_t> rows_and_width(const char* op, const Tensor& x) {
  if (x.rank() == 0) fail(ErrorCode::shape_mismatch, std::string(op) + " needs rank >= 1, got a scalar");
  const std::size_t width = x.shape().back();
  return {x.numel() / width, width};
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double, double) { return 1.0; },
                [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double, double) { return 1.0; },
                [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y, double) { return y; },
                [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double, double y, double) { return 1.0 / y; },
                [](double, double y, double out) { return -out / y; });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(x, [offset](double v) { return v + offset; },
               [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return safe_log(v); },
               [](double v, double) { return v >= kLogFloor ? 1.0 / v : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / y; });
}

Tensor maximum(const Tensor& x, double floor) {
  return unary(x, [floor](double v) { return std::max(v, floor); },
               [floor](double v, double) { return v >= floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool a_vec = sa.size() == 1;
  const bool b_vec = sb.size() == 1;
  if (sa.empty() || sb.empty() || sa.size() > 2 || sb.size() > 2 || (a_vec && b_vec)) {
    fail(ErrorCode::shape_mismatch, "matmul: unsupported operand shapes " + shape_string(sa) +
                                        " and " + shape_string(sb));
  }
  const std::size_t m = a_vec ? 1 : sa[0];
  const std::size_t k = a_vec ? sa[0] : sa[1];
  const std::size_t kb = sb[0];
  const std::size_t n = b_vec ? 1 : sb[1];
  if (k != kb) {
    fail(ErrorCode::shape_mismatch, "matmul: inner extents differ for shapes " + shape_string(sa) +
                                        " and " + shape_string(sb));
  }
  Shape out_shape;
  if (a_vec) out_shape = {n};
  else if (b_vec) out_shape = {m};
  else out_shape = {m, n};

  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = vb.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op(std::move(out_shape), std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* brow = pb.value.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value[i * k + p];
          if (aip == 0.0) continue;
          double* grow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) grow[j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) fail(ErrorCode::shape_mismatch, "transpose needs rank 2, got " + shape_string(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto v = x.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return make_op({c, r}, std::move(out), {&x}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::shape_mismatch, "dot: shapes differ " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  return sum(mul(a, b));
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  const auto v = x.values();
  double acc = 0.0;
  for (double e : v) acc += e;
  return make_op({}, {acc}, {&x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& e : g) e += self.grad[0];
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    fail(ErrorCode::shape_mismatch, "sum: axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  const auto v = x.values();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * extent + e) * inner + i];
  return make_op(std::move(out_shape), std::move(out), {&x}, [outer, inner, extent](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t e = 0; e < extent; ++e)
        for (std::size_t i = 0; i < inner; ++i) g[(o * extent + e) * inner + i] += self.grad[o * inner + i];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor log_sum_exp(const Tensor& x) {
  const auto [rows, width] = rows_and_width("log_sum_exp", x);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  const auto v = x.values();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = log_sum_exp(v.subspan(r * width, width));
  return make_op(std::move(out_shape), std::move(out), {&x}, [rows, width](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double lse = self.value[r];
      for (std::size_t j = 0; j < width; ++j) {
        g[r * width + j] += self.grad[r] * std::exp(p.value[r * width + j] - lse);
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const auto [rows, width] = rows_and_width("log_softmax", x);
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double lse = log_sum_exp(v.subspan(r * width, width));
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = v[r * width + j] - lse;
  }
  return make_op(x.shape(), std::move(out), {&x}, [rows, width](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < width; ++j) total += self.grad[r * width + j];
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t i = r * width + j;
        g[i] += self.grad[i] - std::exp(self.value[i]) * total;
      }
    }
  });
}

Tensor softmax(const Tensor& x) {
  const auto [rows, width] = rows_and_width("softmax", x);
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    auto p = softmax(v.subspan(r * width, width));
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return make_op(x.shape(), std::move(out), {&x}, [rows, width](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double inner = 0.0;
      for (std::size_t j = 0; j < width; ++j) inner += self.grad[r * width + j] * self.value[r * width + j];
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t i = r * width + j;
        g[i] += self.value[i] * (self.grad[i] - inner);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing and layout

Tensor row(const Tensor& table, std::size_t index) {
  if (table.rank() != 2) fail(ErrorCode::shape_mismatch, "row: needs a rank-2 table, got " + shape_string(table.shape()));
  const std::size_t rows = table.dim(0), width = table.dim(1);
  if (index >= rows) {
    fail(ErrorCode::out_of_range, "row: index " + std::to_string(index) + " out of range for table " + shape_string(table.shape()));
  }
  const auto v = table.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(index * width),
                          v.begin() + static_cast<std::ptrdiff_t>((index + 1) * width));
  return make_op({width}, std::move(out), {&table}, [index, width](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t j = 0; j < width; ++j) g[index * width + j] += self.grad[j];
  });
}

Tensor take(const Tensor& x, std::span<const std::size_t> flat_indices) {
  if (flat_indices.empty()) fail(ErrorCode::invalid_argument, "take: empty index list");
  const auto v = x.values();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= v.size()) {
      fail(ErrorCode::out_of_range, "take: flat index " + std::to_string(flat_indices[i]) +
                                        " out of range for shape " + shape_string(x.shape()));
    }
    out[i] = v[flat_indices[i]];
  }
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  const std::size_t n = idx.size();  // idx is moved into the closure below
  return make_op({n}, std::move(out), {&x}, [idx = std::move(idx)](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

Tensor take(const Tensor& x, std::initializer_list<std::size_t> flat_indices) {
  return take(x, std::span<const std::size_t>(flat_indices.begin(), flat_indices.size()));
}

Tensor pick(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.numel()) {
    fail(ErrorCode::out_of_range, "pick: flat index " + std::to_string(flat_index) +
                                      " out of range for shape " + shape_string(x.shape()));
  }
  return make_op({}, {x.values()[flat_index]}, {&x}, [flat_index](Node& self) {
    self.parents[0]->grad_buffer()[flat_index] += self.grad[0];
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::invalid_argument, "concat: no inputs");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const Tensor& t : parts) {
    offsets.push_back(out.size());
    const auto v = t.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  const std::size_t total = out.size();
  return make_op_n({total}, std::move(out), parts, [offsets = std::move(offsets)](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& x, std::size_t start, std::size_t length) {
  if (length == 0 || start + length > x.numel()) {
    fail(ErrorCode::out_of_range, "slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                      ") out of range for shape " + shape_string(x.shape()));
  }
  const auto v = x.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(start),
                          v.begin() + static_cast<std::ptrdiff_t>(start + length));
  return make_op({length}, std::move(out), {&x}, [start, length](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < length; ++i) g[start + i] += self.grad[i];
  });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::invalid_argument, "stack: no inputs");
  const Shape& first = parts[0].shape();
  for (const Tensor& t : parts) {
    if (t.shape() != first) {
      fail(ErrorCode::shape_mismatch, "stack: shapes differ " + shape_string(first) + " and " + shape_string(t.shape()));
    }
  }
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), first.begin(), first.end());
  const std::size_t width = numel_of(first);
  std::vector<double> out;
  out.reserve(parts.size() * width);
  for (const Tensor& t : parts) {
    const auto v = t.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_op_n(std::move(out_shape), std::move(out), parts, [width](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < width; ++i) g[i] += self.grad[k * width + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    fail(ErrorCode::shape_mismatch, "reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  return make_op(std::move(shape), x.to_vector(), {&x}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace latentkit
