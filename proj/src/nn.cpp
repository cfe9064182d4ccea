#include "latentkit/nn.hpp"

#include "latentkit/error.hpp"

namespace latentkit {

void init_uniform(Tensor& t, Rng& rng, double radius) {
  for (double& v : t.mutable_values()) v = (2.0 * rng.uniform() - 1.0) * radius;
}

namespace {
Tensor param(Shape shape, Rng* rng, double radius) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (rng) init_uniform(t, *rng, radius);
  return t;
}
}  // namespace

Linear Linear::create(std::size_t in, std::size_t out, bool with_bias, Rng* rng, double radius) {
  Linear l;
  l.weight = param({out, in}, rng, radius);
  if (with_bias) l.bias = param({out}, rng, radius);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = x.rank() == 1 ? matmul(weight, x) : matmul(x, transpose(weight));
  return bias.defined() ? y + bias : y;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Linear Linear::clone() const {
  Linear l;
  l.weight = weight.clone(weight.requires_grad());
  if (bias.defined()) l.bias = bias.clone(bias.requires_grad());
  return l;
}

Tensor activate(Activation act, const Tensor& x) {
  switch (act) {
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  fail(ErrorCode::invalid_argument, "unknown activation");
}

Mlp Mlp::create(std::size_t in, std::size_t hidden, std::size_t out, Rng* rng, double radius) {
  return {Linear::create(in, hidden, true, rng, radius), Linear::create(hidden, out, true, rng, radius),
          Activation::tanh};
}

Tensor Mlp::operator()(const Tensor& x) const { return outer(activate(activation, inner(x))); }

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  inner.collect(prefix + ".inner", out);
  outer.collect(prefix + ".outer", out);
}

Mlp Mlp::clone() const { return {inner.clone(), outer.clone(), activation}; }

ElmanCell ElmanCell::create(std::size_t in, std::size_t hidden, Rng* rng, double radius) {
  return {param({hidden, in}, rng, radius), param({hidden, hidden}, rng, radius), param({hidden}, rng, radius)};
}

Tensor ElmanCell::step(const Tensor& h_prev, const Tensor& input) const {
  if (input.numel() != input_width()) {
    fail(ErrorCode::shape_mismatch, "ElmanCell: input width " + std::to_string(input.numel()) + ", expected " +
                                        std::to_string(input_width()));
  }
  return tanh(matmul(input_weight, input) + matmul(recurrent_weight, h_prev) + bias);
}

void ElmanCell::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".U", input_weight});
  out.push_back({prefix + ".V", recurrent_weight});
  out.push_back({prefix + ".b", bias});
}

ElmanCell ElmanCell::clone() const {
  return {input_weight.clone(true), recurrent_weight.clone(true), bias.clone(true)};
}

}  // namespace latentkit
