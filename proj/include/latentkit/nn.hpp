#pragma once

#include <string>

#include "latentkit/rng.hpp"
#include "latentkit/tensor.hpp"

namespace latentkit {

// Fills a leaf with uniform(-radius, radius) draws.
void init_uniform(Tensor& t, Rng& rng, double radius);

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]; undefined when the layer has no bias

  // Zero weights when `rng` is null.
  static Linear create(std::size_t in, std::size_t out, bool with_bias, Rng* rng, double radius);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  // x: [in] -> [out], or [N, in] -> [N, out].
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  Linear clone() const;
};

enum class Activation { tanh, relu, sigmoid };
Tensor activate(Activation act, const Tensor& x);

// h = V act(W z + b) + a
struct Mlp {
  Linear inner;
  Linear outer;
  Activation activation = Activation::tanh;

  static Mlp create(std::size_t in, std::size_t hidden, std::size_t out, Rng* rng, double radius);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  Mlp clone() const;
};

// Elman recurrence h_t = tanh(U x_t + V h_{t-1} + b).
struct ElmanCell {
  Tensor input_weight;      // U: [d, in]
  Tensor recurrent_weight;  // V: [d, d]
  Tensor bias;              // b: [d]

  static ElmanCell create(std::size_t in, std::size_t hidden, Rng* rng, double radius);
  std::size_t hidden() const { return recurrent_weight.dim(0); }
  std::size_t input_width() const { return input_weight.dim(1); }
  Tensor step(const Tensor& h_prev, const Tensor& input) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  ElmanCell clone() const;
};

}  // namespace latentkit
