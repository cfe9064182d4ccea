#pragma once

// Planar and inverse autoregressive flows for variational posteriors.

#include <string>
#include <variant>
#include <vector>

#include "latentkit/variational.hpp"

namespace latentkit {

struct FlowOutput {
  Tensor z;
  Tensor log_det;  // scalar
};

// f(z) = z + u_hat tanh(w.z + b).
struct PlanarStep {
  Tensor u;  // [d]
  Tensor w;  // [d]
  Tensor b;  // [1]

  // w uniform(-radius, radius); u chosen so that u_hat = 0 (identity).
  static PlanarStep create(std::size_t d, Rng* rng, double radius);
  std::size_t dim() const { return u.numel(); }
  void collect(const std::string& prefix, ParameterList& out) const;
  PlanarStep clone() const;
};

// u_hat = u + (m(w.u) - w.u) w / |w|^2 with m(a) = -1 + softplus(a), so that
// w.u_hat >= -1. Returns u unchanged when w = 0.
Tensor planar_constrain(const Tensor& u, const Tensor& w);
FlowOutput planar_forward(const PlanarStep& step, const Tensor& z);

// One masked hidden layer (MADE). Output d gives (mu_d, log sigma_d) from
// z_{<d} only; f(z) = mu + sigma * z.
struct IafStep {
  Tensor w_in;    // [H, d]
  Tensor b_in;    // [H]
  Tensor w_out;   // [2d, H]; rows 0..d-1 shift, d..2d-1 log-scale
  Tensor b_out;   // [2d]
  Tensor mask_in;   // [H, d], constant 0/1
  Tensor mask_out;  // [2d, H], constant 0/1

  // Hidden degrees cycle over 1..max(1, d-1); output weights start at zero so
  // the step is the identity.
  static IafStep create(std::size_t d, std::size_t hidden, Rng* rng, double radius);
  // Validates that the masks make output d depend only on inputs < d.
  static IafStep from_masks(Tensor w_in, Tensor b_in, Tensor w_out, Tensor b_out, Tensor mask_in, Tensor mask_out);
  std::size_t dim() const { return w_in.dim(1); }
  // (mu, log sigma), each [d].
  std::pair<Tensor, Tensor> shift_and_log_scale(const Tensor& z) const;
  void collect(const std::string& prefix, ParameterList& out) const;
  IafStep clone() const;
};

FlowOutput iaf_forward(const IafStep& step, const Tensor& z);

enum class FlowKind { none, planar, iaf };
FlowKind parse_flow_kind(const std::string& name);
std::string flow_kind_name(FlowKind kind);

struct FlowStack {
  std::vector<std::variant<PlanarStep, IafStep>> steps;

  static FlowStack create(FlowKind kind, std::size_t depth, std::size_t d, Rng* rng, double radius, std::size_t iaf_hidden = 16);
  bool empty() const { return steps.empty(); }
  ParameterList parameters() const;
  FlowStack clone() const;
};

// Pushes z0 through the stack: log q_K = log q_0(z0) - sum_k log|det J_k|.
struct FlowDensity {
  Tensor z;
  Tensor log_q;
};
FlowDensity flow_log_density(const FlowStack& stack, const Tensor& z0, const DiagGaussian& base);

// Single-sample estimate with z0 = mu + sigma * eps pushed through the stack;
// the KL term is log q_K(z_K) - log p(z_K).
ElboTerms flow_elbo(const ContinuousTarget& target, const DiagGaussian& q0, const FlowStack& stack,
                    std::span<const double> eps, const ElboOptions& options = {});

}  // namespace latentkit
