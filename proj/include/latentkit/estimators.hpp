#pragma once

// Monte Carlo gradient estimators for the ELBO and the importance-weighted
// bound, and the importance-sampled log-likelihood evaluator.
//
// Every estimator draws its samples first, then for each sample builds a
// scalar surrogate whose gradient is that sample's estimate, and reads the
// adjoints of `targets`. Mean and per-coordinate variance are accumulated
// across samples.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latentkit/variational.hpp"

namespace latentkit {

struct GradEntry {
  std::string name;
  Shape shape;
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased, over per-sample estimates
};

struct GradEstimate {
  std::string estimator;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<GradEntry> entries;

  const GradEntry& at(const std::string& name) const;
  // All means concatenated in entry order.
  std::vector<double> flat_mean() const;
};

// Flat discrete latent: log p(x | z = k), optionally its simplex extension,
// and the prior logits.
struct DiscreteTarget {
  std::function<Tensor()> log_likelihood_all;                // [K]
  std::function<Tensor(const Tensor& s)> relaxed_likelihood;  // empty when not simplex-extensible
  std::function<Tensor()> log_prior_all;                     // [K]
  std::string family;
};

DiscreteTarget discrete_target_for(const DiscreteLatentModel& model, const Sentence& x);

// E_q[(log p(x, z) - log q(z)) grad log q(z)] + E_q[grad log p(x, z)], with z
// drawn without a gradient path.
GradEstimate score_function_grad(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                                 std::size_t n_samples, Rng& rng);
GradEstimate score_function_grad(const DiscreteTarget& target, const Tensor& q_logits, const ParameterList& targets,
                                 std::size_t n_samples, Rng& rng);

// Pathwise gradient of log p(x | mu + sigma * eps) minus the analytic KL.
GradEstimate reparam_grad(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                          std::size_t n_samples, Rng& rng);
// Same, with caller-supplied noise (n_samples * d values).
GradEstimate reparam_grad(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                          std::span<const double> noise);

enum class RelaxedKl { categorical, concrete };

// Pathwise gradient through s = softmax((logits + g) / tau) of
// log p(x | s) - KL. Fails for targets without a simplex extension.
GradEstimate concrete_relaxed_grad(const DiscreteTarget& target, const Tensor& q_logits, double temperature,
                                   const ParameterList& targets, std::size_t n_samples, Rng& rng,
                                   RelaxedKl kl = RelaxedKl::categorical);
// Single relaxed objective for caller-supplied Gumbel noise.
Tensor concrete_relaxed_objective(const DiscreteTarget& target, const Tensor& q_logits, double temperature,
                                  std::span<const double> gumbel, RelaxedKl kl = RelaxedKl::categorical);

// Exact gradient of the categorical ELBO (enumeration), for comparison.
GradEstimate exact_categorical_grad(const DiscreteTarget& target, const Tensor& q_logits, const ParameterList& targets);

struct IwaeResult {
  Tensor value;                      // log I_K, differentiable
  std::vector<double> log_weights;   // log p(x, z_k) - log q(z_k)
  std::vector<double> weights;       // softmax of log_weights
};

// log (1/K) sum_k p(x, z_k) / q(z_k) with z_k = mu + sigma * eps_k.
IwaeResult iwae_bound(const ContinuousTarget& target, const DiagGaussian& q, std::span<const double> noise);
IwaeResult iwae_bound(const ContinuousTarget& target, const DiagGaussian& q, std::size_t k, Rng& rng);
// Categorical q: z_k drawn from q (value only; no pathwise gradient).
IwaeResult iwae_bound(const DiscreteTarget& target, const Tensor& q_logits, std::size_t k, Rng& rng);

// Gradient of log I_K: weight-averaged joint gradients for theta, pathwise
// for the Gaussian parameters. One estimate per call (samples = 1).
GradEstimate iwae_grads(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                        std::span<const double> noise);

// Importance-sampled log p(x) with K proposals from q, evaluated in chunks.
double is_log_marginal(const ContinuousTarget& target, const DiagGaussian& q, std::size_t k, Rng& rng);
double is_log_marginal(const DiscreteTarget& target, const Tensor& q_logits, std::size_t k, Rng& rng);
double is_log_marginal(const LatentModel& model, const VariationalParams& q, const Sentence& x, std::size_t k, Rng& rng);

// One-dimensional toy: z ~ N(0, 1), x | z ~ N(z, 1), one observation x.
struct GaussianToy {
  double x = 1.5;

  ContinuousTarget target() const;
  // Closed-form ELBO gradient at q = N(mean, exp(log_var)):
  // {d/dmean, d/dlog_var}.
  std::array<double, 2> elbo_gradient(double mean, double log_var) const;
};

}  // namespace latentkit
