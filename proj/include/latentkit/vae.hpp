#pragma once

// Amortized training (VAE) with annealing, free bits and optional flows, and
// the amortization-gap diagnostic.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latentkit/estimators.hpp"
#include "latentkit/flows.hpp"
#include "latentkit/variational.hpp"

namespace latentkit {

enum class Estimator { reparam, score, concrete, iwae, exact };
Estimator parse_estimator(const std::string& name);
std::string estimator_name(Estimator e);

struct VaeOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  OptimizerSettings optimizer{};
  std::uint64_t warmup_steps = 0;  // 0: beta held at `beta`
  double beta = 1.0;
  double free_bits = 0.0;
  std::size_t samples = 1;
  Estimator estimator = Estimator::reparam;
  std::size_t iwae_k = 5;
  double temperature = 0.5;
  RelaxedKl relaxed_kl = RelaxedKl::categorical;
  std::size_t eval_samples = 1;
  std::size_t eval_is_k = 10;  // 0 disables the importance-sampled estimate
  bool shuffle = true;
};

double beta_at(const VaeOptions& options, std::uint64_t step);

struct VaeEpochReport {
  std::size_t epoch = 0;
  std::string split;
  double elbo = 0.0;            // reconstruction - kl (beta = 1, no floor)
  double reconstruction = 0.0;  // per-sentence means
  double kl = 0.0;
  double kl_objective = 0.0;  // max(kl, free_bits), averaged per sentence
  double beta = 0.0;
  double lp_is = 0.0;  // NaN when disabled
};

struct VaeResult {
  std::vector<VaeEpochReport> reports;
  std::uint64_t steps = 0;
};

// Epoch 0 reports the initial state. `flow` may be null; flows need a
// Gaussian latent.
VaeResult train_vae(LatentModel& model, Encoder& encoder, FlowStack* flow, std::span<const Sentence> train,
                    std::span<const Sentence> heldout, const VaeOptions& options, Rng& rng,
                    const std::function<void(const VaeEpochReport&)>& on_report = {});

// Split-level evaluation with a dedicated rng stream.
VaeEpochReport evaluate_vae(const LatentModel& model, const Encoder& encoder, const FlowStack* flow,
                            std::span<const Sentence> data, const VaeOptions& options, double beta, Rng& rng);

struct GapOptions {
  SviOptions refine{200, 1e-2, OptimizerKind::plain_gradient, 1};
  std::size_t eval_samples = 1000;  // Monte Carlo ELBO evaluation, Gaussian q
  std::size_t is_k = 1000;          // log p(x) estimate when it cannot be enumerated
};

struct GapReport {
  double log_marginal = 0.0;
  double elbo_amortized = 0.0;
  double elbo_refined = 0.0;
  double inference_gap = 0.0;
  double approximation_gap = 0.0;
  double amortization_gap = 0.0;
  bool exact = false;     // log p(x) by enumeration; otherwise an IS estimate
  bool diverged = false;  // refinement failed; refined = amortized
  // ELBO after r refinement steps, r = 0..refine.steps (exact families only).
  std::vector<double> trajectory;
};

// lambda* comes from SVI started at the encoder output. amortization =
// ELBO(lambda*) - ELBO(phi); approximation = log p(x) - ELBO(lambda*);
// inference = approximation + amortization.
GapReport inference_gap_report(const LatentModel& model, const Encoder& encoder, const Sentence& x, const GapOptions& options,
                               Rng& rng);

// ELBO(lambda*) - ELBO(q_r): the part of the amortization gap left after r
// refinement steps. Needs an exact-family report.
double residual_amortization_gap(const GapReport& report, std::size_t r);

}  // namespace latentkit
