#pragma once

// Ground-truth inference by enumeration and dynamic programming, and
// training by gradient ascent on the exact log marginal likelihood.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "latentkit/hmm.hpp"
#include "latentkit/models.hpp"
#include "latentkit/optim.hpp"

namespace latentkit {

using Corpus = std::vector<Sentence>;

inline constexpr double kMaxEnumeration = 1e6;

// Normalized log posterior over an enumerated latent support. Flat latents
// have `num_states` entries; HMM paths have K^T entries in mixed-radix order
// with z_1 the most significant digit.
struct PosteriorTable {
  std::size_t num_states = 0;
  std::size_t length = 1;
  std::vector<double> log_probs;

  std::vector<double> probs() const;
  std::vector<std::size_t> configuration(std::size_t index) const;
};

PosteriorTable enumerate_posterior(const LatentModel& model, const Sentence& x);

// Value by brute-force enumeration; HMMs enumerate all K^T paths and refuse
// supports beyond kMaxEnumeration.
double log_marginal_enumeration(const LatentModel& model, const Sentence& x);

// Differentiable log p(x): log-sum-exp over K for flat latents, the forward
// algorithm for HMMs.
Tensor log_marginal(const LatentModel& model, const Sentence& x);
// Sum over a batch; flat latents use the family's batched log joint.
Tensor log_marginal_sum(const LatentModel& model, std::span<const Sentence> batch);
double corpus_log_marginal(const LatentModel& model, std::span<const Sentence> corpus);

struct DirectOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 0;  // 0: full batch
  OptimizerSettings optimizer{};
  bool shuffle = true;
};

struct EpochCallbackArgs {
  std::size_t epoch;
  double loglik;
};

struct DirectTrace {
  // Entry 0 is the initial value; entry e is after epoch e.
  std::vector<double> loglik;
};

DirectTrace train_direct_marginal(LatentModel& model, std::span<const Sentence> corpus, const DirectOptions& options,
                                  Rng& rng, const std::function<void(const EpochCallbackArgs&)>& on_epoch = {});

// Minibatch index order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, Rng& rng);

}  // namespace latentkit
