#pragma once

// Wake-sleep: the generative model learns from latents drawn by the encoder
// (wake), the encoder learns from pairs drawn by the model (sleep).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "latentkit/exact.hpp"
#include "latentkit/variational.hpp"

namespace latentkit {

struct PhantomBatch {
  std::vector<Draw> pairs;
  std::size_t discarded = 0;  // truncated draws dropped from the batch
};

// Ancestral draws under the current model; truncated sentences are dropped.
PhantomBatch sample_phantoms(const LatentModel& model, std::size_t count, const SampleOptions& options, Rng& rng);

// One latent per sentence from q (no gradient path), then one ascent step on
// the batch-mean log p(x, z) in the model's trainable parameters. Returns the
// objective value before the step.
double wake_step(LatentModel& model, const Encoder& encoder, std::span<const Sentence> batch, Optimizer& optimizer,
                 Rng& rng);

// One ascent step on the mean log q(z | x) over phantom pairs, encoder
// parameters only. Returns the objective (0 when every draw was truncated).
double sleep_step(const LatentModel& model, Encoder& encoder, std::size_t batch_size, Optimizer& optimizer, Rng& rng,
                  const SampleOptions& options, std::size_t* discarded = nullptr);

// Mean log q(z | x) over fixed pairs, differentiable in the encoder.
Tensor sleep_objective(const Encoder& encoder, std::span<const Draw> pairs);

struct WakeSleepOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  OptimizerSettings model_optimizer{};
  OptimizerSettings encoder_optimizer{};
  std::size_t wake_per_sleep = 1;  // wake steps per sleep step
  bool wake = true;
  bool sleep = true;
  bool shuffle = true;
  SampleOptions sample{};
};

struct WakeSleepReport {
  std::size_t epoch = 0;
  double loglik = 0.0;       // mean log p(x) (enumerable models), else NaN
  double mean_tv = 0.0;      // mean TV(q, exact posterior) (flat discrete), else NaN
  std::size_t discarded = 0;  // truncated phantoms this epoch
};

// Epoch 0 reports the initial state. Phantoms use rng.split(1).
std::vector<WakeSleepReport> wake_sleep_train(LatentModel& model, Encoder& encoder, std::span<const Sentence> corpus,
                                              const WakeSleepOptions& options, Rng& rng,
                                              const std::function<void(const WakeSleepReport&)>& on_report = {});

// Mean total variation between q(z | x) and the exact posterior.
double mean_posterior_tv(const DiscreteLatentModel& model, const Encoder& encoder, std::span<const Sentence> corpus);

}  // namespace latentkit
