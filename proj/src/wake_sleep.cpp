#include "latentkit/wake_sleep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latentkit/error.hpp"
#include "latentkit/estimators.hpp"

namespace latentkit {

namespace {

const DiscreteLatentModel* as_discrete(const LatentModel& m) { return dynamic_cast<const DiscreteLatentModel*>(&m); }
const ContinuousLatentModel* as_continuous(const LatentModel& m) { return dynamic_cast<const ContinuousLatentModel*>(&m); }

void check_pairing(const LatentModel& model, const Encoder& encoder) {
  const auto* d = as_discrete(model);
  const auto* c = as_continuous(model);
  if (!d && !c) fail(ErrorCode::unsupported_model, "wake-sleep needs a flat latent; model '" + model.family() + "' has none");
  const LatentKind want = d ? LatentKind::categorical : LatentKind::gaussian;
  const std::size_t size = d ? d->num_states() : c->latent_dim();
  if (encoder.spec().latent != want || encoder.spec().latent_size != size) {
    fail(ErrorCode::config, "encoder does not match the latent of model '" + model.family() + "'");
  }
}

Tensor draw_tensor(const std::vector<double>& z) { return Tensor::from({z.size()}, z); }

}  // namespace

PhantomBatch sample_phantoms(const LatentModel& model, std::size_t count, const SampleOptions& options, Rng& rng) {
  NoGradGuard no_grad;
  PhantomBatch batch;
  batch.pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Draw d = model.sample(rng, options);
    if (d.truncated || d.x.empty()) {
      ++batch.discarded;
      continue;
    }
    batch.pairs.push_back(std::move(d));
  }
  return batch;
}

double wake_step(LatentModel& model, const Encoder& encoder, std::span<const Sentence> batch, Optimizer& optimizer,
                 Rng& rng) {
  check_pairing(model, encoder);
  if (batch.empty()) fail(ErrorCode::invalid_argument, "wake_step: empty batch");
  const auto* d = as_discrete(model);
  const auto* c = as_continuous(model);

  std::vector<std::size_t> states(batch.size());
  std::vector<std::vector<double>> zs(batch.size());
  {
    NoGradGuard no_grad;
    for (std::size_t n = 0; n < batch.size(); ++n) {
      VariationalParams q = encoder(batch[n]);
      if (d) {
        states[n] = sample_index(softmax(q.logits.values()), rng);
      } else {
        const auto mean = q.gaussian.mean.values();
        const auto log_var = q.gaussian.log_var.values();
        zs[n].resize(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) zs[n][i] = mean[i] + std::exp(0.5 * log_var[i]) * rng.normal();
      }
    }
  }

  ParameterList params = model.trainable_parameters();
  zero_grads(params);
  std::vector<Tensor> terms;
  terms.reserve(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    terms.push_back(d ? d->log_joint(batch[n], states[n]) : c->log_joint(batch[n], draw_tensor(zs[n])));
  }
  Tensor objective = sum(stack(terms)) / static_cast<double>(batch.size());
  const double value = objective.item();
  if (!std::isfinite(value)) fail(ErrorCode::numeric, "wake_step: non-finite complete-data log-likelihood");
  objective.backward();
  optimizer.step(params);
  return value;
}

Tensor sleep_objective(const Encoder& encoder, std::span<const Draw> pairs) {
  if (pairs.empty()) fail(ErrorCode::invalid_argument, "sleep_objective: no phantom pairs");
  std::vector<Tensor> terms;
  terms.reserve(pairs.size());
  for (const auto& p : pairs) {
    VariationalParams q = encoder(p.x);
    if (q.kind == LatentKind::categorical) {
      terms.push_back(variational_log_prob(q, p.states.at(0)));
    } else {
      terms.push_back(variational_log_prob(q, draw_tensor(p.z)));
    }
  }
  return sum(stack(terms)) / static_cast<double>(pairs.size());
}

double sleep_step(const LatentModel& model, Encoder& encoder, std::size_t batch_size, Optimizer& optimizer, Rng& rng,
                  const SampleOptions& options, std::size_t* discarded) {
  check_pairing(model, encoder);
  PhantomBatch batch = sample_phantoms(model, batch_size, options, rng);
  if (discarded) *discarded = batch.discarded;
  if (batch.pairs.empty()) return 0.0;
  ParameterList params = encoder.parameters();
  zero_grads(params);
  Tensor objective = sleep_objective(encoder, batch.pairs);
  const double value = objective.item();
  objective.backward();
  optimizer.step(params);
  return value;
}

double mean_posterior_tv(const DiscreteLatentModel& model, const Encoder& encoder, std::span<const Sentence> corpus) {
  if (corpus.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& x : corpus) {
    const auto exact = softmax(model.log_joint_all(x).values());
    const auto q = softmax(encoder(x).logits.values());
    total += total_variation(exact, q);
  }
  return total / static_cast<double>(corpus.size());
}

std::vector<WakeSleepReport> wake_sleep_train(LatentModel& model, Encoder& encoder, std::span<const Sentence> corpus,
                                              const WakeSleepOptions& options, Rng& rng,
                                              const std::function<void(const WakeSleepReport&)>& on_report) {
  check_pairing(model, encoder);
  if (corpus.empty()) fail(ErrorCode::invalid_argument, "empty training corpus");
  if (options.batch_size == 0) fail(ErrorCode::config, "batch_size must be positive");
  if (options.wake_per_sleep == 0) fail(ErrorCode::config, "wake_per_sleep must be positive");

  const auto* d = as_discrete(model);
  Optimizer model_opt(options.model_optimizer);
  Optimizer encoder_opt(options.encoder_optimizer);
  Rng phantom_rng = rng.split(1);
  std::vector<WakeSleepReport> reports;

  auto report = [&](std::size_t epoch, std::size_t discarded) {
    WakeSleepReport r;
    r.epoch = epoch;
    r.discarded = discarded;
    if (d) {
      r.loglik = corpus_log_marginal(model, corpus) / static_cast<double>(corpus.size());
      r.mean_tv = mean_posterior_tv(*d, encoder, corpus);
    } else {
      // Importance-sampled estimate with q as the proposal.
      Rng eval_rng = rng.split(0x9e3779b9ULL + epoch);
      NoGradGuard no_grad;
      double total = 0.0;
      for (const auto& x : corpus) total += is_log_marginal(model, encoder(x), x, 10, eval_rng);
      r.loglik = total / static_cast<double>(corpus.size());
      r.mean_tv = std::numeric_limits<double>::quiet_NaN();
    }
    reports.push_back(r);
    if (on_report) on_report(r);
  };

  report(0, 0);
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    auto order = epoch_order(corpus.size(), options.shuffle, rng);
    std::size_t discarded = 0;
    std::size_t wake_count = 0;
    std::vector<Sentence> batch;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
      if (options.wake) wake_step(model, encoder, batch, model_opt, rng);
      if (options.sleep && ++wake_count % options.wake_per_sleep == 0) {
        std::size_t dropped = 0;
        sleep_step(model, encoder, batch.size(), encoder_opt, phantom_rng, options.sample, &dropped);
        discarded += dropped;
      }
    }
    report(epoch, discarded);
  }
  return reports;
}

}  // namespace latentkit
