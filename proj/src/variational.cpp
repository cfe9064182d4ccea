#include "latentkit/variational.hpp"

#include <algorithm>
#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

VariationalParams VariationalParams::categorical(Tensor logits) {
  VariationalParams q;
  q.kind = LatentKind::categorical;
  q.logits = std::move(logits);
  return q;
}

VariationalParams VariationalParams::normal(Tensor mean, Tensor log_var) {
  if (mean.numel() != log_var.numel()) {
    fail(ErrorCode::shape_mismatch, "Gaussian q: mean has " + std::to_string(mean.numel()) + " entries, log_var " + std::to_string(log_var.numel()));
  }
  VariationalParams q;
  q.kind = LatentKind::gaussian;
  q.gaussian = {std::move(mean), std::move(log_var)};
  return q;
}

VariationalParams VariationalParams::leaf_copy() const {
  if (kind == LatentKind::categorical) return categorical(logits.clone(true));
  return normal(gaussian.mean.clone(true), gaussian.log_var.clone(true));
}

ParameterList VariationalParams::tensors() const {
  if (kind == LatentKind::categorical) return {{"q.logits", logits}};
  return {{"q.mean", gaussian.mean}, {"q.log_var", gaussian.log_var}};
}

Tensor ContinuousTarget::log_prior(const Tensor& z) const { return unit_gaussian_log_prob(prior_mean, z); }

ContinuousTarget target_for(const ContinuousLatentModel& model, const Sentence& x) {
  return {[&model, x](const Tensor& z) { return model.log_likelihood(x, z); }, model.prior_mean()};
}

ElboReport to_report(const ElboTerms& terms, const ElboOptions& options, std::uint64_t seed) {
  ElboReport r;
  r.elbo = terms.objective.item();
  r.reconstruction = terms.reconstruction.item();
  r.kl = terms.kl.item();
  r.samples = options.samples;
  r.beta = options.beta;
  r.free_bits = options.free_bits;
  r.seed = seed;
  return r;
}

namespace {

ElboTerms assemble(Tensor recon, Tensor kl, const ElboOptions& options) {
  if (options.beta < 0.0) fail(ErrorCode::invalid_argument, "beta must be nonnegative");
  Tensor penalty = free_bits(kl, options.free_bits) * options.beta;
  return {recon - penalty, recon, kl};
}

}  // namespace

ElboTerms elbo_categorical(const DiscreteLatentModel& model, const Sentence& x, const Tensor& q_logits,
                           const ElboOptions& options) {
  if (q_logits.numel() != model.num_states()) {
    fail(ErrorCode::shape_mismatch, "categorical q has " + std::to_string(q_logits.numel()) + " states, model has " + std::to_string(model.num_states()));
  }
  Tensor logits = reshape(q_logits, {q_logits.numel()});
  Tensor recon = sum(softmax(logits) * model.log_likelihood_all(x));
  Tensor kl = categorical_kl(logits, model.log_prior_all());
  return assemble(recon, kl, options);
}

Tensor gaussian_kl_to_prior(const DiagGaussian& q, const Tensor& prior_mean) {
  return gaussian_kl_standard({q.mean - reshape(prior_mean, q.mean.shape()), q.log_var});
}

ElboTerms elbo_gaussian(const ContinuousTarget& target, const DiagGaussian& q, std::span<const double> noise,
                        const ElboOptions& options) {
  const std::size_t d = q.dim();
  if (d == 0 || noise.empty() || noise.size() % d != 0) {
    fail(ErrorCode::shape_mismatch, "noise length " + std::to_string(noise.size()) + " is not a positive multiple of d=" + std::to_string(d));
  }
  const std::size_t samples = noise.size() / d;
  std::vector<Tensor> recon_terms, kl_terms;
  for (std::size_t s = 0; s < samples; ++s) {
    Tensor eps = Tensor::from(q.mean.shape(), {noise.begin() + s * d, noise.begin() + (s + 1) * d});
    Tensor z = gaussian_sample_reparam(q, eps);
    recon_terms.push_back(target.log_likelihood(z));
    if (options.kl == KlMode::sampled) kl_terms.push_back(gaussian_log_prob(q, z) - target.log_prior(z));
  }
  const double inv = 1.0 / static_cast<double>(samples);
  Tensor recon = sum(stack(recon_terms)) * inv;
  Tensor kl = options.kl == KlMode::analytic ? gaussian_kl_to_prior(q, target.prior_mean) : sum(stack(kl_terms)) * inv;
  return assemble(recon, kl, options);
}

ElboReport elbo_estimate(const LatentModel& model, const VariationalParams& q, const Sentence& x, const ElboOptions& options,
                         Rng& rng) {
  if (options.samples == 0) fail(ErrorCode::invalid_argument, "n_samples must be positive");
  NoGradGuard no_grad;
  if (q.kind == LatentKind::categorical) {
    const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model);
    if (!d) fail(ErrorCode::unsupported_model, "categorical q is incompatible with model '" + model.family() + "'");
    return to_report(elbo_categorical(*d, x, q.logits, options), options, rng.seed());
  }
  const auto* c = dynamic_cast<const ContinuousLatentModel*>(&model);
  if (!c) fail(ErrorCode::unsupported_model, "Gaussian q is incompatible with model '" + model.family() + "'");
  auto noise = rng.normals(options.samples * q.gaussian.dim());
  return to_report(elbo_gaussian(target_for(*c, x), q.gaussian, noise, options), options, rng.seed());
}

double kl_anneal(std::uint64_t step, std::uint64_t warmup_steps) {
  if (warmup_steps == 0) fail(ErrorCode::invalid_argument, "warmup_steps must be at least 1");
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

Tensor free_bits(const Tensor& kl, double floor) {
  if (floor < 0.0) fail(ErrorCode::invalid_argument, "free-bits floor must be nonnegative");
  if (floor == 0.0) return kl;
  return maximum(kl, floor);
}

double free_bits(double kl, double floor) {
  if (floor < 0.0) fail(ErrorCode::invalid_argument, "free-bits floor must be nonnegative");
  return std::max(kl, floor);
}

SviResult svi_fit(const LatentModel& model, const Sentence& x, const VariationalParams& init, const SviOptions& options,
                  Rng& rng) {
  const auto* discrete = dynamic_cast<const DiscreteLatentModel*>(&model);
  const auto* continuous = dynamic_cast<const ContinuousLatentModel*>(&model);
  if (init.kind == LatentKind::categorical && !discrete) {
    fail(ErrorCode::unsupported_model, "categorical q is incompatible with model '" + model.family() + "'");
  }
  if (init.kind == LatentKind::gaussian && !continuous) {
    fail(ErrorCode::unsupported_model, "Gaussian q is incompatible with model '" + model.family() + "'");
  }
  if (options.samples == 0) fail(ErrorCode::invalid_argument, "SVI needs at least one sample per step");
  SviResult result;
  result.q = init.leaf_copy();
  ParameterList lambda = result.q.tensors();
  FreezeGuard freeze(model.parameters());
  Optimizer opt({options.optimizer, options.learning_rate});
  ElboOptions eo;
  eo.samples = options.samples;

  auto objective = [&]() {
    if (discrete) return elbo_categorical(*discrete, x, result.q.logits, eo).objective;
    auto noise = rng.normals(options.samples * result.q.gaussian.dim());
    return elbo_gaussian(target_for(*continuous, x), result.q.gaussian, noise, eo).objective;
  };
  for (std::size_t step = 0; step <= options.steps; ++step) {
    Tensor value = objective();
    const double v = value.item();
    result.elbo.push_back(v);
    if (!std::isfinite(v) || v < kDivergenceFloor) {
      fail(ErrorCode::numeric, "SVI diverged at step " + std::to_string(step) + " (ELBO " + std::to_string(v) + ")");
    }
    if (step == options.steps) break;
    zero_grads(lambda);
    value.backward();
    opt.step(lambda);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Encoder

Encoder Encoder::create(const EncoderSpec& spec, Rng* rng, double radius) {
  if (spec.vocab_size == 0 || spec.latent_size == 0 || spec.embed == 0) {
    fail(ErrorCode::invalid_argument, "encoder sizes must be positive");
  }
  if (spec.latent == LatentKind::state_sequence) fail(ErrorCode::unsupported_model, "no encoder for state-sequence latents");
  Encoder e;
  e.spec_ = spec;
  e.embedding_ = Tensor::zeros({spec.vocab_size, spec.embed}, true);
  if (rng) init_uniform(e.embedding_, *rng, radius);
  std::size_t width = spec.embed;
  if (spec.kind == EncoderKind::rnn) {
    if (spec.hidden == 0) fail(ErrorCode::invalid_argument, "encoder hidden width must be positive");
    e.cell_ = ElmanCell::create(spec.embed, spec.hidden, rng, radius);
    e.pool_ = Linear::create(spec.hidden, spec.hidden, true, rng, radius);
    width = spec.hidden;
  }
  e.head1_ = Linear::create(width, spec.latent_size, true, rng, radius);
  if (spec.latent == LatentKind::gaussian) e.head2_ = Linear::create(width, spec.latent_size, true, rng, radius);
  return e;
}

VariationalParams Encoder::operator()(const Sentence& x) const {
  check_sentence(x, spec_.vocab_size, "sentence");
  if (x.empty()) fail(ErrorCode::invalid_argument, "encoder input is empty");
  Tensor h;
  if (spec_.kind == EncoderKind::rnn) {
    h = Tensor::zeros({spec_.hidden});
    for (TokenId t : x) h = cell_.step(h, row(embedding_, t));
    h = tanh(pool_(h));
  } else {
    const std::size_t e = spec_.embed;
    std::vector<std::size_t> idx;
    idx.reserve(x.size() * e);
    for (TokenId t : x) {
      for (std::size_t j = 0; j < e; ++j) idx.push_back(t * e + j);
    }
    h = sum(reshape(take(embedding_, idx), {x.size(), e}), 0);
  }
  if (spec_.latent == LatentKind::categorical) return VariationalParams::categorical(head1_(h));
  return VariationalParams::normal(head1_(h), head2_(h));
}

ParameterList Encoder::parameters() const {
  ParameterList out{{"encoder.embedding", embedding_}};
  if (spec_.kind == EncoderKind::rnn) {
    cell_.collect("encoder.cell", out);
    pool_.collect("encoder.pool", out);
  }
  head1_.collect("encoder.head1", out);
  if (spec_.latent == LatentKind::gaussian) head2_.collect("encoder.head2", out);
  return out;
}

Encoder Encoder::clone() const {
  Encoder e;
  e.spec_ = spec_;
  e.embedding_ = embedding_.clone(true);
  if (spec_.kind == EncoderKind::rnn) {
    e.cell_ = cell_.clone();
    e.pool_ = pool_.clone();
  }
  e.head1_ = head1_.clone();
  if (spec_.latent == LatentKind::gaussian) e.head2_ = head2_.clone();
  return e;
}

VariationalParams encoder_forward(const Encoder& encoder, const Sentence& x) { return encoder(x); }

Tensor variational_log_prob(const VariationalParams& q, std::size_t k) {
  if (q.kind != LatentKind::categorical) fail(ErrorCode::invalid_argument, "state index given to a Gaussian q");
  if (k >= q.logits.numel()) fail(ErrorCode::out_of_range, "state " + std::to_string(k) + " out of range");
  return pick(log_softmax(reshape(q.logits, {q.logits.numel()})), k);
}

Tensor variational_log_prob(const VariationalParams& q, const Tensor& z) {
  if (q.kind != LatentKind::gaussian) fail(ErrorCode::invalid_argument, "vector given to a categorical q");
  return gaussian_log_prob(q.gaussian, z);
}

}  // namespace latentkit
