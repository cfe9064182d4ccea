#include "latentkit/vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latentkit/error.hpp"
#include "latentkit/exact.hpp"

namespace latentkit {

Estimator parse_estimator(const std::string& name) {
  if (name == "reparam") return Estimator::reparam;
  if (name == "score") return Estimator::score;
  if (name == "concrete") return Estimator::concrete;
  if (name == "iwae") return Estimator::iwae;
  if (name == "exact") return Estimator::exact;
  fail(ErrorCode::config, "unknown estimator '" + name + "' (expected reparam, score, concrete, iwae or exact)");
}

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::reparam: return "reparam";
    case Estimator::score: return "score";
    case Estimator::concrete: return "concrete";
    case Estimator::iwae: return "iwae";
    case Estimator::exact: return "exact";
  }
  return "reparam";
}

double beta_at(const VaeOptions& options, std::uint64_t step) {
  if (options.warmup_steps == 0) return options.beta;
  return options.beta * kl_anneal(step, options.warmup_steps);
}

namespace {

struct Roles {
  const DiscreteLatentModel* discrete = nullptr;
  const ContinuousLatentModel* continuous = nullptr;
};

Roles roles_of(const LatentModel& model, const Encoder& encoder, const FlowStack* flow, const VaeOptions& options) {
  Roles r{dynamic_cast<const DiscreteLatentModel*>(&model), dynamic_cast<const ContinuousLatentModel*>(&model)};
  if (!r.discrete && !r.continuous) fail(ErrorCode::unsupported_model, "amortized training needs a flat latent; model '" + model.family() + "' has none");
  const LatentKind want = r.discrete ? LatentKind::categorical : LatentKind::gaussian;
  if (encoder.spec().latent != want) fail(ErrorCode::config, "encoder latent type does not match model '" + model.family() + "'");
  const std::size_t size = r.discrete ? r.discrete->num_states() : r.continuous->latent_dim();
  if (encoder.spec().latent_size != size) fail(ErrorCode::config, "encoder latent size does not match the model");
  if (flow && !flow->empty() && !r.continuous) fail(ErrorCode::config, "flows need a Gaussian latent");
  if (r.discrete && (options.estimator == Estimator::reparam || options.estimator == Estimator::iwae)) {
    fail(ErrorCode::config, "estimator '" + estimator_name(options.estimator) + "' needs a reparameterizable Gaussian latent; "
                            "use exact, score or concrete for '" + model.family() + "'");
  }
  if (r.continuous && (options.estimator == Estimator::exact || options.estimator == Estimator::concrete)) {
    fail(ErrorCode::config, "estimator '" + estimator_name(options.estimator) + "' needs a categorical latent");
  }
  if (options.samples == 0) fail(ErrorCode::config, "samples must be positive");
  return r;
}

Tensor penalty(const Tensor& kl, const VaeOptions& o, double beta) { return free_bits(kl, o.free_bits) * beta; }

Tensor train_objective(const Roles& roles, const Encoder& encoder, const FlowStack* flow, const Sentence& x,
                       const VaeOptions& o, double beta, Rng& rng) {
  VariationalParams q = encoder(x);
  const double inv = 1.0 / static_cast<double>(o.samples);
  if (roles.discrete) {
    const DiscreteLatentModel& m = *roles.discrete;
    if (o.estimator == Estimator::exact) {
      ElboOptions eo;
      eo.beta = beta;
      eo.free_bits = o.free_bits;
      return elbo_categorical(m, x, q.logits, eo).objective;
    }
    Tensor kl = categorical_kl(q.logits, m.log_prior_all());
    if (o.estimator == Estimator::score) {
      Tensor ll_all = m.log_likelihood_all(x);
      const auto probs = softmax(q.logits.values());
      std::vector<Tensor> terms;
      for (std::size_t s = 0; s < o.samples; ++s) {
        const std::size_t k = sample_index(probs, rng);
        Tensor ll = pick(ll_all, k);
        terms.push_back(ll + variational_log_prob(q, k) * ll.item());
      }
      return sum(stack(terms)) * inv - penalty(kl, o, beta);
    }
    DiscreteTarget target = discrete_target_for(m, x);
    if (!target.relaxed_likelihood) {
      fail(ErrorCode::unsupported_model, "model '" + m.family() + "' has no simplex extension of its likelihood");
    }
    std::vector<Tensor> recon, kls;
    Concrete qc(q.logits, o.temperature);
    for (std::size_t s = 0; s < o.samples; ++s) {
      Tensor sample = concrete_sample(qc, gumbel_noise(qc.size(), rng));
      recon.push_back(target.relaxed_likelihood(sample));
      if (o.relaxed_kl == RelaxedKl::concrete) {
        Concrete pc(log_softmax(m.log_prior_all()), o.temperature);
        kls.push_back(concrete_log_density(sample, qc) - concrete_log_density(sample, pc));
      }
    }
    if (o.relaxed_kl == RelaxedKl::concrete) kl = sum(stack(kls)) * inv;
    return sum(stack(recon)) * inv - penalty(kl, o, beta);
  }

  const ContinuousTarget target = target_for(*roles.continuous, x);
  const std::size_t d = q.gaussian.dim();
  if (flow && !flow->empty()) {
    std::vector<Tensor> terms;
    ElboOptions eo;
    eo.beta = beta;
    eo.free_bits = o.free_bits;
    for (std::size_t s = 0; s < o.samples; ++s) terms.push_back(flow_elbo(target, q.gaussian, *flow, rng.normals(d), eo).objective);
    return sum(stack(terms)) * inv;
  }
  switch (o.estimator) {
    case Estimator::reparam: {
      ElboOptions eo;
      eo.samples = o.samples;
      eo.beta = beta;
      eo.free_bits = o.free_bits;
      return elbo_gaussian(target, q.gaussian, rng.normals(o.samples * d), eo).objective;
    }
    case Estimator::score: {
      std::vector<Tensor> terms;
      for (std::size_t s = 0; s < o.samples; ++s) {
        auto eps = rng.normals(d);
        std::vector<double> zv(d);
        for (std::size_t i = 0; i < d; ++i) zv[i] = q.gaussian.mean[i] + std::exp(0.5 * q.gaussian.log_var[i]) * eps[i];
        Tensor z = Tensor::from(q.gaussian.mean.shape(), zv);
        Tensor ll = target.log_likelihood(z);
        terms.push_back(ll + variational_log_prob(q, z) * ll.item());
      }
      return sum(stack(terms)) * inv - penalty(gaussian_kl_to_prior(q.gaussian, target.prior_mean), o, beta);
    }
    case Estimator::iwae:
      return iwae_bound(target, q.gaussian, rng.normals(o.iwae_k * d)).value;
    default:
      break;
  }
  fail(ErrorCode::config, "estimator incompatible with a Gaussian latent");
}

struct FlowEval {
  double recon = 0.0;
  double kl = 0.0;
  double lp_is = 0.0;
};

FlowEval evaluate_flow(const ContinuousTarget& target, const DiagGaussian& q, const FlowStack& flow, std::size_t samples,
                       std::size_t is_k, Rng& rng) {
  FlowEval out;
  const std::size_t d = q.dim();
  for (std::size_t s = 0; s < samples; ++s) {
    ElboTerms t = flow_elbo(target, q, flow, rng.normals(d));
    out.recon += t.reconstruction.item() / static_cast<double>(samples);
    out.kl += t.kl.item() / static_cast<double>(samples);
  }
  if (is_k > 0) {
    std::vector<double> lw;
    for (std::size_t s = 0; s < is_k; ++s) {
      Tensor z0 = gaussian_sample_reparam(q, Tensor::from(q.mean.shape(), rng.normals(d)));
      FlowDensity dens = flow_log_density(flow, z0, q);
      lw.push_back(target.log_joint(dens.z).item() - dens.log_q.item());
    }
    out.lp_is = log_sum_exp(lw) - std::log(static_cast<double>(is_k));
  }
  return out;
}

}  // namespace

VaeEpochReport evaluate_vae(const LatentModel& model, const Encoder& encoder, const FlowStack* flow,
                            std::span<const Sentence> data, const VaeOptions& options, double beta, Rng& rng) {
  const Roles roles = roles_of(model, encoder, flow, options);
  NoGradGuard no_grad;
  VaeEpochReport r;
  r.beta = beta;
  r.lp_is = options.eval_is_k > 0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  if (data.empty()) return r;
  const double inv = 1.0 / static_cast<double>(data.size());
  for (const auto& x : data) {
    VariationalParams q = encoder(x);
    double recon = 0.0, kl = 0.0, lp = 0.0;
    if (roles.discrete) {
      ElboTerms t = elbo_categorical(*roles.discrete, x, q.logits);
      recon = t.reconstruction.item();
      kl = t.kl.item();
      if (options.eval_is_k > 0) lp = is_log_marginal(model, q, x, options.eval_is_k, rng);
    } else if (flow && !flow->empty()) {
      FlowEval fe = evaluate_flow(target_for(*roles.continuous, x), q.gaussian, *flow, options.eval_samples, options.eval_is_k, rng);
      recon = fe.recon;
      kl = fe.kl;
      lp = fe.lp_is;
    } else {
      ElboOptions eo;
      eo.samples = options.eval_samples;
      ContinuousTarget target = target_for(*roles.continuous, x);
      ElboTerms t = elbo_gaussian(target, q.gaussian, rng.normals(eo.samples * q.gaussian.dim()), eo);
      recon = t.reconstruction.item();
      kl = t.kl.item();
      if (options.eval_is_k > 0) lp = is_log_marginal(target, q.gaussian, options.eval_is_k, rng);
    }
    r.reconstruction += recon * inv;
    r.kl += kl * inv;
    r.kl_objective += free_bits(kl, options.free_bits) * inv;
    if (options.eval_is_k > 0) r.lp_is += lp * inv;
  }
  r.elbo = r.reconstruction - r.kl;
  return r;
}

VaeResult train_vae(LatentModel& model, Encoder& encoder, FlowStack* flow, std::span<const Sentence> train,
                    std::span<const Sentence> heldout, const VaeOptions& options, Rng& rng,
                    const std::function<void(const VaeEpochReport&)>& on_report) {
  const Roles roles = roles_of(model, encoder, flow, options);
  if (train.empty()) fail(ErrorCode::invalid_argument, "empty training corpus");
  if (options.batch_size == 0) fail(ErrorCode::config, "batch_size must be positive");
  ParameterList params = model.trainable_parameters();
  for (auto& p : encoder.parameters()) params.push_back(p);
  if (flow) {
    for (auto& p : flow->parameters()) params.push_back(p);
  }
  Optimizer opt(options.optimizer);
  VaeResult result;

  auto report = [&](std::size_t epoch) {
    const double beta = beta_at(options, result.steps);
    Rng eval_rng = rng.split(0x9e3779b9ULL + epoch);
    VaeEpochReport tr = evaluate_vae(model, encoder, flow, train, options, beta, eval_rng);
    tr.epoch = epoch;
    tr.split = "train";
    result.reports.push_back(tr);
    if (on_report) on_report(tr);
    if (!heldout.empty()) {
      VaeEpochReport ho = evaluate_vae(model, encoder, flow, heldout, options, beta, eval_rng);
      ho.epoch = epoch;
      ho.split = "heldout";
      result.reports.push_back(ho);
      if (on_report) on_report(ho);
    }
  };

  report(0);
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    auto order = epoch_order(train.size(), options.shuffle, rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double beta = beta_at(options, result.steps);
      zero_grads(params);
      std::vector<Tensor> terms;
      for (std::size_t i = start; i < end; ++i) terms.push_back(train_objective(roles, encoder, flow, train[order[i]], options, beta, rng));
      Tensor objective = sum(stack(terms)) / static_cast<double>(end - start);
      if (!std::isfinite(objective.item())) {
        fail(ErrorCode::numeric, "non-finite objective at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                                     " (beta " + std::to_string(beta) + ", " + std::to_string(end - start) + " sentences)");
      }
      objective.backward();
      opt.step(params);
      ++result.steps;
    }
    report(epoch);
  }
  return result;
}

// ---------------------------------------------------------------------------

GapReport inference_gap_report(const LatentModel& model, const Encoder& encoder, const Sentence& x, const GapOptions& options,
                               Rng& rng) {
  const auto* discrete = dynamic_cast<const DiscreteLatentModel*>(&model);
  const auto* continuous = dynamic_cast<const ContinuousLatentModel*>(&model);
  if (!discrete && !continuous) fail(ErrorCode::unsupported_model, "gap report needs a flat latent");
  GapReport r;
  VariationalParams q_phi;
  {
    NoGradGuard no_grad;
    q_phi = encoder(x).leaf_copy();
  }
  SviResult refined;
  try {
    refined = svi_fit(model, x, q_phi, options.refine, rng);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::numeric) throw;
    r.diverged = true;
    warn(std::string("gap report: refinement diverged: ") + e.what());
  }

  NoGradGuard no_grad;
  if (discrete) {
    r.exact = true;
    r.log_marginal = log_marginal_enumeration(model, x);
    r.elbo_amortized = elbo_categorical(*discrete, x, q_phi.logits).objective.item();
    r.trajectory = refined.elbo;
    r.elbo_refined = r.elbo_amortized;
    for (double v : refined.elbo) r.elbo_refined = std::max(r.elbo_refined, v);
  } else {
    ContinuousTarget target = target_for(*continuous, x);
    auto noise = rng.normals(options.eval_samples * q_phi.gaussian.dim());
    ElboOptions eo;
    eo.samples = options.eval_samples;
    r.elbo_amortized = elbo_gaussian(target, q_phi.gaussian, noise, eo).objective.item();
    r.elbo_refined = r.diverged ? r.elbo_amortized : elbo_gaussian(target, refined.q.gaussian, noise, eo).objective.item();
    r.log_marginal = is_log_marginal(target, (r.diverged ? q_phi : refined.q).gaussian, options.is_k, rng);
  }
  r.amortization_gap = r.elbo_refined - r.elbo_amortized;
  r.approximation_gap = r.log_marginal - r.elbo_refined;
  r.inference_gap = r.approximation_gap + r.amortization_gap;
  return r;
}

double residual_amortization_gap(const GapReport& report, std::size_t r) {
  if (!report.exact) fail(ErrorCode::unsupported_model, "residual gaps need an exactly evaluated family");
  if (report.trajectory.empty()) return 0.0;
  const double at = report.trajectory[std::min(r, report.trajectory.size() - 1)];
  return report.elbo_refined - at;
}

}  // namespace latentkit
