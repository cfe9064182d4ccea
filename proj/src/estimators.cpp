#include "latentkit/estimators.hpp"

#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

class Accumulator {
 public:
  explicit Accumulator(const ParameterList& targets) : targets_(targets) {
    for (const auto& t : targets_) {
      entries_.push_back({t.name, t.tensor.shape(), std::vector<double>(t.tensor.numel(), 0.0), {}});
      m2_.emplace_back(t.tensor.numel(), 0.0);
    }
  }

  void begin() { zero_grads(targets_); }

  // Welford update with the adjoints currently held by the targets.
  void add() {
    ++n_;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const auto g = targets_[i].tensor.grad();
      auto& mean = entries_[i].mean;
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (!std::isfinite(g[j])) fail(ErrorCode::numeric, "non-finite gradient for '" + targets_[i].name + "'");
        const double delta = g[j] - mean[j];
        mean[j] += delta / static_cast<double>(n_);
        m2_[i][j] += delta * (g[j] - mean[j]);
      }
    }
  }

  GradEstimate finish(std::string name, std::uint64_t seed) {
    GradEstimate e;
    e.estimator = std::move(name);
    e.samples = n_;
    e.seed = seed;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      entries_[i].variance.assign(m2_[i].size(), 0.0);
      if (n_ > 1) {
        for (std::size_t j = 0; j < m2_[i].size(); ++j) entries_[i].variance[j] = m2_[i][j] / static_cast<double>(n_ - 1);
      }
    }
    e.entries = std::move(entries_);
    return e;
  }

 private:
  ParameterList targets_;
  std::vector<GradEntry> entries_;
  std::vector<std::vector<double>> m2_;
  std::size_t n_ = 0;
};

void check_samples(std::size_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "estimators need at least one sample");
}

Tensor flat(const Tensor& t) { return reshape(t, {t.numel()}); }

std::vector<double> draw_gaussian(const DiagGaussian& q, Rng& rng) {
  const auto mean = q.mean.values();
  const auto log_var = q.log_var.values();
  std::vector<double> z(mean.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mean[i] + std::exp(0.5 * log_var[i]) * rng.normal();
  return z;
}

}  // namespace

const GradEntry& GradEstimate::at(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  fail(ErrorCode::invalid_argument, "no gradient entry named '" + name + "'");
}

std::vector<double> GradEstimate::flat_mean() const {
  std::vector<double> out;
  for (const auto& e : entries) out.insert(out.end(), e.mean.begin(), e.mean.end());
  return out;
}

DiscreteTarget discrete_target_for(const DiscreteLatentModel& model, const Sentence& x) {
  DiscreteTarget t;
  t.log_likelihood_all = [&model, x]() { return model.log_likelihood_all(x); };
  t.log_prior_all = [&model]() { return model.log_prior_all(); };
  t.family = model.family();
  if (const auto* r = dynamic_cast<const SimplexRelaxable*>(&model)) {
    t.relaxed_likelihood = [r, x](const Tensor& s) { return r->log_likelihood_relaxed(x, s); };
  }
  return t;
}

GradEstimate score_function_grad(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                                 std::size_t n_samples, Rng& rng) {
  check_samples(n_samples);
  Accumulator acc(targets);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Tensor z = Tensor::from(q.mean.shape(), draw_gaussian(q, rng));
    Tensor log_q = gaussian_log_prob(q, z);
    Tensor log_p = target.log_joint(z);
    const double weight = log_p.item() - log_q.item();
    acc.begin();
    (log_q * weight + log_p).backward();
    acc.add();
  }
  return acc.finish("score", rng.seed());
}

GradEstimate score_function_grad(const DiscreteTarget& target, const Tensor& q_logits, const ParameterList& targets,
                                 std::size_t n_samples, Rng& rng) {
  check_samples(n_samples);
  Tensor log_q_all = log_softmax(flat(q_logits));
  Tensor log_joint_all = log_softmax(flat(target.log_prior_all())) + target.log_likelihood_all();
  const auto probs = softmax(log_q_all.values());
  Accumulator acc(targets);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::size_t k = sample_index(probs, rng);
    Tensor log_q = pick(log_q_all, k);
    Tensor log_p = pick(log_joint_all, k);
    const double weight = log_p.item() - log_q.item();
    acc.begin();
    (log_q * weight + log_p).backward();
    acc.add();
  }
  return acc.finish("score", rng.seed());
}

GradEstimate reparam_grad(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                          std::span<const double> noise) {
  const std::size_t d = q.dim();
  if (d == 0 || noise.empty() || noise.size() % d != 0) fail(ErrorCode::shape_mismatch, "noise length is not a multiple of d");
  Accumulator acc(targets);
  Tensor kl = gaussian_kl_to_prior(q, target.prior_mean);
  for (std::size_t s = 0; s < noise.size() / d; ++s) {
    Tensor eps = Tensor::from(q.mean.shape(), {noise.begin() + s * d, noise.begin() + (s + 1) * d});
    Tensor z = gaussian_sample_reparam(q, eps);
    acc.begin();
    (target.log_likelihood(z) - kl).backward();
    acc.add();
  }
  return acc.finish("reparam", 0);
}

GradEstimate reparam_grad(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                          std::size_t n_samples, Rng& rng) {
  check_samples(n_samples);
  auto noise = rng.normals(n_samples * q.dim());
  GradEstimate e = reparam_grad(target, q, targets, noise);
  e.seed = rng.seed();
  return e;
}

Tensor concrete_relaxed_objective(const DiscreteTarget& target, const Tensor& q_logits, double temperature,
                                  std::span<const double> gumbel, RelaxedKl kl) {
  if (!target.relaxed_likelihood) {
    fail(ErrorCode::unsupported_model, "model '" + target.family + "' has no simplex extension of its likelihood; "
                                       "use the score-function or exact estimator");
  }
  Tensor logits = flat(q_logits);
  Concrete q(logits, temperature);
  Tensor s = concrete_sample(q, gumbel);
  Tensor recon = target.relaxed_likelihood(s);
  Tensor prior = flat(target.log_prior_all());
  if (kl == RelaxedKl::categorical) return recon - categorical_kl(logits, prior);
  Concrete p(log_softmax(prior), temperature);
  return recon - (concrete_log_density(s, q) - concrete_log_density(s, p));
}

GradEstimate concrete_relaxed_grad(const DiscreteTarget& target, const Tensor& q_logits, double temperature,
                                   const ParameterList& targets, std::size_t n_samples, Rng& rng, RelaxedKl kl) {
  check_samples(n_samples);
  Accumulator acc(targets);
  for (std::size_t s = 0; s < n_samples; ++s) {
    auto g = gumbel_noise(q_logits.numel(), rng);
    Tensor objective = concrete_relaxed_objective(target, q_logits, temperature, g, kl);
    acc.begin();
    objective.backward();
    acc.add();
  }
  return acc.finish("concrete", rng.seed());
}

GradEstimate exact_categorical_grad(const DiscreteTarget& target, const Tensor& q_logits, const ParameterList& targets) {
  Tensor logits = flat(q_logits);
  Tensor objective = sum(softmax(logits) * target.log_likelihood_all()) - categorical_kl(logits, flat(target.log_prior_all()));
  Accumulator acc(targets);
  acc.begin();
  objective.backward();
  acc.add();
  return acc.finish("exact", 0);
}

IwaeResult iwae_bound(const ContinuousTarget& target, const DiagGaussian& q, std::span<const double> noise) {
  const std::size_t d = q.dim();
  if (d == 0 || noise.empty() || noise.size() % d != 0) fail(ErrorCode::shape_mismatch, "noise length is not a multiple of d");
  const std::size_t k = noise.size() / d;
  std::vector<Tensor> lw;
  lw.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    Tensor eps = Tensor::from(q.mean.shape(), {noise.begin() + s * d, noise.begin() + (s + 1) * d});
    Tensor z = gaussian_sample_reparam(q, eps);
    lw.push_back(target.log_joint(z) - gaussian_log_prob(q, z));
  }
  Tensor all = stack(lw);
  IwaeResult r;
  r.value = log_sum_exp(all) - std::log(static_cast<double>(k));
  r.log_weights = all.to_vector();
  r.weights = softmax(r.log_weights);
  return r;
}

IwaeResult iwae_bound(const ContinuousTarget& target, const DiagGaussian& q, std::size_t k, Rng& rng) {
  check_samples(k);
  auto noise = rng.normals(k * q.dim());
  return iwae_bound(target, q, noise);
}

IwaeResult iwae_bound(const DiscreteTarget& target, const Tensor& q_logits, std::size_t k, Rng& rng) {
  check_samples(k);
  NoGradGuard no_grad;
  Tensor log_q = log_softmax(flat(q_logits));
  Tensor log_joint = log_softmax(flat(target.log_prior_all())) + target.log_likelihood_all();
  const auto probs = softmax(log_q.values());
  IwaeResult r;
  r.log_weights.resize(k);
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t z = sample_index(probs, rng);
    r.log_weights[s] = log_joint[z] - log_q[z];
  }
  r.value = Tensor::scalar(log_sum_exp(r.log_weights) - std::log(static_cast<double>(k)));
  r.weights = softmax(r.log_weights);
  return r;
}

GradEstimate iwae_grads(const ContinuousTarget& target, const DiagGaussian& q, const ParameterList& targets,
                        std::span<const double> noise) {
  Accumulator acc(targets);
  IwaeResult r = iwae_bound(target, q, noise);
  acc.begin();
  r.value.backward();
  acc.add();
  GradEstimate e = acc.finish("iwae", 0);
  e.samples = r.log_weights.size();
  return e;
}

double is_log_marginal(const ContinuousTarget& target, const DiagGaussian& q, std::size_t k, Rng& rng) {
  check_samples(k);
  NoGradGuard no_grad;
  std::vector<double> lw;
  lw.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    Tensor z = Tensor::from(q.mean.shape(), draw_gaussian(q, rng));
    lw.push_back(target.log_joint(z).item() - gaussian_log_prob(q, z).item());
  }
  return log_sum_exp(lw) - std::log(static_cast<double>(k));
}

double is_log_marginal(const DiscreteTarget& target, const Tensor& q_logits, std::size_t k, Rng& rng) {
  return iwae_bound(target, q_logits, k, rng).value.item();
}

double is_log_marginal(const LatentModel& model, const VariationalParams& q, const Sentence& x, std::size_t k, Rng& rng) {
  if (q.kind == LatentKind::categorical) {
    const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model);
    if (!d) fail(ErrorCode::unsupported_model, "categorical q is incompatible with model '" + model.family() + "'");
    return is_log_marginal(discrete_target_for(*d, x), q.logits, k, rng);
  }
  const auto* c = dynamic_cast<const ContinuousLatentModel*>(&model);
  if (!c) fail(ErrorCode::unsupported_model, "Gaussian q is incompatible with model '" + model.family() + "'");
  return is_log_marginal(target_for(*c, x), q.gaussian, k, rng);
}

ContinuousTarget GaussianToy::target() const {
  ContinuousTarget t;
  const double obs = x;
  t.log_likelihood = [obs](const Tensor& z) { return sum(square(z - obs)) * -0.5 - 0.5 * std::log(2.0 * M_PI); };
  t.prior_mean = Tensor::zeros({1});
  return t;
}

std::array<double, 2> GaussianToy::elbo_gradient(double mean, double log_var) const {
  // ELBO = -(x - m)^2 / 2 - s2 / 2 - (s2 + m^2 - 1 - log s2) / 2 + const.
  const double s2 = std::exp(log_var);
  return {(x - mean) - mean, 0.5 - s2};
}

}  // namespace latentkit
