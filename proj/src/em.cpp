#include "latentkit/em.hpp"

#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

struct NbTables {
  std::vector<double> log_mu;  // [K]
  std::vector<double> log_pi;  // [K * V]
  std::size_t k, v;
};

NbTables tables_of(const NaiveBayes& model) {
  NbTables t{{}, {}, model.num_states(), model.vocab_size()};
  for (double p : model.prior_probs()) t.log_mu.push_back(safe_log(p));
  for (const auto& row : model.emission_probs()) {
    for (double p : row) t.log_pi.push_back(safe_log(p));
  }
  return t;
}

std::vector<double> joint_row(const NbTables& t, const Sentence& x) {
  check_sentence(x, t.v, "sentence");
  std::vector<double> out(t.log_mu);
  for (std::size_t k = 0; k < t.k; ++k) {
    for (TokenId w : x) out[k] += t.log_pi[k * t.v + w];
  }
  return out;
}

}  // namespace

Responsibilities nb_e_step(const NaiveBayes& model, std::span<const Sentence> corpus) {
  const NbTables t = tables_of(model);
  Responsibilities q(corpus.size(), t.k);
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    auto p = softmax(joint_row(t, corpus[n]));
    for (std::size_t k = 0; k < t.k; ++k) q.at(n, k) = p[k];
  }
  return q;
}

NaiveBayes nb_m_step(const Responsibilities& q, std::span<const Sentence> corpus, std::size_t vocab_size) {
  if (q.rows != corpus.size()) {
    fail(ErrorCode::shape_mismatch, "responsibilities have " + std::to_string(q.rows) + " rows for " + std::to_string(corpus.size()) + " sentences");
  }
  if (corpus.empty() || q.cols == 0) fail(ErrorCode::invalid_argument, "M-step needs a non-empty corpus and K >= 1");
  const std::size_t k = q.cols;
  const std::size_t v = vocab_size;
  std::vector<double> mass(k, 0.0), tokens(k, 0.0), counts(k * v, 0.0);
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    check_sentence(corpus[n], v, "sentence");
    for (std::size_t j = 0; j < k; ++j) {
      const double w = q.at(n, j);
      mass[j] += w;
      tokens[j] += w * static_cast<double>(corpus[n].size());
      for (TokenId t : corpus[n]) counts[j * v + t] += w;
    }
  }
  std::vector<double> mu(k);
  std::vector<std::vector<double>> pi(k, std::vector<double>(v));
  double mu_total = 0.0;
  for (std::size_t j = 0; j < k; ++j) mu_total += mass[j];
  for (std::size_t j = 0; j < k; ++j) {
    mu[j] = mass[j] / mu_total;
    if (mass[j] < 1e-12) {
      warn("EM: cluster " + std::to_string(j) + " has total responsibility " + std::to_string(mass[j]) +
           "; resetting its emission row to uniform");
      for (auto& p : pi[j]) p = 1.0 / static_cast<double>(v);
      continue;
    }
    double row_total = 0.0;
    for (std::size_t w = 0; w < v; ++w) row_total += counts[j * v + w];
    for (std::size_t w = 0; w < v; ++w) pi[j][w] = counts[j * v + w] / row_total;
  }
  // Renormalize against rounding so the simplex check holds to 1e-9.
  double s = 0.0;
  for (double m : mu) s += m;
  for (double& m : mu) m /= s;
  return NaiveBayes::from_probs(mu, pi);
}

double nb_expected_complete_loglik(const NaiveBayes& model, const Responsibilities& q, std::span<const Sentence> corpus) {
  const NbTables t = tables_of(model);
  double total = 0.0;
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    auto row = joint_row(t, corpus[n]);
    for (std::size_t k = 0; k < t.k; ++k) {
      if (q.at(n, k) > 0.0) total += q.at(n, k) * row[k];
    }
  }
  return total;
}

double nb_corpus_loglik(const NaiveBayes& model, std::span<const Sentence> corpus) {
  const NbTables t = tables_of(model);
  double total = 0.0;
  for (const auto& x : corpus) total += log_sum_exp(joint_row(t, x));
  return total;
}

EmResult em_fit_from(const NaiveBayes& init, std::span<const Sentence> corpus, const EmOptions& options,
                     const std::function<void(std::size_t, double)>& on_iter) {
  if (options.max_iters == 0) fail(ErrorCode::invalid_argument, "EM needs at least one iteration");
  if (corpus.empty()) fail(ErrorCode::invalid_argument, "empty corpus");
  EmResult result;
  result.model = init;
  result.loglik.push_back(nb_corpus_loglik(result.model, corpus));
  if (on_iter) on_iter(0, result.loglik.back());
  std::size_t small = 0;
  for (std::size_t iter = 1; iter <= options.max_iters; ++iter) {
    Responsibilities q = nb_e_step(result.model, corpus);
    result.model = nb_m_step(q, corpus, init.vocab_size());
    const double ll = nb_corpus_loglik(result.model, corpus);
    if (!std::isfinite(ll)) fail(ErrorCode::numeric, "EM: non-finite log likelihood at iteration " + std::to_string(iter));
    const double gain = ll - result.loglik.back();
    result.loglik.push_back(ll);
    result.iterations = iter;
    if (on_iter) on_iter(iter, ll);
    small = gain < options.tol ? small + 1 : 0;
    if (options.early_stop && small >= options.patience) {
      result.converged = true;
      break;
    }
  }
  return result;
}

NaiveBayes nb_random_init(std::span<const Sentence> corpus, std::size_t k, std::size_t vocab_size, Rng& rng) {
  if (k == 0) fail(ErrorCode::invalid_argument, "EM needs K >= 1");
  Responsibilities q(corpus.size(), k);
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    auto row = rng.dirichlet_ones(k);
    for (std::size_t j = 0; j < k; ++j) q.at(n, j) = row[j];
  }
  return nb_m_step(q, corpus, vocab_size);
}

EmResult em_fit(std::span<const Sentence> corpus, std::size_t k, std::size_t vocab_size, const EmOptions& options, Rng& rng,
                const std::function<void(std::size_t, double)>& on_iter) {
  return em_fit_from(nb_random_init(corpus, k, vocab_size, rng), corpus, options, on_iter);
}

Responsibilities exact_responsibilities(const DiscreteLatentModel& model, std::span<const Sentence> batch) {
  NoGradGuard no_grad;
  Tensor joint = model.log_joint_batch(batch);
  const std::size_t k = model.num_states();
  Responsibilities q(batch.size(), k);
  auto v = joint.values();
  for (std::size_t n = 0; n < batch.size(); ++n) {
    auto p = softmax(v.subspan(n * k, k));
    for (std::size_t j = 0; j < k; ++j) q.at(n, j) = p[j];
  }
  return q;
}

Tensor em_surrogate(const DiscreteLatentModel& model, std::span<const Sentence> batch, const Responsibilities& q) {
  if (q.rows != batch.size() || q.cols != model.num_states()) fail(ErrorCode::shape_mismatch, "responsibilities do not match the batch");
  Tensor weights = Tensor::from({q.rows, q.cols}, q.values);
  return sum(weights * model.log_joint_batch(batch));
}

double generalized_em_step(DiscreteLatentModel& model, std::span<const Sentence> batch, Optimizer& optimizer) {
  if (batch.empty()) fail(ErrorCode::invalid_argument, "empty batch");
  Responsibilities q = exact_responsibilities(model, batch);
  ParameterList params = model.trainable_parameters();
  zero_grads(params);
  Tensor objective = em_surrogate(model, batch, q) / static_cast<double>(batch.size());
  if (!std::isfinite(objective.item())) fail(ErrorCode::numeric, "generalized EM: non-finite surrogate");
  objective.backward();
  optimizer.step(params);
  return objective.item();
}

}  // namespace latentkit
