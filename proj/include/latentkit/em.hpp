#pragma once

// Expectation-maximization: closed form for the naive Bayes mixture and a
// gradient M-step for any enumerable flat-latent family.

#include <functional>
#include <span>
#include <vector>

#include "latentkit/exact.hpp"
#include "latentkit/models.hpp"
#include "latentkit/optim.hpp"

namespace latentkit {

// N x K posterior probabilities, row-major.
struct Responsibilities {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Responsibilities() = default;
  Responsibilities(std::size_t n, std::size_t k) : rows(n), cols(k), values(n * k, 0.0) {}
  double& at(std::size_t n, std::size_t k) { return values[n * cols + k]; }
  double at(std::size_t n, std::size_t k) const { return values[n * cols + k]; }
  std::span<const double> row(std::size_t n) const { return std::span<const double>(values).subspan(n * cols, cols); }
};

Responsibilities nb_e_step(const NaiveBayes& model, std::span<const Sentence> corpus);

// mu_k = sum_n q_nk / N and pi_kv = sum_n q_nk c_nv / sum_n q_nk T_n, the
// maximizer of Q. A cluster whose total responsibility is below 1e-12 gets a
// uniform emission row and a warning.
NaiveBayes nb_m_step(const Responsibilities& q, std::span<const Sentence> corpus, std::size_t vocab_size);

// Q(theta) = sum_n sum_k q_nk log p(x_n, k; theta).
double nb_expected_complete_loglik(const NaiveBayes& model, const Responsibilities& q, std::span<const Sentence> corpus);

// Corpus log-likelihood from the probability tables.
double nb_corpus_loglik(const NaiveBayes& model, std::span<const Sentence> corpus);

struct EmOptions {
  std::size_t max_iters = 50;
  double tol = 1e-7;           // absolute improvement threshold
  std::size_t patience = 3;    // consecutive small improvements before stopping
  bool early_stop = true;
};

struct EmResult {
  NaiveBayes model{1, 1};
  // Entry 0 follows the initial M-step; entry i follows iteration i.
  std::vector<double> loglik;
  std::size_t iterations = 0;
  bool converged = false;
};

// Responsibilities drawn as Dirichlet(1) rows, then one M-step.
NaiveBayes nb_random_init(std::span<const Sentence> corpus, std::size_t k, std::size_t vocab_size, Rng& rng);

// Starts from nb_random_init.
EmResult em_fit(std::span<const Sentence> corpus, std::size_t k, std::size_t vocab_size, const EmOptions& options, Rng& rng,
                const std::function<void(std::size_t iter, double loglik)>& on_iter = {});
EmResult em_fit_from(const NaiveBayes& init, std::span<const Sentence> corpus, const EmOptions& options,
                     const std::function<void(std::size_t iter, double loglik)>& on_iter = {});

// Exact posteriors for a batch, as plain values (no gradient path).
Responsibilities exact_responsibilities(const DiscreteLatentModel& model, std::span<const Sentence> batch);

// Q surrogate sum_n sum_k q_nk log p(x_n, k; theta) with q held fixed.
Tensor em_surrogate(const DiscreteLatentModel& model, std::span<const Sentence> batch, const Responsibilities& q);

// E-step at the current parameters, then one ascent step on the surrogate
// (divided by the batch size). Returns the surrogate value.
double generalized_em_step(DiscreteLatentModel& model, std::span<const Sentence> batch, Optimizer& optimizer);

}  // namespace latentkit
