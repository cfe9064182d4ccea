#include <gtest/gtest.h>

#include <cmath>

#include "latentkit/em.hpp"
#include "latentkit/error.hpp"
#include "test_util.hpp"

using namespace latentkit;
using namespace lktest;

namespace {

Corpus nb_corpus(std::uint64_t seed, std::size_t k, std::size_t v, std::size_t n) {
  Rng rng(seed);
  NaiveBayes truth = NaiveBayes::random(k, v, rng);
  return sample_corpus(truth, n, rng, 8);
}

}  // namespace

TEST(Em, MStepMatchesCountingFormula) {
  const Corpus c{{0, 1, 1}, {2, 2}, {1}};
  Responsibilities q(3, 2);
  q.at(0, 0) = 1.0;
  q.at(1, 1) = 1.0;
  q.at(2, 0) = 0.25;
  q.at(2, 1) = 0.75;
  NaiveBayes m = nb_m_step(q, c, 3);
  auto mu = m.prior_probs();
  EXPECT_NEAR(mu[0], 1.25 / 3, 1e-12);
  auto pi = m.emission_probs();
  // cluster 0: counts 1*{0,1,1} + 0.25*{1} over 3.25 tokens
  EXPECT_NEAR(pi[0][0], 1.0 / 3.25, 1e-12);
  EXPECT_NEAR(pi[0][1], 2.25 / 3.25, 1e-12);
  EXPECT_NEAR(pi[1][2], 2.0 / 2.75, 1e-12);
}

TEST(Em, EmptyClusterGetsUniformRowAndWarning) {
  const Corpus c{{0, 1}, {1}};
  Responsibilities q(2, 2);
  q.at(0, 0) = 1.0;
  q.at(1, 0) = 1.0;
  std::vector<std::string> warnings;
  set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  NaiveBayes m = nb_m_step(q, c, 4);
  set_warning_sink({});
  EXPECT_EQ(warnings.size(), 1u);
  const auto pi = m.emission_probs();
  for (double p : pi[1]) EXPECT_NEAR(p, 0.25, 1e-12);
}

// The M-step maximizes Q: random perturbations of its output never do better.
TEST(Em, MStepMaximizesExpectedCompleteLoglik) {
  const Corpus c = nb_corpus(1, 3, 6, 200);
  Rng rng(2);
  NaiveBayes m0 = NaiveBayes::random(3, 6, rng);
  Responsibilities q = nb_e_step(m0, c);
  NaiveBayes best = nb_m_step(q, c, 6);
  const double qbest = nb_expected_complete_loglik(best, q, c);
  for (int i = 0; i < 20; ++i) {
    NaiveBayes other = NaiveBayes::random(3, 6, rng);
    EXPECT_LE(nb_expected_complete_loglik(other, q, c), qbest);
  }
}

TEST(Em, ResponsibilitiesAreExactPosteriors) {
  const Corpus c = nb_corpus(3, 2, 5, 20);
  Rng rng(4);
  NaiveBayes m = NaiveBayes::random(2, 5, rng);
  Responsibilities a = nb_e_step(m, c);
  Responsibilities b = exact_responsibilities(m, c);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
}

TEST(Em, MonotoneAndConverges) {
  const Corpus c = nb_corpus(5, 3, 10, 500);
  Rng rng(6);
  EmOptions o;
  o.max_iters = 100;
  EmResult r = em_fit(c, 3, 10, o, rng);
  for (std::size_t i = 1; i < r.loglik.size(); ++i) EXPECT_GE(r.loglik[i] - r.loglik[i - 1], -1e-8);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 100u);
  EXPECT_NEAR(r.loglik.back(), nb_corpus_loglik(r.model, c), 1e-8);
}

TEST(Em, SeededRunsRepeat) {
  const Corpus c = nb_corpus(7, 2, 6, 100);
  EmOptions o;
  Rng a(8), b(8);
  EXPECT_EQ(em_fit(c, 2, 6, o, a).loglik, em_fit(c, 2, 6, o, b).loglik);
}

// At the E-step point, grad Q equals grad log p(x).
TEST(Em, SurrogateGradientEqualsMarginalGradient) {
  Rng rng(9);
  for (int rep = 0; rep < 5; ++rep) {
    auto m = CategoricalBow::random(3, 6, rng, 1.0);
    const Corpus c = sample_corpus(m, 10, rng, 5);
    Responsibilities q = exact_responsibilities(m, c);
    const ParameterList p = m.parameters();
    zero_grads(p);
    em_surrogate(m, c, q).backward();
    std::vector<std::vector<double>> g1;
    for (auto& t : p) g1.push_back(t.tensor.grad());
    zero_grads(p);
    log_marginal_sum(m, c).backward();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto g2 = p[i].tensor.grad();
      for (std::size_t j = 0; j < g2.size(); ++j) EXPECT_NEAR(g1[i][j], g2[j], 1e-8);
    }
  }
}

TEST(Em, GeneralizedStepImproves) {
  Rng rng(10);
  auto truth = CategoricalBow::random(2, 6, rng, 2.0);
  const Corpus c = sample_corpus(truth, 200, rng, 6);
  auto m = CategoricalBow::random(2, 6, rng, 0.1);
  OptimizerSettings s;
  s.learning_rate = 0.05;
  Optimizer opt(s);
  const double before = corpus_log_marginal(m, c);
  for (int i = 0; i < 50; ++i) generalized_em_step(m, c, opt);
  EXPECT_GT(corpus_log_marginal(m, c), before);
}
