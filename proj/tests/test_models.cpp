#include <gtest/gtest.h>

#include <cmath>

#include "latentkit/error.hpp"
#include "latentkit/exact.hpp"
#include "latentkit/gradcheck.hpp"
#include "latentkit/hmm.hpp"
#include "latentkit/models.hpp"
#include "test_util.hpp"

using namespace latentkit;
using namespace lktest;

namespace {

// Sum over all K^T paths of prod start * trans * emit, in plain doubles.
double brute_force_hmm(const std::vector<double>& start, const std::vector<std::vector<double>>& trans,
                       const std::vector<std::vector<double>>& emit, const Sentence& x) {
  const std::size_t k = start.size(), t = x.size();
  std::vector<std::size_t> z(t, 0);
  double total = 0;
  while (true) {
    double p = start[z[0]] * emit[z[0]][x[0]];
    for (std::size_t i = 1; i < t; ++i) p *= trans[z[i - 1]][z[i]] * emit[z[i]][x[i]];
    total += p;
    std::size_t i = t;
    while (i > 0 && ++z[i - 1] == k) z[--i] = 0;
    if (i == 0) break;
  }
  return std::log(total);
}

}  // namespace

TEST(NaiveBayes, LogJointMatchesTables) {
  Rng rng(1);
  auto mu = rng.dirichlet_ones(3);
  auto pi = dirichlet_rows(rng, 3, 6);
  NaiveBayes m = NaiveBayes::from_probs(mu, pi);
  const Sentence x{2, 3, 3, 5, 0};
  for (std::size_t k = 0; k < 3; ++k) {
    double lj = std::log(mu[k]);
    for (auto t : x) lj += std::log(pi[k][t]);
    EXPECT_NEAR(m.log_joint(x, k).item(), lj, 1e-12);
    EXPECT_NEAR(nb_log_joint(m, x, k), lj, 1e-12);
    EXPECT_NEAR(m.log_joint_value(x, k), lj, 1e-12);
  }
  std::vector<Sentence> batch{x, {1, 2}};
  auto b = m.log_joint_batch(batch);
  EXPECT_EQ(b.shape(), (Shape{2, 3}));
  EXPECT_NEAR(b[3], m.log_joint({1, 2}, 0).item(), 1e-12);
}

TEST(NaiveBayes, RejectsOutOfVocabulary) {
  NaiveBayes m(2, 4);
  EXPECT_THROW(m.log_likelihood_all({0, 4}), Error);
}

TEST(NaiveBayes, SamplerFollowsPrior) {
  const std::vector<double> mu{0.2, 0.8};
  NaiveBayes m = NaiveBayes::from_probs(mu, {{0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}});
  Rng rng(2);
  SampleOptions o;
  o.length = 5;
  int ones = 0;
  for (int i = 0; i < 20000; ++i) {
    Draw d = m.sample(rng, o);
    ASSERT_EQ(d.x.size(), 5u);
    for (auto t : d.x) EXPECT_EQ(t / 2, d.states[0]);
    ones += d.states[0] == 1;
  }
  EXPECT_NEAR(ones / 20000.0, 0.8, 0.01);
}

TEST(CategoricalBow, MatchesNaiveBayesAtVertices) {
  Rng rng(3);
  auto m = CategoricalBow::random(3, 7, rng, 1.0);
  const Sentence x{2, 6, 4};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> s(3, 0.0);
    s[k] = 1.0;
    EXPECT_NEAR(m.log_likelihood_relaxed(x, Tensor::vector(s)).item(), m.log_likelihood_all(x)[k], 1e-12);
  }
}

TEST(HiddenMarkovModel, ForwardMatchesBruteForce) {
  Rng rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t k = 1 + rng.below(4), v = 2 + rng.below(4), t = 1 + rng.below(6);
    auto start = rng.dirichlet_ones(k);
    auto trans = dirichlet_rows(rng, k, k);
    auto emit = dirichlet_rows(rng, k, v);
    auto m = HiddenMarkovModel::from_probs(start, trans, emit);
    const Sentence x = random_sentence(rng, t, v);
    const double truth = brute_force_hmm(start, trans, emit, x);
    EXPECT_NEAR(hmm_forward(m, x), truth, 1e-9 * std::abs(truth));
    EXPECT_NEAR(log_marginal_enumeration(m, x), truth, 1e-9 * std::abs(truth));
  }
}

TEST(HiddenMarkovModel, LogJointOfPath) {
  const std::vector<double> start{0.6, 0.4};
  const std::vector<std::vector<double>> trans{{0.7, 0.3}, {0.2, 0.8}};
  const std::vector<std::vector<double>> emit{{0.9, 0.1}, {0.3, 0.7}};
  auto m = HiddenMarkovModel::from_probs(start, trans, emit);
  const Sentence x{0, 1, 1};
  const std::vector<std::size_t> z{0, 1, 1};
  EXPECT_NEAR(hmm_log_joint(m, x, z), std::log(0.6 * 0.9 * 0.3 * 0.7 * 0.8 * 0.7), 1e-12);
}

TEST(HiddenMarkovModel, NeuralRowsNormalized) {
  Rng rng(5);
  auto m = HiddenMarkovModel::neural(3, 5, 4, 6, &rng, 0.5);
  HmmRows rows = m.realize();
  EXPECT_EQ(rows.log_trans.shape(), (Shape{4, 3}));
  EXPECT_EQ(rows.log_emit.shape(), (Shape{3, 5}));
  for (const Tensor* t : {&rows.log_trans, &rows.log_emit}) {
    const std::size_t cols = t->dim(1);
    for (std::size_t r = 0; r < t->dim(0); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < cols; ++c) s += std::exp((*t)[r * cols + c]);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(HiddenMarkovModel, ForwardGradient) {
  Rng rng(6);
  auto m = HiddenMarkovModel::neural(3, 4, 3, 5, &rng, 0.5);
  const Sentence x{0, 3, 2, 2};
  EXPECT_LT(grad_check([&] { return hmm_forward(m.realize(), x); }, m.parameters()), 1e-6);
  auto t = HiddenMarkovModel::random_tabular(3, 4, rng);
  EXPECT_LT(grad_check([&] { return hmm_forward(t.realize(), x); }, t.parameters()), 1e-6);
}

TEST(HiddenMarkovModel, EnumerationRefusesHugeSupport) {
  auto m = HiddenMarkovModel::tabular(4, 3);
  const Sentence x(11, 0);  // 4^11 paths
  EXPECT_THROW(log_marginal_enumeration(m, x), Error);
}

// Probabilities of all V^L token strings of a fixed length sum to one.
TEST(RnnLm, NormalizedOverFixedLength) {
  Rng rng(7);
  RnnLm lm(3, 2, 3, 0, &rng, 0.8);
  RnnLm clm(3, 2, 3, 2, &rng, 0.8);
  const Tensor z = Tensor::vector({0.4, -0.9});
  double s = 0, cs = 0;
  for (std::size_t i = 0; i < 27; ++i) {
    const Sentence x{i / 9, (i / 3) % 3, i % 3};
    s += std::exp(rnnlm_log_likelihood(lm, x));
    cs += std::exp(crnnlm_log_likelihood(clm, x, z.values()));
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(cs, 1.0, 1e-12);
}

TEST(RnnLm, LatentArgumentChecked) {
  Rng rng(8);
  RnnLm lm(4, 2, 3, 0, &rng, 0.5);
  RnnLm clm(4, 2, 3, 2, &rng, 0.5);
  const Tensor z = Tensor::vector({0.1, 0.2});
  EXPECT_THROW(lm.log_likelihood({2, 1}, &z), Error);
  EXPECT_THROW(clm.log_likelihood({2, 1}), Error);
  EXPECT_THROW(lm.log_likelihood({}), Error);
}

TEST(RnnLm, SamplesEndWithEosOrTruncate) {
  Rng rng(9);
  RnnLm lm(5, 3, 4, 0, &rng, 0.5);
  for (int i = 0; i < 50; ++i) {
    bool truncated = false;
    Sentence x = lm.sample(rng, 6, nullptr, truncated);
    ASSERT_FALSE(x.empty());
    if (truncated) {
      EXPECT_EQ(x.size(), 6u);
    } else {
      EXPECT_EQ(x.back(), kEos);
    }
  }
}

TEST(MixtureRnn, LogJointIsPriorPlusComponent) {
  Rng rng(10);
  MixtureRnn m(2, 5, 3, 4, &rng, 0.5);
  const Sentence x{3, 4, 1};
  const auto prior = m.log_prior_all().to_vector();
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(mixture_rnn_log_joint(m, x, k), prior[k] + rnnlm_log_likelihood(m.component(k), x), 1e-12);
  }
}

TEST(GaussianBow, LikelihoodMatchesFormula) {
  Rng rng(11);
  GaussianBow m(5, 2, &rng, 0.7);
  const std::vector<double> z{0.3, -0.8};
  const Sentence x{1, 4, 4};
  const auto w = m.weight().to_vector();
  double ll = 0;
  for (auto t : x) {
    std::vector<double> logits(5);
    for (int v = 0; v < 5; ++v) logits[v] = w[v * 2] * z[0] + w[v * 2 + 1] * z[1];
    ll += logits[t] - lse(logits);
  }
  const double lp = -std::log(2 * M_PI) - 0.5 * (z[0] * z[0] + z[1] * z[1]);
  EXPECT_NEAR(gaussian_bow_log_joint(m, x, z), ll + lp, 1e-12);
  EXPECT_EQ(m.trainable_parameters().size() + 1, m.parameters().size());
}

TEST(GaussianCrnn, GradientsAndSampling) {
  Rng rng(12);
  GaussianCrnn m(6, 3, 4, 2, &rng, 0.5);
  const Sentence x{2, 5, 1};
  Tensor z = Tensor::vector({0.2, -0.4}, true);
  EXPECT_LT(grad_check([&] { return m.log_joint(x, z); }, m.trainable_parameters()), 1e-6);
  EXPECT_LT(grad_check([&](const Tensor& zz) { return m.log_joint(x, zz); }, z), 1e-6);
  SampleOptions o;
  o.max_length = 8;
  Draw d = m.sample(rng, o);
  EXPECT_EQ(d.z.size(), 2u);
  EXPECT_LE(d.x.size(), 8u);
}

TEST(Models, CloneIsDeep) {
  Rng rng(13);
  NaiveBayes m = NaiveBayes::random(2, 4, rng);
  auto c = m.clone();
  m.parameters()[0].tensor.mutable_values()[0] += 1.0;
  EXPECT_NE(c->parameters()[0].tensor[0], m.parameters()[0].tensor[0]);
}

TEST(Exact, PosteriorMatchesBayesRule) {
  Rng rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    auto mu = rng.dirichlet_ones(3);
    auto pi = dirichlet_rows(rng, 3, 5);
    NaiveBayes m = NaiveBayes::from_probs(mu, pi);
    const Sentence x = random_sentence(rng, 4, 5);
    std::vector<double> joint(3);
    double z = 0;
    for (int k = 0; k < 3; ++k) {
      joint[k] = mu[k];
      for (auto t : x) joint[k] *= pi[k][t];
      z += joint[k];
    }
    auto post = enumerate_posterior(m, x).probs();
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(post[k], joint[k] / z, 1e-10);
    EXPECT_NEAR(log_marginal(m, x).item(), std::log(z), 1e-10);
  }
}

TEST(Exact, HmmPosteriorConfigurationOrder) {
  Rng rng(15);
  auto m = HiddenMarkovModel::random_tabular(2, 3, rng);
  const Sentence x{0, 2, 1};
  PosteriorTable t = enumerate_posterior(m, x);
  ASSERT_EQ(t.log_probs.size(), 8u);
  EXPECT_EQ(t.configuration(6), (std::vector<std::size_t>{1, 1, 0}));
  const double lm = hmm_forward(m, x);
  EXPECT_NEAR(t.log_probs[5], hmm_log_joint(m, x, t.configuration(5)) - lm, 1e-12);
}

TEST(Exact, DirectMarginalTrainingImproves) {
  Rng rng(16);
  NaiveBayes truth = NaiveBayes::random(2, 6, rng);
  Corpus c = sample_corpus(truth, 300, rng, 6);
  NaiveBayes m = NaiveBayes::random(2, 6, rng);
  DirectOptions o;
  o.epochs = 30;
  o.optimizer.learning_rate = 0.05;
  DirectTrace t = train_direct_marginal(m, c, o, rng);
  ASSERT_EQ(t.loglik.size(), 31u);
  EXPECT_GT(t.loglik.back(), t.loglik.front());
  EXPECT_NEAR(t.loglik.back(), corpus_log_marginal(m, c), 1e-9 * std::abs(t.loglik.back()));
}

TEST(Exact, BatchSumMatchesLoop) {
  Rng rng(17);
  auto m = CategoricalBow::random(3, 6, rng, 1.0);
  Corpus c{{2, 3}, {5, 5, 4}, {0}};
  double s = 0;
  for (auto& x : c) s += log_marginal(m, x).item();
  EXPECT_NEAR(log_marginal_sum(m, c).item(), s, 1e-12);
}
