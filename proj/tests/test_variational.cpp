#include <gtest/gtest.h>

#include <cmath>

#include "latentkit/error.hpp"
#include "latentkit/gradcheck.hpp"
#include "latentkit/vae.hpp"
#include "latentkit/variational.hpp"
#include "test_util.hpp"

using namespace latentkit;
using namespace lktest;

TEST(Elbo, GapEqualsKlToPosterior) {
  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    NaiveBayes m = NaiveBayes::random(3, 5, rng);
    const Sentence x = random_sentence(rng, 4, 5);
    Tensor q = Tensor::vector({rng.normal(), rng.normal(), rng.normal()});
    const double elbo = elbo_categorical(m, x, q).objective.item();
    const double lm = log_marginal(m, x).item();
    const auto qp = softmax(q.values());
    const auto post = enumerate_posterior(m, x).probs();
    double kl = 0;
    for (int k = 0; k < 3; ++k) kl += qp[k] * std::log(qp[k] / post[k]);
    EXPECT_LE(elbo, lm + 1e-9);
    EXPECT_NEAR(lm - elbo, kl, 1e-9);
  }
}

TEST(Elbo, FreeBitsAndBeta) {
  Tensor kl = Tensor::scalar(0.5, true);
  EXPECT_DOUBLE_EQ(free_bits(kl, 2.0).item(), 2.0);
  free_bits(kl, 2.0).backward();
  EXPECT_DOUBLE_EQ(kl.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(free_bits(3.0, 2.0), 3.0);
  EXPECT_DOUBLE_EQ(kl_anneal(50, 200), 0.25);
  EXPECT_DOUBLE_EQ(kl_anneal(500, 200), 1.0);

  NaiveBayes m(2, 3);
  Tensor q = Tensor::vector({2.0, -1.0});
  ElboOptions o;
  o.beta = 0.5;
  o.free_bits = 10.0;
  ElboTerms t = elbo_categorical(m, {1, 2}, q, o);
  EXPECT_NEAR(t.objective.item(), t.reconstruction.item() - 0.5 * 10.0, 1e-12);
  EXPECT_LT(t.kl.item(), 10.0);
}

TEST(Elbo, GaussianKlClosedForm) {
  DiagGaussian q{Tensor::vector({0.3, -0.2}), Tensor::vector({0.1, -0.4})};
  Tensor prior = Tensor::vector({1.0, 0.5});
  double kl = 0;
  for (int i = 0; i < 2; ++i) {
    const double v = std::exp(q.log_var[i]);
    const double d = q.mean[i] - prior[i];
    kl += 0.5 * (v + d * d - 1 - q.log_var[i]);
  }
  EXPECT_NEAR(gaussian_kl_to_prior(q, prior).item(), kl, 1e-12);
}

TEST(Elbo, GaussianMonteCarloConvergesToExact) {
  // Conjugate toy: log p(x) - ELBO = KL(q || posterior N(x/2, 1/2)).
  GaussianToy toy;
  ContinuousTarget target = toy.target();
  DiagGaussian q{Tensor::vector({0.2}), Tensor::vector({-0.3})};
  Rng rng(2);
  ElboOptions o;
  o.samples = 200000;
  const double elbo = elbo_gaussian(target, q, rng.normals(o.samples), o).objective.item();
  const double lp = -0.5 * std::log(2 * M_PI * 2) - toy.x * toy.x / 4;
  const double m = 0.2, v = std::exp(-0.3), pm = toy.x / 2, pv = 0.5;
  const double kl = 0.5 * (std::log(pv / v) + (v + (m - pm) * (m - pm)) / pv - 1);
  EXPECT_NEAR(lp - elbo, kl, 5e-3);
}

TEST(Svi, NeverLeavesFamilyOptimumForExactQ) {
  Rng rng(3);
  NaiveBayes m = NaiveBayes::random(3, 6, rng);
  const Sentence x{1, 2, 5};
  auto post = enumerate_posterior(m, x);
  VariationalParams init = VariationalParams::categorical(Tensor::vector(post.log_probs, true));
  SviOptions o;
  o.steps = 20;
  o.learning_rate = 0.1;
  SviResult r = svi_fit(m, x, init, o, rng);
  EXPECT_EQ(r.elbo.size(), 21u);
  EXPECT_NEAR(r.elbo.front(), log_marginal(m, x).item(), 1e-9);
  EXPECT_NEAR(r.elbo.back(), r.elbo.front(), 1e-9);
}

TEST(Svi, ImprovesFromUniformAndFreezesModel) {
  Rng rng(4);
  NaiveBayes m = NaiveBayes::random(3, 6, rng);
  const auto before = m.parameters()[1].tensor.to_vector();
  const Sentence x{0, 0, 4, 5};
  SviOptions o;
  o.steps = 200;
  o.learning_rate = 0.5;
  SviResult r = svi_fit(m, x, VariationalParams::categorical(Tensor::zeros({3}, true)), o, rng);
  EXPECT_GT(r.elbo.back(), r.elbo.front());
  EXPECT_NEAR(r.elbo.back(), log_marginal(m, x).item(), 1e-3);
  EXPECT_EQ(m.parameters()[1].tensor.to_vector(), before);
}

TEST(Svi, DivergenceIsReported) {
  Rng rng(5);
  GaussianBow m(5, 2, &rng, 0.5);
  SviOptions o;
  o.steps = 50;
  o.learning_rate = 1e6;
  VariationalParams init = VariationalParams::normal(Tensor::zeros({2}, true), Tensor::zeros({2}, true));
  try {
    svi_fit(m, {2, 3, 4}, init, o, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
  }
}

TEST(Encoder, OutputsAndGradients) {
  Rng rng(6);
  for (EncoderKind kind : {EncoderKind::rnn, EncoderKind::bow}) {
    for (LatentKind latent : {LatentKind::gaussian, LatentKind::categorical}) {
      EncoderSpec s;
      s.kind = kind;
      s.latent = latent;
      s.vocab_size = 7;
      s.latent_size = 3;
      s.embed = 4;
      s.hidden = 5;
      Encoder e = Encoder::create(s, &rng, 0.5);
      const Sentence x{2, 6, 1};
      VariationalParams q = e(x);
      EXPECT_EQ(q.kind, latent);
      auto f = [&] {
        VariationalParams v = e(x);
        if (latent == LatentKind::categorical) return pick(log_softmax(v.logits), 1);
        return sum(v.gaussian.mean * v.gaussian.log_var) + sum(exp(v.gaussian.log_var));
      };
      EXPECT_LT(grad_check(f, e.parameters()), 1e-6);
    }
  }
}

TEST(Encoder, VariationalLogProb) {
  VariationalParams q = VariationalParams::categorical(Tensor::vector({0.0, std::log(3.0)}));
  EXPECT_NEAR(variational_log_prob(q, 1).item(), std::log(0.75), 1e-12);
  VariationalParams g = VariationalParams::normal(Tensor::vector({0.0}), Tensor::vector({0.0}));
  EXPECT_NEAR(variational_log_prob(g, Tensor::vector({1.0})).item(), -0.5 * std::log(2 * M_PI) - 0.5, 1e-12);
}

TEST(Vae, ExactEstimatorOnNaiveBayesLearns) {
  Rng rng(7);
  NaiveBayes truth = NaiveBayes::random(2, 8, rng);
  Corpus c = sample_corpus(truth, 300, rng, 8);
  NaiveBayes m = NaiveBayes::random(2, 8, rng);
  EncoderSpec s;
  s.kind = EncoderKind::bow;
  s.latent = LatentKind::categorical;
  s.vocab_size = 8;
  s.latent_size = 2;
  s.embed = 2;
  Encoder e = Encoder::create(s, &rng, 0.1);
  VaeOptions o;
  o.epochs = 15;
  o.batch_size = 30;
  o.estimator = Estimator::exact;
  o.optimizer.learning_rate = 0.05;
  VaeResult r = train_vae(m, e, nullptr, c, {}, o, rng);
  ASSERT_EQ(r.reports.front().epoch, 0u);
  EXPECT_GT(r.reports.back().elbo, r.reports.front().elbo);
  EXPECT_EQ(r.steps, 15u * 10u);
}

TEST(Vae, RejectsMismatchedEstimator) {
  Rng rng(8);
  NaiveBayes m = NaiveBayes::random(2, 5, rng);
  EncoderSpec s;
  s.kind = EncoderKind::bow;
  s.latent = LatentKind::categorical;
  s.vocab_size = 5;
  s.latent_size = 2;
  Encoder e = Encoder::create(s, &rng, 0.1);
  VaeOptions o;
  o.estimator = Estimator::reparam;
  const Corpus c{{2, 3}};
  EXPECT_THROW(train_vae(m, e, nullptr, c, {}, o, rng), Error);
}

TEST(Vae, WarmupSchedule) {
  VaeOptions o;
  o.beta = 2.0;
  o.warmup_steps = 100;
  EXPECT_DOUBLE_EQ(beta_at(o, 25), 0.5);
  EXPECT_DOUBLE_EQ(beta_at(o, 1000), 2.0);
  o.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(beta_at(o, 0), 2.0);
}

TEST(GapReport, DecompositionAndRefinement) {
  Rng rng(9);
  NaiveBayes m = NaiveBayes::random(3, 6, rng);
  EncoderSpec s;
  s.kind = EncoderKind::bow;
  s.latent = LatentKind::categorical;
  s.vocab_size = 6;
  s.latent_size = 3;
  s.embed = 3;
  Encoder e = Encoder::create(s, &rng, 0.5);
  GapOptions o;
  o.refine.steps = 50;
  o.refine.learning_rate = 0.1;
  for (int i = 0; i < 5; ++i) {
    GapReport g = inference_gap_report(m, e, random_sentence(rng, 5, 6), o, rng);
    EXPECT_TRUE(g.exact);
    EXPECT_EQ(g.inference_gap, g.approximation_gap + g.amortization_gap);
    EXPECT_NEAR(g.inference_gap, g.log_marginal - g.elbo_amortized, 1e-9);
    EXPECT_GE(g.amortization_gap, 0.0);
    EXPECT_GE(g.approximation_gap, -1e-9);
    EXPECT_EQ(g.trajectory.size(), 51u);
    EXPECT_LE(residual_amortization_gap(g, 50), residual_amortization_gap(g, 0));
  }
}

TEST(GapReport, GaussianModelUsesImportanceSampling) {
  Rng rng(10);
  GaussianBow m(6, 2, &rng, 0.5);
  EncoderSpec s;
  s.kind = EncoderKind::bow;
  s.vocab_size = 6;
  s.latent_size = 2;
  s.embed = 3;
  Encoder e = Encoder::create(s, &rng, 0.3);
  GapOptions o;
  o.refine.steps = 30;
  o.eval_samples = 200;
  o.is_k = 500;
  GapReport g = inference_gap_report(m, e, {2, 3, 5}, o, rng);
  EXPECT_FALSE(g.exact);
  EXPECT_EQ(g.inference_gap, g.approximation_gap + g.amortization_gap);
  EXPECT_THROW(residual_amortization_gap(g, 1), Error);
}
