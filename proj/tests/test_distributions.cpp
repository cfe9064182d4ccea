#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "latentkit/distributions.hpp"
#include "latentkit/error.hpp"
#include "latentkit/gradcheck.hpp"

using namespace latentkit;

TEST(Categorical, FromProbsValidates) {
  const std::vector<double> bad{0.5, 0.6};
  EXPECT_THROW(Categorical::from_probs(bad), Error);
  const std::vector<double> neg{1.5, -0.5};
  EXPECT_THROW(Categorical::from_probs(neg), Error);
}

TEST(Categorical, ZeroProbabilityIsFloored) {
  const std::vector<double> p{0.0, 1.0};
  auto c = Categorical::from_probs(p);
  EXPECT_NEAR(cat_log_prob(c, 0), std::log(kLogFloor), 1e-6);
  EXPECT_NEAR(cat_log_prob(c, 1), 0.0, 1e-12);
}

TEST(Categorical, KlMatchesDirectSum) {
  Tensor q = Tensor::vector({0.3, -1.0, 2.0});
  Tensor p = Tensor::vector({0.0, 0.5, -0.5});
  const auto qp = softmax(q.values());
  const auto pp = softmax(p.values());
  double kl = 0;
  for (int i = 0; i < 3; ++i) kl += qp[i] * std::log(qp[i] / pp[i]);
  EXPECT_NEAR(categorical_kl(q, p).item(), kl, 1e-12);
  EXPECT_NEAR(categorical_kl(q, q).item(), 0.0, 1e-12);
}

TEST(Categorical, TotalVariation) {
  const std::vector<double> a{0.5, 0.5, 0.0}, b{0.0, 0.5, 0.5};
  EXPECT_NEAR(total_variation(a, b), 0.5, 1e-15);
  EXPECT_NEAR(total_variation(a, a), 0.0, 1e-15);
}

TEST(Gaussian, LogProbMatchesFormula) {
  DiagGaussian g{Tensor::vector({0.5, -1.0}), Tensor::vector({0.2, -0.3})};
  Tensor z = Tensor::vector({1.0, 0.0});
  double lp = 0;
  for (int i = 0; i < 2; ++i) {
    const double var = std::exp(g.log_var[i]);
    const double d = z[i] - g.mean[i];
    lp += -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * d * d / var;
  }
  EXPECT_NEAR(gaussian_log_prob(g, z).item(), lp, 1e-12);
}

TEST(Gaussian, KlStandardMatchesMonteCarlo) {
  DiagGaussian g{Tensor::vector({0.5, -1.0}), Tensor::vector({0.2, -0.3})};
  Rng rng(9);
  double acc = 0;
  const int n = 200000;
  const auto prior = DiagGaussian::standard(2);
  for (int i = 0; i < n; ++i) {
    Tensor z = gaussian_sample(g, rng);
    acc += gaussian_log_prob(g, z).item() - gaussian_log_prob(prior, z).item();
  }
  EXPECT_NEAR(acc / n, gaussian_kl_standard(g).item(), 0.01);
}

TEST(Gaussian, ReparamGradients) {
  Tensor mean = Tensor::vector({0.1, 0.2}, true);
  Tensor lv = Tensor::vector({-0.5, 0.3}, true);
  const Tensor noise = Tensor::vector({0.7, -1.2});
  ParameterList p{{"m", mean}, {"lv", lv}};
  auto f = [&] { return sum(square(gaussian_sample_reparam({mean, lv}, noise))); };
  EXPECT_LT(grad_check(f, p), 1e-7);
}

TEST(Gumbel, UniformClamp) {
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(0.0)));
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(1.0)));
  EXPECT_NEAR(gumbel_from_uniform(std::exp(-1.0)), 0.0, 1e-12);
}

TEST(Gumbel, MaxMatchesSoftmaxFrequencies) {
  const std::vector<double> logits{0.0, 1.0, -1.0, 0.5};
  const auto p = softmax(logits);
  Rng rng(4);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[gumbel_max_sample(logits, rng)];
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(counts[k] / double(n), p[k], 0.006);
}

TEST(Concrete, SampleOnSimplexAndTemperature) {
  Concrete c(Tensor::vector({0.0, 1.0, -0.5}), 0.5);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    auto s = concrete_sample(c, rng).to_vector();
    double t = 0;
    for (double v : s) {
      EXPECT_GT(v, 0.0);
      t += v;
    }
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
  EXPECT_THROW(Concrete(Tensor::vector({0.0, 1.0}), 0.0), Error);
  EXPECT_THROW(Concrete(Tensor::vector({0.0}), 1.0), Error);
}

// For K = 2 the log-odds y of a Concrete draw satisfy tau * y = (a1 - a2) + L
// with L standard logistic; the density formula must agree after the change
// of variables s1 = sigmoid(y).
TEST(Concrete, TwoStateDensityMatchesLogistic) {
  const double tau = 0.7;
  Concrete c(Tensor::vector({0.4, -0.3}), tau);
  for (double y : {-2.0, -0.3, 0.0, 0.9, 3.0}) {
    const double s1 = 1 / (1 + std::exp(-y));
    const double log_ds = std::log(s1 * (1 - s1));
    const double u = tau * y - 0.7;
    const double logistic = std::log(tau) - u - 2 * std::log1p(std::exp(-u));
    const double lp = concrete_log_density(Tensor::vector({s1, 1 - s1}), c).item();
    EXPECT_NEAR(lp + log_ds, logistic, 1e-10);
  }
}

TEST(Concrete, DensityRejectsBoundary) {
  Concrete c(Tensor::vector({0.0, 0.0}), 1.0);
  EXPECT_THROW(concrete_log_density(Tensor::vector({1.0, 0.0}), c), Error);
}
