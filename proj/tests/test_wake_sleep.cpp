#include <gtest/gtest.h>

#include <cmath>

#include "latentkit/wake_sleep.hpp"
#include "test_util.hpp"

using namespace latentkit;
using namespace lktest;

namespace {

Encoder nb_encoder(std::size_t k, std::size_t v, Rng& rng) {
  EncoderSpec s;
  s.kind = EncoderKind::bow;
  s.latent = LatentKind::categorical;
  s.vocab_size = v;
  s.latent_size = k;
  s.embed = k;
  return Encoder::create(s, &rng, 0.1);
}

std::vector<std::vector<double>> snapshot(const ParameterList& p) {
  std::vector<std::vector<double>> out;
  for (auto& t : p) out.push_back(t.tensor.to_vector());
  return out;
}

}  // namespace

TEST(WakeSleep, WakeTouchesOnlyModel) {
  Rng rng(1);
  NaiveBayes m = NaiveBayes::random(2, 6, rng);
  Encoder e = nb_encoder(2, 6, rng);
  const Corpus c = sample_corpus(m, 20, rng, 5);
  const auto enc_before = snapshot(e.parameters());
  const auto model_before = snapshot(m.parameters());
  Optimizer opt;
  wake_step(m, e, c, opt, rng);
  EXPECT_EQ(snapshot(e.parameters()), enc_before);
  EXPECT_NE(snapshot(m.parameters()), model_before);
}

TEST(WakeSleep, SleepTouchesOnlyEncoder) {
  Rng rng(2);
  NaiveBayes m = NaiveBayes::random(2, 6, rng);
  Encoder e = nb_encoder(2, 6, rng);
  const auto enc_before = snapshot(e.parameters());
  const auto model_before = snapshot(m.parameters());
  Optimizer opt;
  SampleOptions so;
  so.length = 5;
  sleep_step(m, e, 16, opt, rng, so);
  EXPECT_NE(snapshot(e.parameters()), enc_before);
  EXPECT_EQ(snapshot(m.parameters()), model_before);
}

// The sleep gradient averages grad log q(z | x) over model draws; on a tiny
// model its expectation is the exact sum over all (z, x).
TEST(WakeSleep, SleepGradientExpectation) {
  Rng rng(3);
  NaiveBayes m = NaiveBayes::random(2, 3, rng);
  Encoder e = nb_encoder(2, 3, rng);
  const ParameterList p = e.parameters();
  SampleOptions so;
  so.length = 2;
  // exact expectation over z in {0,1}, x in {0,1,2}^2
  std::vector<Draw> all;
  std::vector<double> weight;
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        Draw d;
        d.states = {z};
        d.x = {a, b};
        all.push_back(d);
        weight.push_back(std::exp(m.log_joint(d.x, z).item()));
      }
  std::vector<double> exact;
  for (std::size_t i = 0; i < all.size(); ++i) {
    zero_grads(p);
    sleep_objective(e, std::span<const Draw>(&all[i], 1)).backward();
    std::vector<double> g;
    for (auto& t : p)
      for (double v : t.tensor.grad()) g.push_back(v);
    if (exact.empty()) exact.assign(g.size(), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) exact[j] += weight[i] * g[j];
  }
  PhantomBatch b = sample_phantoms(m, 100000, so, rng);
  EXPECT_EQ(b.discarded, 0u);
  zero_grads(p);
  sleep_objective(e, b.pairs).backward();
  std::size_t j = 0;
  for (auto& t : p)
    for (double v : t.tensor.grad()) EXPECT_NEAR(v, exact[j++], 0.01);
}

TEST(WakeSleep, PhantomsDropTruncatedDraws) {
  Rng rng(4);
  MixtureRnn m(2, 5, 3, 3, &rng, 0.1);
  SampleOptions so;
  so.max_length = 1;
  PhantomBatch b = sample_phantoms(m, 200, so, rng);
  EXPECT_EQ(b.pairs.size() + b.discarded, 200u);
  EXPECT_GT(b.discarded, 0u);
  for (auto& d : b.pairs) EXPECT_FALSE(d.truncated);
}

TEST(WakeSleep, TrainingImprovesFit) {
  Rng rng(5);
  NaiveBayes truth = NaiveBayes::random(2, 8, rng);
  const Corpus c = sample_corpus(truth, 300, rng, 8);
  NaiveBayes m = NaiveBayes::random(2, 8, rng);
  Encoder e = nb_encoder(2, 8, rng);
  WakeSleepOptions o;
  o.epochs = 10;
  o.batch_size = 30;
  o.model_optimizer.learning_rate = 0.03;
  o.encoder_optimizer.learning_rate = 0.03;
  o.sample.length = 8;
  auto reports = wake_sleep_train(m, e, c, o, rng);
  ASSERT_EQ(reports.size(), 11u);
  EXPECT_GT(reports.back().loglik, reports.front().loglik);
  EXPECT_LT(reports.back().mean_tv, 0.2);
  EXPECT_NEAR(reports.back().mean_tv, mean_posterior_tv(m, e, c), 1e-12);
}

TEST(WakeSleep, ContinuousModelReportsNanTv) {
  Rng rng(6);
  GaussianBow m(6, 2, &rng, 0.5);
  EncoderSpec s;
  s.kind = EncoderKind::bow;
  s.vocab_size = 6;
  s.latent_size = 2;
  Encoder e = Encoder::create(s, &rng, 0.1);
  const Corpus c{{2, 3, 4}, {5, 5}, {1, 2}};
  WakeSleepOptions o;
  o.epochs = 1;
  o.batch_size = 3;
  o.sample.length = 3;
  auto reports = wake_sleep_train(m, e, c, o, rng);
  EXPECT_TRUE(std::isnan(reports.back().mean_tv));
  EXPECT_TRUE(std::isfinite(reports.back().loglik));
}
