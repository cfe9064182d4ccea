#pragma once

// Evidence lower bounds, variational families, per-datum SVI and amortized
// encoders.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentkit/distributions.hpp"
#include "latentkit/models.hpp"
#include "latentkit/nn.hpp"
#include "latentkit/optim.hpp"

namespace latentkit {

// q over a flat categorical latent (logits) or a diagonal Gaussian.
struct VariationalParams {
  LatentKind kind = LatentKind::categorical;
  Tensor logits;
  DiagGaussian gaussian;

  static VariationalParams categorical(Tensor logits);
  static VariationalParams normal(Tensor mean, Tensor log_var);
  // Fresh leaves with the same values, marked as requiring gradients.
  VariationalParams leaf_copy() const;
  ParameterList tensors() const;
};

// log p(x | z) as a function of z, plus the N(prior_mean, I) prior.
struct ContinuousTarget {
  std::function<Tensor(const Tensor& z)> log_likelihood;
  Tensor prior_mean;

  Tensor log_prior(const Tensor& z) const;
  Tensor log_joint(const Tensor& z) const { return log_prior(z) + log_likelihood(z); }
};

ContinuousTarget target_for(const ContinuousLatentModel& model, const Sentence& x);

enum class KlMode { analytic, sampled };

struct ElboOptions {
  std::size_t samples = 1;
  KlMode kl = KlMode::analytic;
  double beta = 1.0;
  double free_bits = 0.0;
};

// objective = reconstruction - beta * max(kl, free_bits); `kl` is unfloored.
struct ElboTerms {
  Tensor objective;
  Tensor reconstruction;
  Tensor kl;
};

struct ElboReport {
  double elbo = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  std::size_t samples = 0;
  double beta = 1.0;
  double free_bits = 0.0;
  std::uint64_t seed = 0;
};

ElboReport to_report(const ElboTerms& terms, const ElboOptions& options, std::uint64_t seed);

// Exact expectation over the K states.
ElboTerms elbo_categorical(const DiscreteLatentModel& model, const Sentence& x, const Tensor& q_logits,
                           const ElboOptions& options = {});
// Reparameterized Monte Carlo. `noise` holds samples * d standard normals.
ElboTerms elbo_gaussian(const ContinuousTarget& target, const DiagGaussian& q, std::span<const double> noise,
                        const ElboOptions& options = {});
// KL[N(mean, diag exp(log_var)) || N(prior_mean, I)].
Tensor gaussian_kl_to_prior(const DiagGaussian& q, const Tensor& prior_mean);

ElboReport elbo_estimate(const LatentModel& model, const VariationalParams& q, const Sentence& x, const ElboOptions& options,
                         Rng& rng);

// Linear warm-up min(1, step / warmup_steps).
double kl_anneal(std::uint64_t step, std::uint64_t warmup_steps);
// max(kl, floor); the adjoint is cut where kl < floor.
Tensor free_bits(const Tensor& kl, double floor);
double free_bits(double kl, double floor);

struct SviOptions {
  std::size_t steps = 100;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::plain_gradient;
  std::size_t samples = 1;  // Monte Carlo samples per step (Gaussian family)
};

struct SviResult {
  VariationalParams q;
  // ELBO before each step, then after the last one (steps + 1 entries).
  std::vector<double> elbo;
};

// Ascent on the ELBO in lambda only; model parameters are frozen. Throws
// (numeric) naming the step when the ELBO falls below -1e8.
SviResult svi_fit(const LatentModel& model, const Sentence& x, const VariationalParams& init, const SviOptions& options,
                  Rng& rng);

inline constexpr double kDivergenceFloor = -1e8;

enum class EncoderKind { rnn, bow };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::rnn;
  LatentKind latent = LatentKind::gaussian;
  std::size_t vocab_size = 0;
  std::size_t latent_size = 0;  // K for categorical, d for Gaussian
  std::size_t embed = 16;
  std::size_t hidden = 16;
};

// rnn: h = tanh(P h_T + c) over an Elman encoder, then heads.
// bow: h = sum_t E[x_t], then heads; with embed = K the categorical head can
// represent the exact naive Bayes posterior.
// Heads: mean = W1 h + b1 and log_var = W2 h + b2, or logits = W1 h + b1.
class Encoder {
 public:
  static Encoder create(const EncoderSpec& spec, Rng* rng, double radius);

  VariationalParams operator()(const Sentence& x) const;
  ParameterList parameters() const;
  Encoder clone() const;
  const EncoderSpec& spec() const { return spec_; }

  Tensor& embedding() { return embedding_; }
  Linear& head1() { return head1_; }
  Linear& head2() { return head2_; }

 private:
  EncoderSpec spec_;
  Tensor embedding_;
  ElmanCell cell_;
  Linear pool_;
  Linear head1_;
  Linear head2_;
};

VariationalParams encoder_forward(const Encoder& encoder, const Sentence& x);

// log q(z | x) for a sampled state or vector.
Tensor variational_log_prob(const VariationalParams& q, std::size_t k);
Tensor variational_log_prob(const VariationalParams& q, const Tensor& z);

}  // namespace latentkit
