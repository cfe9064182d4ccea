#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "latentkit/rng.hpp"
#include "latentkit/tensor.hpp"

namespace latentkit {

// Categorical over {0..K-1}, stored as (unnormalized) logits. Zero
// probabilities map to log(kLogFloor), so their log-probability is about -690.
class Categorical {
 public:
  // `probs` must be nonnegative and sum to 1 within 1e-9.
  static Categorical from_probs(std::span<const double> probs);
  static Categorical from_logits(Tensor logits);

  std::size_t size() const { return logits_.numel(); }
  const Tensor& logits() const { return logits_; }
  Tensor log_probs() const;
  std::vector<double> probs() const;
  Tensor log_prob(std::size_t k) const;

 private:
  explicit Categorical(Tensor logits) : logits_(std::move(logits)) {}
  Tensor logits_;
};

double cat_log_prob(const Categorical& p, std::size_t k);
std::size_t cat_sample(const Categorical& p, Rng& rng);
// Inverse-CDF draw from explicit probabilities.
std::size_t sample_index(std::span<const double> probs, Rng& rng);
// KL[q || p] between categoricals given by logits (differentiable in both).
Tensor categorical_kl(const Tensor& q_logits, const Tensor& p_logits);
double total_variation(std::span<const double> p, std::span<const double> q);

// Diagonal Gaussian with sigma^2 = exp(log_var).
struct DiagGaussian {
  Tensor mean;
  Tensor log_var;

  std::size_t dim() const { return mean.numel(); }
  static DiagGaussian standard(std::size_t d);
};

Tensor gaussian_log_prob(const DiagGaussian& p, const Tensor& z);
// z = mean + sigma * noise; differentiable in mean and log_var.
Tensor gaussian_sample_reparam(const DiagGaussian& p, const Tensor& noise);
Tensor gaussian_sample(const DiagGaussian& p, Rng& rng);
// KL[p || N(0, I)] = -1/2 sum(log_var - exp(log_var) - mean^2 + 1).
Tensor gaussian_kl_standard(const DiagGaussian& p);
// log N(z; mean, I) for a unit-variance prior with the given mean.
Tensor unit_gaussian_log_prob(const Tensor& mean, const Tensor& z);

// Gumbel(0, 1) noise. The uniform draw is clamped to (1e-12, 1 - 1e-12).
double gumbel_from_uniform(double u);
double gumbel_sample(Rng& rng);
std::vector<double> gumbel_noise(std::size_t k, Rng& rng);
// argmax_i (logits_i + g_i), lowest index on ties.
std::size_t gumbel_max_sample(std::span<const double> logits, Rng& rng);

// Concrete / Gumbel-Softmax on the (K-1)-simplex.
struct Concrete {
  Tensor logits;       // log alpha, K >= 2
  Tensor temperature;  // scalar tau > 0

  Concrete(Tensor logits, Tensor temperature);
  Concrete(Tensor logits, double temperature);
  std::size_t size() const { return logits.numel(); }
};

// softmax((logits + g) / tau) for caller-supplied Gumbel noise g.
Tensor concrete_sample(const Concrete& p, std::span<const double> gumbel);
Tensor concrete_sample(const Concrete& p, Rng& rng);
// log[(K-1)! tau^(K-1) prod_k alpha_k s_k^(-tau-1) / sum_j alpha_j s_j^(-tau)];
// every coordinate of s must be strictly positive.
Tensor concrete_log_density(const Tensor& s, const Concrete& p);

}  // namespace latentkit
