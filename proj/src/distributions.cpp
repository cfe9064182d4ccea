#include "latentkit/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "latentkit/error.hpp"

namespace latentkit {

Categorical Categorical::from_probs(std::span<const double> probs) {
  if (probs.empty()) fail(ErrorCode::invalid_argument, "categorical needs K >= 1");
  double total = 0.0;
  std::vector<double> logits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) fail(ErrorCode::invalid_argument, "categorical probability " + std::to_string(i) + " is negative or NaN");
    total += probs[i];
    logits[i] = safe_log(probs[i]);
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    fail(ErrorCode::invalid_argument, "categorical probabilities sum to " + std::to_string(total));
  }
  return Categorical(Tensor::vector(std::move(logits)));
}

Categorical Categorical::from_logits(Tensor logits) {
  if (logits.rank() != 1) fail(ErrorCode::shape_mismatch, "categorical logits must be rank 1, got " + shape_string(logits.shape()));
  return Categorical(std::move(logits));
}

Tensor Categorical::log_probs() const { return log_softmax(logits_); }

std::vector<double> Categorical::probs() const { return softmax(logits_.values()); }

Tensor Categorical::log_prob(std::size_t k) const {
  if (k >= size()) {
    fail(ErrorCode::out_of_range, "categorical index " + std::to_string(k) + " out of range for K=" + std::to_string(size()));
  }
  return pick(log_probs(), k);
}

double cat_log_prob(const Categorical& p, std::size_t k) { return p.log_prob(k).item(); }

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

std::size_t cat_sample(const Categorical& p, Rng& rng) {
  const auto probs = p.probs();
  return sample_index(probs, rng);
}

Tensor categorical_kl(const Tensor& q_logits, const Tensor& p_logits) {
  if (q_logits.shape() != p_logits.shape()) {
    fail(ErrorCode::shape_mismatch, "categorical_kl: shapes differ " + shape_string(q_logits.shape()) + " and " +
                                        shape_string(p_logits.shape()));
  }
  Tensor log_q = log_softmax(q_logits);
  Tensor log_p = log_softmax(p_logits);
  return sum(exp(log_q) * (log_q - log_p));
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorCode::shape_mismatch, "total_variation: sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::fabs(p[i] - q[i]);
  return 0.5 * acc;
}

DiagGaussian DiagGaussian::standard(std::size_t d) {
  return {Tensor::zeros({d}), Tensor::zeros({d})};
}

namespace {
void check_dim(const char* op, const DiagGaussian& p, const Tensor& z) {
  if (p.mean.shape() != p.log_var.shape()) {
    fail(ErrorCode::shape_mismatch, std::string(op) + ": mean " + shape_string(p.mean.shape()) + " and log_var " +
                                        shape_string(p.log_var.shape()) + " differ");
  }
  if (z.numel() != p.dim()) {
    fail(ErrorCode::shape_mismatch, std::string(op) + ": dimension " + std::to_string(z.numel()) +
                                        " does not match Gaussian dimension " + std::to_string(p.dim()));
  }
}
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

Tensor gaussian_log_prob(const DiagGaussian& p, const Tensor& z) {
  check_dim("gaussian_log_prob", p, z);
  Tensor diff = reshape(z, p.mean.shape()) - p.mean;
  Tensor quad = square(diff) * exp(-p.log_var);
  return -0.5 * sum(p.log_var + quad) - 0.5 * kLog2Pi * static_cast<double>(p.dim());
}

Tensor gaussian_sample_reparam(const DiagGaussian& p, const Tensor& noise) {
  check_dim("gaussian_sample_reparam", p, noise);
  return p.mean + exp(0.5 * p.log_var) * reshape(noise, p.mean.shape());
}

Tensor gaussian_sample(const DiagGaussian& p, Rng& rng) {
  return gaussian_sample_reparam(p, Tensor::from(p.mean.shape(), rng.normals(p.dim())));
}

Tensor gaussian_kl_standard(const DiagGaussian& p) {
  if (p.mean.shape() != p.log_var.shape()) fail(ErrorCode::shape_mismatch, "gaussian_kl_standard: mean/log_var shapes differ");
  return -0.5 * sum(p.log_var - exp(p.log_var) - square(p.mean) + 1.0);
}

Tensor unit_gaussian_log_prob(const Tensor& mean, const Tensor& z) {
  if (mean.numel() != z.numel()) {
    fail(ErrorCode::shape_mismatch, "unit_gaussian_log_prob: dimension " + std::to_string(z.numel()) + " vs " +
                                        std::to_string(mean.numel()));
  }
  Tensor diff = reshape(z, mean.shape()) - mean;
  return -0.5 * sum(square(diff)) - 0.5 * kLog2Pi * static_cast<double>(mean.numel());
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return -std::log(-std::log(u));
}

double gumbel_sample(Rng& rng) { return gumbel_from_uniform(rng.uniform_open()); }

std::vector<double> gumbel_noise(std::size_t k, Rng& rng) {
  std::vector<double> g(k);
  for (double& v : g) v = gumbel_sample(rng);
  return g;
}

std::size_t gumbel_max_sample(std::span<const double> logits, Rng& rng) {
  if (logits.empty()) fail(ErrorCode::invalid_argument, "gumbel_max_sample needs K >= 1");
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) fail(ErrorCode::numeric, "gumbel_max_sample: logit " + std::to_string(i) + " is not finite");
  }
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double v = logits[i] + gumbel_sample(rng);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

Concrete::Concrete(Tensor l, Tensor t) : logits(std::move(l)), temperature(std::move(t)) {
  if (logits.rank() != 1 || logits.numel() < 2) {
    fail(ErrorCode::invalid_argument, "Concrete needs rank-1 logits with K >= 2, got " + shape_string(logits.shape()));
  }
  if (temperature.numel() != 1 || !(temperature.item() > 0.0)) {
    fail(ErrorCode::invalid_argument, "Concrete temperature must be a positive scalar");
  }
}

Concrete::Concrete(Tensor l, double t) : Concrete(std::move(l), Tensor::scalar(t)) {}

Tensor concrete_sample(const Concrete& p, std::span<const double> gumbel) {
  if (gumbel.size() != p.size()) fail(ErrorCode::shape_mismatch, "concrete_sample: noise size differs from K");
  Tensor g = Tensor::vector(std::vector<double>(gumbel.begin(), gumbel.end()));
  return softmax((p.logits + g) / p.temperature);
}

Tensor concrete_sample(const Concrete& p, Rng& rng) {
  const auto g = gumbel_noise(p.size(), rng);
  return concrete_sample(p, g);
}

Tensor concrete_log_density(const Tensor& s, const Concrete& p) {
  const std::size_t k = p.size();
  if (s.numel() != k) fail(ErrorCode::shape_mismatch, "concrete_log_density: point has " + std::to_string(s.numel()) + " coordinates, K=" + std::to_string(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (!(s.values()[i] > 0.0)) {
      fail(ErrorCode::out_of_range, "concrete_log_density: coordinate " + std::to_string(i) + " lies on the simplex boundary");
    }
  }
  const double kk = static_cast<double>(k);
  Tensor log_s = log(reshape(s, {k}));
  Tensor tau = p.temperature;
  Tensor log_tau = log(tau);
  // (K-1)! tau^(K-1) prod alpha_k s_k^(-tau-1) / (sum_j alpha_j s_j^(-tau))^K
  Tensor numerator = sum(p.logits - (tau + 1.0) * log_s);
  Tensor denominator = kk * log_sum_exp(p.logits - tau * log_s);
  return (std::lgamma(kk) + (kk - 1.0) * log_tau) + numerator - denominator;
}

}  // namespace latentkit
