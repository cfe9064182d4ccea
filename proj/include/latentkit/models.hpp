#pragma once

// Generative families over token sequences. Each exposes its log joint as a
// differentiable tensor expression and an ancestral sampler that follows the
// family's generative story.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentkit/distributions.hpp"
#include "latentkit/nn.hpp"
#include "latentkit/rng.hpp"
#include "latentkit/tensor.hpp"
#include "latentkit/vocab.hpp"

namespace latentkit {

enum class LatentKind { categorical, gaussian, state_sequence };

struct SampleOptions {
  std::size_t length = 10;      // fixed length for bag-of-words and HMM families
  std::size_t max_length = 20;  // cap for RNN families
};

// One ancestral draw. `states` holds one entry for a flat categorical latent
// and T entries for an HMM path; `z` holds a continuous latent.
struct Draw {
  std::vector<std::size_t> states;
  std::vector<double> z;
  Sentence x;
  bool truncated = false;
};

class LatentModel {
 public:
  virtual ~LatentModel() = default;

  virtual std::string family() const = 0;
  virtual LatentKind latent_kind() const = 0;
  virtual std::size_t vocab_size() const = 0;
  // Everything that is checkpointed.
  virtual ParameterList parameters() const = 0;
  // What optimizers update; excludes fixed prior statistics.
  virtual ParameterList trainable_parameters() const { return parameters(); }
  virtual Draw sample(Rng& rng, const SampleOptions& options) const = 0;
  virtual std::unique_ptr<LatentModel> clone() const = 0;
};

// Flat latent z in {0..K-1}.
class DiscreteLatentModel : public LatentModel {
 public:
  LatentKind latent_kind() const override { return LatentKind::categorical; }
  virtual std::size_t num_states() const = 0;
  // [K] vector of log p(z = k).
  virtual Tensor log_prior_all() const = 0;
  // [K] vector of log p(x | z = k).
  virtual Tensor log_likelihood_all(const Sentence& x) const = 0;
  virtual Sentence sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const = 0;

  Tensor log_joint_all(const Sentence& x) const;
  Tensor log_joint(const Sentence& x, std::size_t k) const;
  // [N, K] log joints for a batch; families with shared emission tables
  // override this to avoid per-sentence table normalization.
  virtual Tensor log_joint_batch(std::span<const Sentence> xs) const;

  Draw sample(Rng& rng, const SampleOptions& options) const override;
};

// Discrete-latent family whose likelihood formula accepts a simplex point in
// place of the one-hot latent (needed for the Concrete relaxation).
class SimplexRelaxable {
 public:
  virtual ~SimplexRelaxable() = default;
  virtual Tensor log_likelihood_relaxed(const Sentence& x, const Tensor& s) const = 0;
};

// Continuous latent z in R^d with prior N(prior_mean, I).
class ContinuousLatentModel : public LatentModel {
 public:
  LatentKind latent_kind() const override { return LatentKind::gaussian; }
  virtual std::size_t latent_dim() const = 0;
  virtual Tensor prior_mean() const = 0;
  virtual Tensor log_likelihood(const Sentence& x, const Tensor& z) const = 0;
  virtual Sentence sample_given(const Tensor& z, Rng& rng, const SampleOptions& options, bool& truncated) const = 0;

  Tensor log_prior(const Tensor& z) const;
  Tensor log_joint(const Sentence& x, const Tensor& z) const;
  Draw sample(Rng& rng, const SampleOptions& options) const override;
};

// ---------------------------------------------------------------------------

// Naive Bayes mixture: z ~ Cat(mu); x_t ~ Cat(pi_z) independently.
// Stored as logits; probabilities are their softmax.
class NaiveBayes final : public DiscreteLatentModel {
 public:
  NaiveBayes(std::size_t k, std::size_t v);
  static NaiveBayes from_probs(std::span<const double> mu, const std::vector<std::vector<double>>& pi);
  // mu and every row of pi drawn from Dirichlet(1).
  static NaiveBayes random(std::size_t k, std::size_t v, Rng& rng);

  std::string family() const override { return "nb"; }
  std::size_t vocab_size() const override { return emission_logits_.dim(1); }
  std::size_t num_states() const override { return prior_logits_.numel(); }
  ParameterList parameters() const override;
  Tensor log_prior_all() const override;
  Tensor log_likelihood_all(const Sentence& x) const override;
  Tensor log_joint_batch(std::span<const Sentence> xs) const override;
  Sentence sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const override;
  std::unique_ptr<LatentModel> clone() const override;

  std::vector<double> prior_probs() const;
  std::vector<std::vector<double>> emission_probs() const;
  void set_probs(std::span<const double> mu, const std::vector<std::vector<double>>& pi);

  // Value-only log p(x, z = k), computed from the probability tables.
  double log_joint_value(const Sentence& x, std::size_t k) const;

 private:
  Tensor prior_logits_;     // [K]
  Tensor emission_logits_;  // [K, V]
};

// Naive Bayes with emission logits W * onehot(z) (W: [V, K]). Identical
// distributions to `NaiveBayes`, but the emission formula extends to simplex
// points s: log p(x | s) = sum_t log softmax(W s)_{x_t}.
class CategoricalBow final : public DiscreteLatentModel, public SimplexRelaxable {
 public:
  CategoricalBow(std::size_t k, std::size_t v);
  static CategoricalBow random(std::size_t k, std::size_t v, Rng& rng, double radius);

  std::string family() const override { return "catbow"; }
  std::size_t vocab_size() const override { return weight_.dim(0); }
  std::size_t num_states() const override { return prior_logits_.numel(); }
  ParameterList parameters() const override;
  Tensor log_prior_all() const override;
  Tensor log_likelihood_all(const Sentence& x) const override;
  Tensor log_joint_batch(std::span<const Sentence> xs) const override;
  Tensor log_likelihood_relaxed(const Sentence& x, const Tensor& s) const override;
  Sentence sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const override;
  std::unique_ptr<LatentModel> clone() const override;

  Tensor& prior_logits() { return prior_logits_; }
  Tensor& weight() { return weight_; }

 private:
  Tensor prior_logits_;  // [K]
  Tensor weight_;        // [V, K]
};

// Elman RNN language model, optionally conditioned on a latent vector that is
// concatenated onto every step input.
class RnnLm {
 public:
  RnnLm(std::size_t v, std::size_t embed, std::size_t hidden, std::size_t latent_width, Rng* rng, double radius);

  std::size_t vocab_size() const { return embedding_.dim(0); }
  std::size_t hidden() const { return cell_.hidden(); }
  std::size_t embed_width() const { return embedding_.dim(1); }
  std::size_t latent_width() const { return latent_width_; }

  // sum_t log softmax(W h_t)_{x_t} with h_0 = 0 and x_0 = <s>. `z` must be
  // given exactly when latent_width() > 0.
  Tensor log_likelihood(const Sentence& x, const Tensor* z = nullptr) const;
  // Draws tokens until </s> or the cap; `truncated` reports the cap case.
  Sentence sample(Rng& rng, std::size_t max_length, const Tensor* z, bool& truncated) const;

  void collect(const std::string& prefix, ParameterList& out) const;
  RnnLm clone() const;

  Tensor& embedding() { return embedding_; }
  ElmanCell& cell() { return cell_; }
  Tensor& output() { return output_; }

 private:
  RnnLm() = default;
  Tensor step_input(TokenId prev, const Tensor* z) const;

  Tensor embedding_;  // [V, embed]
  ElmanCell cell_;    // input width embed + latent_width
  Tensor output_;     // W: [V, hidden]
  std::size_t latent_width_ = 0;
};

double rnnlm_log_likelihood(const RnnLm& lm, const Sentence& x);
double crnnlm_log_likelihood(const RnnLm& lm, const Sentence& x, std::span<const double> z);

// z ~ Cat(mu); x ~ RNNLM(pi_z).
class MixtureRnn final : public DiscreteLatentModel {
 public:
  MixtureRnn(std::size_t k, std::size_t v, std::size_t embed, std::size_t hidden, Rng* rng, double radius);

  std::string family() const override { return "mixture-rnn"; }
  std::size_t vocab_size() const override { return components_.front().vocab_size(); }
  std::size_t num_states() const override { return components_.size(); }
  ParameterList parameters() const override;
  Tensor log_prior_all() const override;
  Tensor log_likelihood_all(const Sentence& x) const override;
  Sentence sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const override;
  std::unique_ptr<LatentModel> clone() const override;

  Tensor& prior_logits() { return prior_logits_; }
  RnnLm& component(std::size_t k) { return components_.at(k); }

 private:
  MixtureRnn() = default;
  Tensor prior_logits_;
  std::vector<RnnLm> components_;
};

// z ~ N(mu, I); x_t ~ Cat(softmax(W z)) independently.
class GaussianBow final : public ContinuousLatentModel {
 public:
  GaussianBow(std::size_t v, std::size_t d, Rng* rng, double radius);

  std::string family() const override { return "gaussian-bow"; }
  std::size_t vocab_size() const override { return weight_.dim(0); }
  std::size_t latent_dim() const override { return prior_mean_.numel(); }
  ParameterList parameters() const override;
  ParameterList trainable_parameters() const override;
  Tensor prior_mean() const override { return prior_mean_; }
  Tensor log_likelihood(const Sentence& x, const Tensor& z) const override;
  Sentence sample_given(const Tensor& z, Rng& rng, const SampleOptions& options, bool& truncated) const override;
  std::unique_ptr<LatentModel> clone() const override;

  Tensor& weight() { return weight_; }
  Tensor& mutable_prior_mean() { return prior_mean_; }

 private:
  Tensor prior_mean_;  // [d]
  Tensor weight_;      // [V, d]
};

// z ~ N(mu, I); x ~ CRNNLM(theta, z).
class GaussianCrnn final : public ContinuousLatentModel {
 public:
  GaussianCrnn(std::size_t v, std::size_t embed, std::size_t hidden, std::size_t latent, Rng* rng, double radius);

  std::string family() const override { return "gaussian-crnn"; }
  std::size_t vocab_size() const override { return decoder_.vocab_size(); }
  std::size_t latent_dim() const override { return prior_mean_.numel(); }
  ParameterList parameters() const override;
  ParameterList trainable_parameters() const override;
  Tensor prior_mean() const override { return prior_mean_; }
  Tensor log_likelihood(const Sentence& x, const Tensor& z) const override;
  Sentence sample_given(const Tensor& z, Rng& rng, const SampleOptions& options, bool& truncated) const override;
  std::unique_ptr<LatentModel> clone() const override;

  RnnLm& decoder() { return decoder_; }
  Tensor& mutable_prior_mean() { return prior_mean_; }

 private:
  GaussianCrnn(Tensor prior_mean, RnnLm decoder) : prior_mean_(std::move(prior_mean)), decoder_(std::move(decoder)) {}
  Tensor prior_mean_;
  RnnLm decoder_;
};

double nb_log_joint(const NaiveBayes& model, const Sentence& x, std::size_t z);
double mixture_rnn_log_joint(const MixtureRnn& model, const Sentence& x, std::size_t z);
double gaussian_bow_log_joint(const GaussianBow& model, const Sentence& x, std::span<const double> z);
double gaussian_crnn_log_joint(const GaussianCrnn& model, const Sentence& x, std::span<const double> z);

}  // namespace latentkit
