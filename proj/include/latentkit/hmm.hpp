#pragma once

// Hidden Markov models with tabular or neural parameterizations. Both realize
// to the same log-probability tables, which all HMM inference consumes.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "latentkit/models.hpp"
#include "latentkit/nn.hpp"

namespace latentkit {

// Row 0 of `log_trans` is the start state; row j + 1 holds transitions out of
// state j. Every row is normalized.
struct HmmRows {
  Tensor log_trans;  // [K + 1, K]
  Tensor log_emit;   // [K, V]

  std::size_t num_states() const { return log_emit.dim(0); }
  std::size_t vocab_size() const { return log_emit.dim(1); }
};

class HiddenMarkovModel final : public LatentModel {
 public:
  enum class Representation { tabular, neural };

  // Zero logits: uniform rows.
  static HiddenMarkovModel tabular(std::size_t k, std::size_t v);
  // start: [K]; trans: K rows of K; emit: K rows of V. All rows simplex points.
  static HiddenMarkovModel from_probs(std::span<const double> start, const std::vector<std::vector<double>>& trans,
                                      const std::vector<std::vector<double>>& emit);
  // Every row drawn from Dirichlet(1).
  static HiddenMarkovModel random_tabular(std::size_t k, std::size_t v, Rng& rng);
  // State embeddings fed through one MLP for transitions and one for
  // emissions; the emission of x_t is conditioned on z_t.
  static HiddenMarkovModel neural(std::size_t k, std::size_t v, std::size_t embed, std::size_t hidden, Rng* rng,
                                  double radius);

  Representation representation() const { return rep_; }
  std::string family() const override { return rep_ == Representation::tabular ? "hmm" : "neural-hmm"; }
  LatentKind latent_kind() const override { return LatentKind::state_sequence; }
  std::size_t vocab_size() const override { return v_; }
  std::size_t num_states() const { return k_; }
  ParameterList parameters() const override;
  // Sentences have fixed length options.length.
  Draw sample(Rng& rng, const SampleOptions& options) const override;
  std::unique_ptr<LatentModel> clone() const override;

  // Differentiable realization of the normalized tables.
  HmmRows realize() const;

  Tensor& trans_logits() { return trans_logits_; }
  Tensor& emit_logits() { return emit_logits_; }

 private:
  HiddenMarkovModel() = default;

  Representation rep_ = Representation::tabular;
  std::size_t k_ = 0;
  std::size_t v_ = 0;
  // tabular
  Tensor trans_logits_;  // [K + 1, K]
  Tensor emit_logits_;   // [K, V]
  // neural
  Tensor state_embedding_;  // [K + 1, e]; row 0 is the start state
  Mlp trans_mlp_;
  Mlp emit_mlp_;
};

HmmRows neural_hmm_realize(const HiddenMarkovModel& model);

// sum_t log mu_{z_{t-1}, z_t} + sum_t log pi_{z_t, x_t}, with z_0 the start.
Tensor hmm_log_joint(const HmmRows& rows, const Sentence& x, std::span<const std::size_t> z);
double hmm_log_joint(const HiddenMarkovModel& model, const Sentence& x, std::span<const std::size_t> z);

// Log-space forward algorithm, O(T K^2). Differentiable.
Tensor hmm_forward(const HmmRows& rows, const Sentence& x);
double hmm_forward(const HiddenMarkovModel& model, const Sentence& x);

}  // namespace latentkit
