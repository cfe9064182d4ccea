#include "latentkit/models.hpp"

#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

void check_simplex(std::span<const double> p, const std::string& what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) fail(ErrorCode::invalid_argument, what + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorCode::invalid_argument, what + " sums to " + std::to_string(total) + ", not 1");
  }
}

// Sum over tokens of rows of a [K, V] log table: returns [K].
Tensor sum_token_columns(const Tensor& log_table_kv, const Sentence& x) {
  const std::size_t k = log_table_kv.dim(0);
  const std::size_t v = log_table_kv.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(k * x.size());
  for (std::size_t j = 0; j < k; ++j) {
    for (TokenId t : x) idx.push_back(j * v + t);
  }
  return sum(reshape(take(log_table_kv, idx), {k, x.size()}), 1);
}

// [N, V] count matrix of a batch.
Tensor count_matrix(std::span<const Sentence> xs, std::size_t v) {
  std::vector<double> counts(xs.size() * v, 0.0);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    check_sentence(xs[n], v, "sentence");
    for (TokenId t : xs[n]) counts[n * v + t] += 1.0;
  }
  return Tensor::from({xs.size(), v}, std::move(counts));
}

Sentence draw_tokens(std::span<const double> probs, std::size_t length, Rng& rng) {
  Sentence x(length);
  for (auto& t : x) t = sample_index(probs, rng);
  return x;
}

void check_state(std::size_t k, std::size_t states) {
  if (k >= states) {
    fail(ErrorCode::out_of_range, "latent state " + std::to_string(k) + " out of range for " + std::to_string(states) + " states");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor DiscreteLatentModel::log_joint_all(const Sentence& x) const {
  return log_prior_all() + log_likelihood_all(x);
}

Tensor DiscreteLatentModel::log_joint(const Sentence& x, std::size_t k) const {
  check_state(k, num_states());
  return pick(log_joint_all(x), k);
}

Tensor DiscreteLatentModel::log_joint_batch(std::span<const Sentence> xs) const {
  if (xs.empty()) fail(ErrorCode::invalid_argument, "empty batch");
  std::vector<Tensor> rows;
  rows.reserve(xs.size());
  for (const auto& x : xs) rows.push_back(log_joint_all(x));
  return stack(rows);
}

Draw DiscreteLatentModel::sample(Rng& rng, const SampleOptions& options) const {
  NoGradGuard no_grad;
  Draw d;
  const std::size_t k = sample_index(softmax(log_prior_all().values()), rng);
  d.states = {k};
  d.x = sample_given(k, rng, options, d.truncated);
  return d;
}

Tensor ContinuousLatentModel::log_prior(const Tensor& z) const {
  return unit_gaussian_log_prob(prior_mean(), z);
}

Tensor ContinuousLatentModel::log_joint(const Sentence& x, const Tensor& z) const {
  return log_prior(z) + log_likelihood(x, z);
}

Draw ContinuousLatentModel::sample(Rng& rng, const SampleOptions& options) const {
  NoGradGuard no_grad;
  Draw d;
  Tensor mu = prior_mean();
  d.z = rng.normals(mu.numel());
  for (std::size_t i = 0; i < d.z.size(); ++i) d.z[i] += mu[i];
  d.x = sample_given(Tensor::vector(d.z), rng, options, d.truncated);
  return d;
}

// ---------------------------------------------------------------------------
// NaiveBayes

NaiveBayes::NaiveBayes(std::size_t k, std::size_t v)
    : prior_logits_(Tensor::zeros({k}, true)), emission_logits_(Tensor::zeros({k, v}, true)) {}

NaiveBayes NaiveBayes::from_probs(std::span<const double> mu, const std::vector<std::vector<double>>& pi) {
  if (mu.empty() || pi.empty()) fail(ErrorCode::invalid_argument, "naive Bayes needs at least one state");
  NaiveBayes m(mu.size(), pi.front().size());
  m.set_probs(mu, pi);
  return m;
}

NaiveBayes NaiveBayes::random(std::size_t k, std::size_t v, Rng& rng) {
  std::vector<double> mu = rng.dirichlet_ones(k);
  std::vector<std::vector<double>> pi(k);
  for (auto& r : pi) r = rng.dirichlet_ones(v);
  return from_probs(mu, pi);
}

void NaiveBayes::set_probs(std::span<const double> mu, const std::vector<std::vector<double>>& pi) {
  const std::size_t k = num_states();
  const std::size_t v = vocab_size();
  if (mu.size() != k || pi.size() != k) fail(ErrorCode::shape_mismatch, "naive Bayes tables do not match K=" + std::to_string(k));
  check_simplex(mu, "prior mu");
  std::vector<double> flat;
  flat.reserve(k * v);
  for (std::size_t j = 0; j < k; ++j) {
    if (pi[j].size() != v) fail(ErrorCode::shape_mismatch, "emission row " + std::to_string(j) + " does not have V=" + std::to_string(v) + " entries");
    check_simplex(pi[j], "emission row " + std::to_string(j));
    flat.insert(flat.end(), pi[j].begin(), pi[j].end());
  }
  auto pv = prior_logits_.mutable_values();
  for (std::size_t j = 0; j < k; ++j) pv[j] = safe_log(mu[j]);
  auto ev = emission_logits_.mutable_values();
  for (std::size_t i = 0; i < flat.size(); ++i) ev[i] = safe_log(flat[i]);
}

ParameterList NaiveBayes::parameters() const {
  return {{"prior_logits", prior_logits_}, {"emission_logits", emission_logits_}};
}

Tensor NaiveBayes::log_prior_all() const { return log_softmax(prior_logits_); }

Tensor NaiveBayes::log_likelihood_all(const Sentence& x) const {
  check_sentence(x, vocab_size(), "sentence");
  return sum_token_columns(log_softmax(emission_logits_), x);
}

Tensor NaiveBayes::log_joint_batch(std::span<const Sentence> xs) const {
  if (xs.empty()) fail(ErrorCode::invalid_argument, "empty batch");
  Tensor counts = count_matrix(xs, vocab_size());
  return matmul(counts, transpose(log_softmax(emission_logits_))) + log_prior_all();
}

Sentence NaiveBayes::sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const {
  check_state(k, num_states());
  truncated = false;
  const std::size_t v = vocab_size();
  auto row_logits = emission_logits_.values().subspan(k * v, v);
  return draw_tokens(softmax(row_logits), options.length, rng);
}

std::unique_ptr<LatentModel> NaiveBayes::clone() const {
  auto c = std::make_unique<NaiveBayes>(*this);
  c->prior_logits_ = prior_logits_.clone(true);
  c->emission_logits_ = emission_logits_.clone(true);
  return c;
}

std::vector<double> NaiveBayes::prior_probs() const { return softmax(prior_logits_.values()); }

std::vector<std::vector<double>> NaiveBayes::emission_probs() const {
  const std::size_t v = vocab_size();
  std::vector<std::vector<double>> out(num_states());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = softmax(emission_logits_.values().subspan(k * v, v));
  return out;
}

double NaiveBayes::log_joint_value(const Sentence& x, std::size_t k) const {
  check_state(k, num_states());
  check_sentence(x, vocab_size(), "sentence");
  const std::size_t v = vocab_size();
  auto row = emission_logits_.values().subspan(k * v, v);
  const double row_lse = log_sum_exp(row);
  double total = prior_logits_[k] - log_sum_exp(prior_logits_.values());
  for (TokenId t : x) total += row[t] - row_lse;
  return total;
}

double nb_log_joint(const NaiveBayes& model, const Sentence& x, std::size_t z) {
  return model.log_joint_value(x, z);
}

// ---------------------------------------------------------------------------
// CategoricalBow

CategoricalBow::CategoricalBow(std::size_t k, std::size_t v)
    : prior_logits_(Tensor::zeros({k}, true)), weight_(Tensor::zeros({v, k}, true)) {}

CategoricalBow CategoricalBow::random(std::size_t k, std::size_t v, Rng& rng, double radius) {
  CategoricalBow m(k, v);
  std::vector<double> mu = rng.dirichlet_ones(k);
  auto pv = m.prior_logits_.mutable_values();
  for (std::size_t j = 0; j < k; ++j) pv[j] = safe_log(mu[j]);
  init_uniform(m.weight_, rng, radius);
  return m;
}

ParameterList CategoricalBow::parameters() const {
  return {{"prior_logits", prior_logits_}, {"weight", weight_}};
}

Tensor CategoricalBow::log_prior_all() const { return log_softmax(prior_logits_); }

Tensor CategoricalBow::log_likelihood_all(const Sentence& x) const {
  check_sentence(x, vocab_size(), "sentence");
  return sum_token_columns(log_softmax(transpose(weight_)), x);
}

Tensor CategoricalBow::log_joint_batch(std::span<const Sentence> xs) const {
  if (xs.empty()) fail(ErrorCode::invalid_argument, "empty batch");
  Tensor counts = count_matrix(xs, vocab_size());
  return matmul(counts, transpose(log_softmax(transpose(weight_)))) + log_prior_all();
}

Tensor CategoricalBow::log_likelihood_relaxed(const Sentence& x, const Tensor& s) const {
  check_sentence(x, vocab_size(), "sentence");
  if (s.numel() != num_states()) {
    fail(ErrorCode::shape_mismatch, "relaxed latent has " + std::to_string(s.numel()) + " entries, expected " + std::to_string(num_states()));
  }
  Tensor lp = log_softmax(matmul(weight_, reshape(s, {s.numel()})));
  return sum(take(lp, std::span<const std::size_t>(x)));
}

Sentence CategoricalBow::sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const {
  check_state(k, num_states());
  truncated = false;
  const std::size_t v = vocab_size();
  const std::size_t kk = num_states();
  std::vector<double> column(v);
  for (std::size_t i = 0; i < v; ++i) column[i] = weight_[i * kk + k];
  return draw_tokens(softmax(column), options.length, rng);
}

std::unique_ptr<LatentModel> CategoricalBow::clone() const {
  auto c = std::make_unique<CategoricalBow>(*this);
  c->prior_logits_ = prior_logits_.clone(true);
  c->weight_ = weight_.clone(true);
  return c;
}

// ---------------------------------------------------------------------------
// RnnLm

RnnLm::RnnLm(std::size_t v, std::size_t embed, std::size_t hidden, std::size_t latent_width, Rng* rng, double radius)
    : embedding_(Tensor::zeros({v, embed}, true)),
      cell_(ElmanCell::create(embed + latent_width, hidden, rng, radius)),
      output_(Tensor::zeros({v, hidden}, true)),
      latent_width_(latent_width) {
  if (v == 0 || embed == 0 || hidden == 0) fail(ErrorCode::invalid_argument, "RNN sizes must be positive");
  if (rng) {
    init_uniform(embedding_, *rng, radius);
    init_uniform(output_, *rng, radius);
  }
}

Tensor RnnLm::step_input(TokenId prev, const Tensor* z) const {
  Tensor e = row(embedding_, prev);
  if (latent_width_ == 0) return e;
  return concat({e, *z});
}

Tensor RnnLm::log_likelihood(const Sentence& x, const Tensor* z) const {
  check_sentence(x, vocab_size(), "sentence");
  if (x.empty()) fail(ErrorCode::invalid_argument, "empty sentence");
  if (latent_width_ > 0) {
    if (!z) fail(ErrorCode::invalid_argument, "conditional RNN needs a latent vector");
    if (z->numel() != latent_width_) {
      fail(ErrorCode::shape_mismatch, "latent has " + std::to_string(z->numel()) + " entries, decoder expects " + std::to_string(latent_width_));
    }
  } else if (z) {
    fail(ErrorCode::invalid_argument, "unconditional RNN given a latent vector");
  }
  Tensor zz;
  if (z) zz = reshape(*z, {latent_width_});
  Tensor h = Tensor::zeros({hidden()});
  TokenId prev = kBos;
  std::vector<Tensor> terms;
  terms.reserve(x.size());
  for (TokenId t : x) {
    h = cell_.step(h, step_input(prev, z ? &zz : nullptr));
    terms.push_back(pick(log_softmax(matmul(output_, h)), t));
    prev = t;
  }
  return sum(stack(terms));
}

Sentence RnnLm::sample(Rng& rng, std::size_t max_length, const Tensor* z, bool& truncated) const {
  NoGradGuard no_grad;
  if (latent_width_ > 0 && (!z || z->numel() != latent_width_)) {
    fail(ErrorCode::shape_mismatch, "conditional RNN sampling needs a latent of width " + std::to_string(latent_width_));
  }
  if (max_length == 0) fail(ErrorCode::invalid_argument, "max_length must be positive");
  Tensor zz;
  if (latent_width_ > 0) zz = reshape(*z, {latent_width_});
  Tensor h = Tensor::zeros({hidden()});
  TokenId prev = kBos;
  Sentence x;
  truncated = true;
  while (x.size() < max_length) {
    h = cell_.step(h, step_input(prev, latent_width_ > 0 ? &zz : nullptr));
    const TokenId t = sample_index(softmax(matmul(output_, h).values()), rng);
    x.push_back(t);
    if (t == kEos) {
      truncated = false;
      break;
    }
    prev = t;
  }
  return x;
}

void RnnLm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".embedding", embedding_});
  cell_.collect(prefix + ".cell", out);
  out.push_back({prefix + ".output", output_});
}

RnnLm RnnLm::clone() const {
  RnnLm c;
  c.embedding_ = embedding_.clone(true);
  c.cell_ = cell_.clone();
  c.output_ = output_.clone(true);
  c.latent_width_ = latent_width_;
  return c;
}

double rnnlm_log_likelihood(const RnnLm& lm, const Sentence& x) {
  NoGradGuard no_grad;
  return lm.log_likelihood(x).item();
}

double crnnlm_log_likelihood(const RnnLm& lm, const Sentence& x, std::span<const double> z) {
  NoGradGuard no_grad;
  Tensor zt = Tensor::vector({z.begin(), z.end()});
  return lm.log_likelihood(x, &zt).item();
}

// ---------------------------------------------------------------------------
// MixtureRnn

MixtureRnn::MixtureRnn(std::size_t k, std::size_t v, std::size_t embed, std::size_t hidden, Rng* rng, double radius)
    : prior_logits_(Tensor::zeros({k}, true)) {
  if (k == 0) fail(ErrorCode::invalid_argument, "mixture needs at least one component");
  if (rng) {
    std::vector<double> mu = rng->dirichlet_ones(k);
    auto pv = prior_logits_.mutable_values();
    for (std::size_t j = 0; j < k; ++j) pv[j] = safe_log(mu[j]);
  }
  components_.reserve(k);
  for (std::size_t j = 0; j < k; ++j) components_.emplace_back(v, embed, hidden, 0, rng, radius);
}

ParameterList MixtureRnn::parameters() const {
  ParameterList out{{"prior_logits", prior_logits_}};
  for (std::size_t j = 0; j < components_.size(); ++j) components_[j].collect("component" + std::to_string(j), out);
  return out;
}

Tensor MixtureRnn::log_prior_all() const { return log_softmax(prior_logits_); }

Tensor MixtureRnn::log_likelihood_all(const Sentence& x) const {
  std::vector<Tensor> parts;
  parts.reserve(components_.size());
  for (const auto& c : components_) parts.push_back(c.log_likelihood(x));
  return stack(parts);
}

Sentence MixtureRnn::sample_given(std::size_t k, Rng& rng, const SampleOptions& options, bool& truncated) const {
  check_state(k, num_states());
  return components_[k].sample(rng, options.max_length, nullptr, truncated);
}

std::unique_ptr<LatentModel> MixtureRnn::clone() const {
  auto c = std::unique_ptr<MixtureRnn>(new MixtureRnn());
  c->prior_logits_ = prior_logits_.clone(true);
  for (const auto& comp : components_) c->components_.push_back(comp.clone());
  return c;
}

double mixture_rnn_log_joint(const MixtureRnn& model, const Sentence& x, std::size_t z) {
  NoGradGuard no_grad;
  return model.log_joint(x, z).item();
}

// ---------------------------------------------------------------------------
// GaussianBow

GaussianBow::GaussianBow(std::size_t v, std::size_t d, Rng* rng, double radius)
    : prior_mean_(Tensor::zeros({d})), weight_(Tensor::zeros({v, d}, true)) {
  if (rng) init_uniform(weight_, *rng, radius);
}

ParameterList GaussianBow::parameters() const { return {{"prior_mean", prior_mean_}, {"weight", weight_}}; }

ParameterList GaussianBow::trainable_parameters() const { return {{"weight", weight_}}; }

Tensor GaussianBow::log_likelihood(const Sentence& x, const Tensor& z) const {
  check_sentence(x, vocab_size(), "sentence");
  if (z.numel() != latent_dim()) {
    fail(ErrorCode::shape_mismatch, "latent has " + std::to_string(z.numel()) + " entries, model expects " + std::to_string(latent_dim()));
  }
  Tensor lp = log_softmax(matmul(weight_, reshape(z, {latent_dim()})));
  return sum(take(lp, std::span<const std::size_t>(x)));
}

Sentence GaussianBow::sample_given(const Tensor& z, Rng& rng, const SampleOptions& options, bool& truncated) const {
  NoGradGuard no_grad;
  if (z.numel() != latent_dim()) fail(ErrorCode::shape_mismatch, "latent width mismatch in sampling");
  truncated = false;
  Tensor logits = matmul(weight_, reshape(z, {latent_dim()}));
  return draw_tokens(softmax(logits.values()), options.length, rng);
}

std::unique_ptr<LatentModel> GaussianBow::clone() const {
  auto c = std::make_unique<GaussianBow>(*this);
  c->prior_mean_ = prior_mean_.clone(false);
  c->weight_ = weight_.clone(true);
  return c;
}

double gaussian_bow_log_joint(const GaussianBow& model, const Sentence& x, std::span<const double> z) {
  NoGradGuard no_grad;
  return model.log_joint(x, Tensor::vector({z.begin(), z.end()})).item();
}

// ---------------------------------------------------------------------------
// GaussianCrnn

GaussianCrnn::GaussianCrnn(std::size_t v, std::size_t embed, std::size_t hidden, std::size_t latent, Rng* rng, double radius)
    : prior_mean_(Tensor::zeros({latent})), decoder_(v, embed, hidden, latent, rng, radius) {
  if (latent == 0) fail(ErrorCode::invalid_argument, "latent width must be positive");
}

ParameterList GaussianCrnn::parameters() const {
  ParameterList out{{"prior_mean", prior_mean_}};
  decoder_.collect("decoder", out);
  return out;
}

ParameterList GaussianCrnn::trainable_parameters() const {
  ParameterList out;
  decoder_.collect("decoder", out);
  return out;
}

Tensor GaussianCrnn::log_likelihood(const Sentence& x, const Tensor& z) const { return decoder_.log_likelihood(x, &z); }

Sentence GaussianCrnn::sample_given(const Tensor& z, Rng& rng, const SampleOptions& options, bool& truncated) const {
  return decoder_.sample(rng, options.max_length, &z, truncated);
}

std::unique_ptr<LatentModel> GaussianCrnn::clone() const {
  return std::unique_ptr<LatentModel>(new GaussianCrnn(prior_mean_.clone(false), decoder_.clone()));
}

double gaussian_crnn_log_joint(const GaussianCrnn& model, const Sentence& x, std::span<const double> z) {
  NoGradGuard no_grad;
  return model.log_joint(x, Tensor::vector({z.begin(), z.end()})).item();
}

}  // namespace latentkit
