#include "latentkit/exact.hpp"

#include <cmath>
#include <numeric>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

const DiscreteLatentModel* as_discrete(const LatentModel& model) {
  return dynamic_cast<const DiscreteLatentModel*>(&model);
}

const HiddenMarkovModel* as_hmm(const LatentModel& model) { return dynamic_cast<const HiddenMarkovModel*>(&model); }

[[noreturn]] void unsupported(const LatentModel& model, const char* what) {
  fail(ErrorCode::unsupported_model, std::string(what) + " needs a discrete latent; model '" + model.family() + "' has a continuous one");
}

std::size_t path_count(std::size_t k, std::size_t t) {
  const double count = std::pow(static_cast<double>(k), static_cast<double>(t));
  if (count > kMaxEnumeration) {
    fail(ErrorCode::invalid_argument, "enumeration over " + std::to_string(k) + "^" + std::to_string(t) + " = " +
                                          std::to_string(static_cast<long double>(count)) + " paths exceeds the limit of 1e6");
  }
  return static_cast<std::size_t>(count);
}

// Log joints of every HMM path, in mixed-radix order.
std::vector<double> hmm_path_log_joints(const HiddenMarkovModel& model, const Sentence& x) {
  NoGradGuard no_grad;
  check_sentence(x, model.vocab_size(), "sentence");
  if (x.empty()) fail(ErrorCode::invalid_argument, "empty sentence");
  const std::size_t k = model.num_states();
  const std::size_t v = model.vocab_size();
  const std::size_t n = path_count(k, x.size());
  HmmRows rows = model.realize();
  auto trans = rows.log_trans.values();
  auto emit = rows.log_emit.values();
  std::vector<double> out(n);
  std::vector<std::size_t> z(x.size(), 0);
  for (std::size_t p = 0; p < n; ++p) {
    double total = 0.0;
    std::size_t prev = 0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      total += trans[prev * k + z[t]] + emit[z[t] * v + x[t]];
      prev = z[t] + 1;
    }
    out[p] = total;
    for (std::size_t t = x.size(); t-- > 0;) {
      if (++z[t] < k) break;
      z[t] = 0;
    }
  }
  return out;
}

}  // namespace

std::vector<double> PosteriorTable::probs() const {
  std::vector<double> p(log_probs.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_probs[i]);
  return p;
}

std::vector<std::size_t> PosteriorTable::configuration(std::size_t index) const {
  if (index >= log_probs.size()) fail(ErrorCode::out_of_range, "posterior index out of range");
  std::vector<std::size_t> z(length);
  for (std::size_t t = length; t-- > 0;) {
    z[t] = index % num_states;
    index /= num_states;
  }
  return z;
}

PosteriorTable enumerate_posterior(const LatentModel& model, const Sentence& x) {
  PosteriorTable table;
  if (const auto* d = as_discrete(model)) {
    NoGradGuard no_grad;
    table.num_states = d->num_states();
    table.log_probs = d->log_joint_all(x).to_vector();
  } else if (const auto* h = as_hmm(model)) {
    table.num_states = h->num_states();
    table.length = x.size();
    table.log_probs = hmm_path_log_joints(*h, x);
  } else {
    unsupported(model, "enumerate_posterior");
  }
  const double lse = log_sum_exp(table.log_probs);
  for (double& v : table.log_probs) v -= lse;
  return table;
}

double log_marginal_enumeration(const LatentModel& model, const Sentence& x) {
  if (const auto* d = as_discrete(model)) {
    NoGradGuard no_grad;
    return log_sum_exp(d->log_joint_all(x).values());
  }
  if (const auto* h = as_hmm(model)) return log_sum_exp(hmm_path_log_joints(*h, x));
  unsupported(model, "log_marginal_enumeration");
}

Tensor log_marginal(const LatentModel& model, const Sentence& x) {
  if (const auto* d = as_discrete(model)) return log_sum_exp(d->log_joint_all(x));
  if (const auto* h = as_hmm(model)) return hmm_forward(h->realize(), x);
  unsupported(model, "log_marginal");
}

Tensor log_marginal_sum(const LatentModel& model, std::span<const Sentence> batch) {
  if (batch.empty()) fail(ErrorCode::invalid_argument, "empty batch");
  if (const auto* d = as_discrete(model)) return sum(log_sum_exp(d->log_joint_batch(batch)));
  if (const auto* h = as_hmm(model)) {
    HmmRows rows = h->realize();
    std::vector<Tensor> parts;
    parts.reserve(batch.size());
    for (const auto& x : batch) parts.push_back(hmm_forward(rows, x));
    return sum(stack(parts));
  }
  unsupported(model, "log_marginal_sum");
}

double corpus_log_marginal(const LatentModel& model, std::span<const Sentence> corpus) {
  NoGradGuard no_grad;
  double total = 0.0;
  constexpr std::size_t kChunk = 1024;
  for (std::size_t i = 0; i < corpus.size(); i += kChunk) {
    total += log_marginal_sum(model, corpus.subspan(i, std::min(kChunk, corpus.size() - i))).item();
  }
  return total;
}

std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

DirectTrace train_direct_marginal(LatentModel& model, std::span<const Sentence> corpus, const DirectOptions& options,
                                  Rng& rng, const std::function<void(const EpochCallbackArgs&)>& on_epoch) {
  if (corpus.empty()) fail(ErrorCode::invalid_argument, "empty corpus");
  Optimizer opt(options.optimizer);
  ParameterList params = model.trainable_parameters();
  DirectTrace trace;
  trace.loglik.push_back(corpus_log_marginal(model, corpus));
  if (on_epoch) on_epoch({0, trace.loglik.back()});
  const std::size_t batch = options.batch_size == 0 ? corpus.size() : options.batch_size;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    auto order = epoch_order(corpus.size(), options.shuffle && batch < corpus.size(), rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      std::vector<Sentence> xs;
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) xs.push_back(corpus[order[i]]);
      zero_grads(params);
      // Mean over the batch keeps the step size independent of batch size.
      Tensor objective = log_marginal_sum(model, xs) / static_cast<double>(xs.size());
      if (!std::isfinite(objective.item())) {
        fail(ErrorCode::numeric, "non-finite log marginal at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      objective.backward();
      opt.step(params);
    }
    trace.loglik.push_back(corpus_log_marginal(model, corpus));
    if (!std::isfinite(trace.loglik.back())) fail(ErrorCode::numeric, "non-finite log likelihood after epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch({epoch, trace.loglik.back()});
  }
  return trace;
}

}  // namespace latentkit
