#include "latentkit/hmm.hpp"

#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

std::vector<double> logs_of(const std::vector<std::vector<double>>& rows, std::size_t width, const char* what) {
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      fail(ErrorCode::shape_mismatch, std::string(what) + " row " + std::to_string(r) + " has " +
                                          std::to_string(rows[r].size()) + " entries, expected " + std::to_string(width));
    }
    double total = 0.0;
    for (double p : rows[r]) {
      if (!(p >= 0.0)) fail(ErrorCode::invalid_argument, std::string(what) + " row " + std::to_string(r) + " has a negative entry");
      total += p;
      out.push_back(safe_log(p));
    }
    if (std::abs(total - 1.0) > 1e-9) {
      fail(ErrorCode::invalid_argument, std::string(what) + " row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
  }
  return out;
}

// Column x of log_emit as a [K] vector.
Tensor emission_column(const HmmRows& rows, TokenId x) {
  const std::size_t k = rows.num_states();
  const std::size_t v = rows.vocab_size();
  std::vector<std::size_t> idx(k);
  for (std::size_t j = 0; j < k; ++j) idx[j] = j * v + x;
  return take(rows.log_emit, idx);
}

void check_rows(const HmmRows& rows) {
  const std::size_t k = rows.num_states();
  if (rows.log_trans.rank() != 2 || rows.log_trans.dim(0) != k + 1 || rows.log_trans.dim(1) != k) {
    fail(ErrorCode::shape_mismatch, "HMM transition table has shape " + shape_string(rows.log_trans.shape()) + " for K=" + std::to_string(k));
  }
}

}  // namespace

HiddenMarkovModel HiddenMarkovModel::tabular(std::size_t k, std::size_t v) {
  if (k == 0 || v == 0) fail(ErrorCode::invalid_argument, "HMM needs K >= 1 and V >= 1");
  HiddenMarkovModel m;
  m.rep_ = Representation::tabular;
  m.k_ = k;
  m.v_ = v;
  m.trans_logits_ = Tensor::zeros({k + 1, k}, true);
  m.emit_logits_ = Tensor::zeros({k, v}, true);
  return m;
}

HiddenMarkovModel HiddenMarkovModel::from_probs(std::span<const double> start,
                                                const std::vector<std::vector<double>>& trans,
                                                const std::vector<std::vector<double>>& emit) {
  const std::size_t k = start.size();
  if (k == 0 || trans.size() != k || emit.size() != k) {
    fail(ErrorCode::shape_mismatch, "HMM tables need K start entries, K transition rows and K emission rows");
  }
  std::vector<std::vector<double>> all_trans;
  all_trans.emplace_back(start.begin(), start.end());
  all_trans.insert(all_trans.end(), trans.begin(), trans.end());
  HiddenMarkovModel m = tabular(k, emit.front().size());
  auto t = logs_of(all_trans, k, "transition");
  auto e = logs_of(emit, m.v_, "emission");
  std::copy(t.begin(), t.end(), m.trans_logits_.mutable_values().begin());
  std::copy(e.begin(), e.end(), m.emit_logits_.mutable_values().begin());
  return m;
}

HiddenMarkovModel HiddenMarkovModel::random_tabular(std::size_t k, std::size_t v, Rng& rng) {
  std::vector<double> start = rng.dirichlet_ones(k);
  std::vector<std::vector<double>> trans(k), emit(k);
  for (auto& r : trans) r = rng.dirichlet_ones(k);
  for (auto& r : emit) r = rng.dirichlet_ones(v);
  return from_probs(start, trans, emit);
}

HiddenMarkovModel HiddenMarkovModel::neural(std::size_t k, std::size_t v, std::size_t embed, std::size_t hidden, Rng* rng,
                                            double radius) {
  if (k == 0 || v == 0 || embed == 0 || hidden == 0) fail(ErrorCode::invalid_argument, "neural HMM sizes must be positive");
  HiddenMarkovModel m;
  m.rep_ = Representation::neural;
  m.k_ = k;
  m.v_ = v;
  m.state_embedding_ = Tensor::zeros({k + 1, embed}, true);
  if (rng) init_uniform(m.state_embedding_, *rng, radius);
  m.trans_mlp_ = Mlp::create(embed, hidden, k, rng, radius);
  m.emit_mlp_ = Mlp::create(embed, hidden, v, rng, radius);
  return m;
}

ParameterList HiddenMarkovModel::parameters() const {
  if (rep_ == Representation::tabular) return {{"trans_logits", trans_logits_}, {"emit_logits", emit_logits_}};
  ParameterList out{{"state_embedding", state_embedding_}};
  trans_mlp_.collect("trans_mlp", out);
  emit_mlp_.collect("emit_mlp", out);
  return out;
}

HmmRows HiddenMarkovModel::realize() const {
  if (rep_ == Representation::tabular) return {log_softmax(trans_logits_), log_softmax(emit_logits_)};
  const std::size_t e = state_embedding_.dim(1);
  Tensor states = reshape(slice(state_embedding_, e, k_ * e), {k_, e});
  return {log_softmax(trans_mlp_(state_embedding_)), log_softmax(emit_mlp_(states))};
}

HmmRows neural_hmm_realize(const HiddenMarkovModel& model) {
  if (model.representation() != HiddenMarkovModel::Representation::neural) {
    fail(ErrorCode::unsupported_model, "neural_hmm_realize on a tabular HMM");
  }
  return model.realize();
}

Draw HiddenMarkovModel::sample(Rng& rng, const SampleOptions& options) const {
  NoGradGuard no_grad;
  if (options.length == 0) fail(ErrorCode::invalid_argument, "sample length must be positive");
  HmmRows rows = realize();
  auto trans = rows.log_trans.values();
  auto emit = rows.log_emit.values();
  auto draw = [&rng](std::span<const double> logs) {
    std::vector<double> p(logs.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logs[i]);
    return sample_index(p, rng);
  };
  Draw d;
  std::size_t prev_row = 0;
  for (std::size_t t = 0; t < options.length; ++t) {
    const std::size_t z = draw(trans.subspan(prev_row * k_, k_));
    d.states.push_back(z);
    d.x.push_back(draw(emit.subspan(z * v_, v_)));
    prev_row = z + 1;
  }
  return d;
}

std::unique_ptr<LatentModel> HiddenMarkovModel::clone() const {
  auto c = std::unique_ptr<HiddenMarkovModel>(new HiddenMarkovModel(*this));
  if (rep_ == Representation::tabular) {
    c->trans_logits_ = trans_logits_.clone(true);
    c->emit_logits_ = emit_logits_.clone(true);
  } else {
    c->state_embedding_ = state_embedding_.clone(true);
    c->trans_mlp_ = trans_mlp_.clone();
    c->emit_mlp_ = emit_mlp_.clone();
  }
  return c;
}

Tensor hmm_log_joint(const HmmRows& rows, const Sentence& x, std::span<const std::size_t> z) {
  check_rows(rows);
  const std::size_t k = rows.num_states();
  const std::size_t v = rows.vocab_size();
  check_sentence(x, v, "sentence");
  if (x.empty()) fail(ErrorCode::invalid_argument, "empty sentence");
  if (z.size() != x.size()) {
    fail(ErrorCode::shape_mismatch, "state path has length " + std::to_string(z.size()) + " but the sentence has " + std::to_string(x.size()));
  }
  std::vector<std::size_t> trans_idx, emit_idx;
  std::size_t prev_row = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (z[t] >= k) fail(ErrorCode::out_of_range, "state " + std::to_string(z[t]) + " at position " + std::to_string(t) + " out of range");
    trans_idx.push_back(prev_row * k + z[t]);
    emit_idx.push_back(z[t] * v + x[t]);
    prev_row = z[t] + 1;
  }
  return sum(take(rows.log_trans, trans_idx)) + sum(take(rows.log_emit, emit_idx));
}

double hmm_log_joint(const HiddenMarkovModel& model, const Sentence& x, std::span<const std::size_t> z) {
  NoGradGuard no_grad;
  return hmm_log_joint(model.realize(), x, z).item();
}

Tensor hmm_forward(const HmmRows& rows, const Sentence& x) {
  check_rows(rows);
  const std::size_t k = rows.num_states();
  check_sentence(x, rows.vocab_size(), "sentence");
  if (x.empty()) fail(ErrorCode::invalid_argument, "empty sentence");
  Tensor alpha = row(rows.log_trans, 0) + emission_column(rows, x[0]);
  if (x.size() == 1) return log_sum_exp(alpha);
  // body[j, k] = log mu_{j, k}; scores[k, j] = alpha_j + log mu_{j, k}.
  Tensor body_t = transpose(reshape(slice(rows.log_trans, k, k * k), {k, k}));
  for (std::size_t t = 1; t < x.size(); ++t) {
    alpha = log_sum_exp(body_t + reshape(alpha, {1, k})) + emission_column(rows, x[t]);
  }
  return log_sum_exp(alpha);
}

double hmm_forward(const HiddenMarkovModel& model, const Sentence& x) {
  NoGradGuard no_grad;
  return hmm_forward(model.realize(), x).item();
}

}  // namespace latentkit
