#include "latentkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <sstream>

#include "latentkit/checkpoint.hpp"
#include "latentkit/em.hpp"
#include "latentkit/error.hpp"
#include "latentkit/estimators.hpp"
#include "latentkit/hmm.hpp"
#include "latentkit/vae.hpp"
#include "latentkit/wake_sleep.hpp"

namespace latentkit {

namespace {

WarningSink& info_sink() {
  static WarningSink sink;
  return sink;
}

// Keys that define the shape of a trained run; stored in checkpoint meta.
const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{"family",  "K",       "d",       "V",           "length",        "max_length",
                                             "embed",   "hidden",  "encoder", "encoder_embed", "encoder_hidden", "flow",
                                             "flow_depth", "iaf_hidden", "inference", "seed"};
  return keys;
}

// Seeded streams derived from the master seed.
enum Stream : std::uint64_t { kInitStream = 10, kTrainStream = 11, kSplitStream = 12, kEvalStream = 13, kSynthStream = 14 };

Rng stream(const Config& c, Stream s) { return Rng(static_cast<std::uint64_t>(c.integer("seed"))).split(s); }

OptimizerSettings optimizer_settings(const Config& c, double lr) {
  OptimizerSettings o;
  o.kind = c.text("optimizer") == "sgd" ? OptimizerKind::plain_gradient : OptimizerKind::adaptive_moment;
  o.learning_rate = lr;
  o.beta1 = c.real("adam_beta1");
  o.beta2 = c.real("adam_beta2");
  o.epsilon = c.real("adam_eps");
  return o;
}

SampleOptions sample_options(const Config& c) { return {c.size("length"), c.size("max_length")}; }

double mean_or_nan(double total, std::size_t n) {
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(n);
}

bool enumerable(const LatentModel& m) {
  return dynamic_cast<const DiscreteLatentModel*>(&m) || dynamic_cast<const HiddenMarkovModel*>(&m);
}

double mean_loglik(const LatentModel& m, const Corpus& corpus) {
  return mean_or_nan(corpus.empty() ? 0.0 : corpus_log_marginal(m, corpus), corpus.size());
}

struct Vocabulary {
  Vocab vocab;
  std::string path;
};

Vocabulary resolve_vocab(const Config& c) {
  std::string path = c.text("vocab");
  if (path.empty()) {
    if (c.text("corpus").empty()) fail(ErrorCode::config, "set 'corpus' (and optionally 'vocab')");
    path = join_path(parent_directory(c.text("corpus")), "vocab.txt");
  }
  return {load_vocab(path), path};
}

Corpus require_corpus(const Config& c, const Vocab& vocab) {
  if (c.text("corpus").empty()) fail(ErrorCode::config, "'corpus' is required for this command");
  Corpus corpus = load_corpus(c.text("corpus"), vocab);
  if (corpus.empty()) fail(ErrorCode::io, "corpus '" + c.text("corpus") + "' has no sentences");
  return corpus;
}

std::string prepare_output(const Config& c) {
  const std::string dir = output_directory(c);
  ensure_directory(dir);
  c.save(join_path(dir, "config.txt"));
  return dir;
}

void add_optional(MetricsRecord& r, const std::string& key, double v) {
  if (std::isfinite(v)) r.add(key, v);
}

ParameterList all_parameters(const LatentModel& model, const Encoder* encoder, const FlowStack* flow) {
  ParameterList p = model.parameters();
  if (encoder) {
    for (auto& e : encoder->parameters()) p.push_back(e);
  }
  if (flow) {
    for (auto& f : flow->parameters()) p.push_back(f);
  }
  return p;
}

void write_final(MetricsWriter& metrics, RunResult& result, const LatentModel& model, const Split& split) {
  MetricsRecord r("final");
  if (enumerable(model)) {
    const double tr = mean_loglik(model, split.train);
    result.summary["train_loglik"] = tr;
    r.add("train_loglik", tr);
    if (!split.heldout.empty()) {
      const double ho = mean_loglik(model, split.heldout);
      result.summary["heldout_loglik"] = ho;
      r.add("heldout_loglik", ho);
    }
  }
  r.add("train_sentences", split.train.size()).add("heldout_sentences", split.heldout.size());
  metrics.write(r);
}

// --- training methods -------------------------------------------------------

void train_em(const Config& c, NaiveBayes& model, const Split& split, MetricsWriter& metrics) {
  EmOptions o;
  o.max_iters = c.size("em_iters");
  o.tol = c.real("em_tol");
  o.patience = c.size("em_patience");
  o.early_stop = c.flag("em_early_stop");
  const double n = static_cast<double>(split.train.size());
  EmResult r = em_fit_from(model, split.train, o, [&](std::size_t iter, double ll) {
    metrics.write(MetricsRecord("iter").add("iter", iter).add("split", "train").add("loglik", ll / n));
  });
  model.set_probs(r.model.prior_probs(), r.model.emission_probs());
  metrics.write(MetricsRecord("em").add("iterations", r.iterations).add("converged", r.converged ? 1 : 0));
}

void train_direct(const Config& c, LatentModel& model, const Split& split, Rng& rng, MetricsWriter& metrics) {
  if (!enumerable(model)) fail(ErrorCode::unsupported_model, "direct-marginal needs an enumerable model; '" + model.family() + "' is not");
  DirectOptions o;
  o.epochs = c.size("epochs");
  o.batch_size = c.size("batch_size");
  o.optimizer = optimizer_settings(c, c.real("lr"));
  const double n = static_cast<double>(split.train.size());
  train_direct_marginal(model, split.train, o, rng, [&](const EpochCallbackArgs& a) {
    metrics.write(MetricsRecord("epoch").add("epoch", a.epoch).add("split", "train").add("loglik", a.loglik / n));
  });
}

VariationalParams initial_local(const LatentModel& model) {
  if (const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model)) {
    return VariationalParams::categorical(Tensor::zeros({d->num_states()}, true));
  }
  const auto& cm = dynamic_cast<const ContinuousLatentModel&>(model);
  return VariationalParams::normal(Tensor::zeros({cm.latent_dim()}, true), Tensor::zeros({cm.latent_dim()}, true));
}

// ELBO with q held fixed, differentiable in the model.
Tensor fixed_q_elbo(const LatentModel& model, const Sentence& x, const VariationalParams& q, std::size_t samples, Rng& rng) {
  if (const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model)) {
    return elbo_categorical(*d, x, q.logits.clone(false)).objective;
  }
  const auto& cm = dynamic_cast<const ContinuousLatentModel&>(model);
  DiagGaussian g{q.gaussian.mean.clone(false), q.gaussian.log_var.clone(false)};
  ElboOptions eo;
  eo.samples = samples;
  return elbo_gaussian(target_for(cm, x), g, rng.normals(samples * g.dim()), eo).objective;
}

// Per-sentence SVI for the local posteriors, then gradient steps on the model
// with those posteriors fixed. variational-em does a full E-step over the
// corpus before each M-step; svi interleaves both per minibatch.
void train_variational(const Config& c, LatentModel& model, const Split& split, Rng& rng, MetricsWriter& metrics,
                       bool full_batch) {
  if (!dynamic_cast<const DiscreteLatentModel*>(&model) && !dynamic_cast<const ContinuousLatentModel*>(&model)) {
    fail(ErrorCode::unsupported_model, "variational inference here needs a flat latent; model '" + model.family() + "' has none");
  }
  const Corpus& train = split.train;
  SviOptions svi;
  svi.steps = c.size("svi_steps");
  svi.learning_rate = c.real("svi_lr");
  svi.optimizer = c.text("svi_optimizer") == "adam" ? OptimizerKind::adaptive_moment : OptimizerKind::plain_gradient;
  svi.samples = std::max<std::size_t>(1, c.size("svi_samples"));
  const std::size_t samples = std::max<std::size_t>(1, c.size("samples"));
  std::vector<VariationalParams> local(train.size(), initial_local(model));
  Optimizer opt(optimizer_settings(c, c.real("lr")));
  ParameterList params = model.trainable_parameters();
  auto* nb = dynamic_cast<NaiveBayes*>(&model);
  Rng eval_base = stream(c, kEvalStream);

  auto e_step = [&](std::size_t n) { local[n] = svi_fit(model, train[n], local[n], svi, rng).q; };
  auto m_step = [&](std::span<const std::size_t> idx) {
    zero_grads(params);
    std::vector<Tensor> terms;
    for (std::size_t n : idx) terms.push_back(fixed_q_elbo(model, train[n], local[n], samples, rng));
    Tensor objective = sum(stack(terms)) / static_cast<double>(idx.size());
    if (!std::isfinite(objective.item())) fail(ErrorCode::numeric, "non-finite ELBO in the M-step");
    objective.backward();
    opt.step(params);
  };
  auto report = [&](std::size_t epoch) {
    Rng eval_rng = eval_base.split(epoch);
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t n = 0; n < train.size(); ++n) total += fixed_q_elbo(model, train[n], local[n], c.size("eval_samples") ? c.size("eval_samples") : 1, eval_rng).item();
    MetricsRecord r("epoch");
    r.add("epoch", epoch).add("split", "train").add("elbo", total / static_cast<double>(train.size()));
    if (enumerable(model)) r.add("loglik", mean_loglik(model, train));
    metrics.write(r);
  };

  report(0);
  std::vector<std::size_t> all(train.size());
  for (std::size_t n = 0; n < all.size(); ++n) all[n] = n;
  for (std::size_t epoch = 1; epoch <= c.size("epochs"); ++epoch) {
    if (full_batch) {
      for (std::size_t n = 0; n < train.size(); ++n) e_step(n);
      if (nb) {
        Responsibilities q(train.size(), nb->num_states());
        for (std::size_t n = 0; n < train.size(); ++n) {
          auto p = softmax(local[n].logits.values());
          for (std::size_t k = 0; k < p.size(); ++k) q.at(n, k) = p[k];
        }
        NaiveBayes next = nb_m_step(q, train, nb->vocab_size());
        nb->set_probs(next.prior_probs(), next.emission_probs());
      } else {
        for (std::size_t s = 0; s < std::max<std::size_t>(1, c.size("m_steps")); ++s) m_step(all);
      }
    } else {
      const std::size_t batch = c.size("batch_size") == 0 ? train.size() : c.size("batch_size");
      auto order = epoch_order(train.size(), true, rng);
      for (std::size_t start = 0; start < order.size(); start += batch) {
        std::span<const std::size_t> idx(order.data() + start, std::min(batch, order.size() - start));
        for (std::size_t n : idx) e_step(n);
        m_step(idx);
      }
    }
    report(epoch);
  }
}

VaeOptions vae_options(const Config& c) {
  VaeOptions o;
  o.epochs = c.size("epochs");
  o.batch_size = c.size("batch_size") == 0 ? std::numeric_limits<std::size_t>::max() : c.size("batch_size");
  o.optimizer = optimizer_settings(c, c.real("lr"));
  o.warmup_steps = c.size("warmup_steps");
  o.beta = c.real("beta");
  o.free_bits = c.real("free_bits");
  o.samples = c.size("samples");
  o.estimator = parse_estimator(c.text("estimator"));
  o.iwae_k = c.size("iwae_k");
  o.temperature = c.real("temperature");
  o.relaxed_kl = c.text("relaxed_kl") == "concrete" ? RelaxedKl::concrete : RelaxedKl::categorical;
  o.eval_samples = std::max<std::size_t>(1, c.size("eval_samples"));
  o.eval_is_k = c.size("eval_is_k");
  return o;
}

void write_vae_report(MetricsWriter& metrics, const VaeEpochReport& r) {
  MetricsRecord rec("epoch");
  rec.add("epoch", r.epoch).add("split", r.split).add("elbo", r.elbo).add("reconstruction", r.reconstruction).add("kl", r.kl);
  rec.add("kl_objective", r.kl_objective).add("beta", r.beta);
  add_optional(rec, "lp_is", r.lp_is);
  metrics.write(rec);
}

double encoder_lr(const Config& c) { return c.real("encoder_lr") > 0 ? c.real("encoder_lr") : c.real("lr"); }

// Sentences for eval and diagnose.
Corpus select_split(const Config& c, const Corpus& corpus) {
  const std::string which = c.text("eval_split");
  if (which == "all") return corpus;
  Split s = split_corpus(corpus, c.real("heldout_fraction"), static_cast<std::uint64_t>(c.integer("seed")));
  return which == "train" ? s.train : s.heldout;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    char* end = nullptr;
    const long long v = std::strtoll(item.c_str(), &end, 10);
    if (item.empty() || *end != '\0' || v <= 0) fail(ErrorCode::config, "eval_iwae_ks: bad entry '" + item + "'");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) fail(ErrorCode::config, "eval_iwae_ks is empty");
  return ks;
}

// Importance log-weights log p(x, z) - log q(z) for z drawn from q (through
// the flow when there is one).
std::vector<double> log_weights(const LatentModel& model, const VariationalParams& q, const FlowStack& flow, const Sentence& x,
                                std::size_t n, Rng& rng) {
  NoGradGuard no_grad;
  std::vector<double> lw(n);
  if (const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model)) {
    const auto joint = d->log_joint_all(x).to_vector();
    const auto lq = log_softmax(q.logits).to_vector();
    const auto p = softmax(q.logits.values());
    for (auto& w : lw) {
      const std::size_t k = sample_index(p, rng);
      w = joint[k] - lq[k];
    }
    return lw;
  }
  const ContinuousTarget target = target_for(dynamic_cast<const ContinuousLatentModel&>(model), x);
  const std::size_t dim = q.gaussian.dim();
  for (auto& w : lw) {
    Tensor z0 = gaussian_sample_reparam(q.gaussian, Tensor::from(q.gaussian.mean.shape(), rng.normals(dim)));
    FlowDensity dens = flow_log_density(flow, z0, q.gaussian);
    w = target.log_joint(dens.z).item() - dens.log_q.item();
  }
  return lw;
}

double bound_from(std::span<const double> lw) { return log_sum_exp(lw) - std::log(static_cast<double>(lw.size())); }

// q for eval when no encoder was trained: the exact posterior for discrete
// families, the prior for continuous ones.
VariationalParams fallback_q(const LatentModel& model, const Sentence& x) {
  NoGradGuard no_grad;
  if (const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model)) return VariationalParams::categorical(d->log_joint_all(x));
  const auto& cm = dynamic_cast<const ContinuousLatentModel&>(model);
  return VariationalParams::normal(cm.prior_mean().clone(false), Tensor::zeros({cm.latent_dim()}));
}

}  // namespace

// --- public ------------------------------------------------------------------

std::string output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return (env && *env) ? env : "runs";
}

std::string output_directory(const Config& config) {
  if (!config.text("output").empty()) return config.text("output");
  return join_path(output_root(), config.text("run_id"));
}

void set_info_sink(WarningSink sink) { info_sink() = std::move(sink); }

void info(const std::string& message) {
  if (info_sink()) {
    info_sink()(message);
  } else {
    std::cerr << message << '\n';
  }
}

bool is_discrete_family(const std::string& f) { return f == "nb" || f == "catbow" || f == "mixture-rnn"; }
bool is_continuous_family(const std::string& f) { return f == "gaussian-bow" || f == "gaussian-crnn"; }

namespace {

std::unique_ptr<LatentModel> build(const Config& c, std::size_t v, Rng& rng, double radius) {
  const std::string f = c.text("family");
  const std::size_t k = c.size("K"), d = c.size("d"), e = c.size("embed"), h = c.size("hidden");
  if (v < 3) fail(ErrorCode::config, "V must be at least 3 (two reserved tokens and one word)");
  if (k == 0 || d == 0 || e == 0 || h == 0) fail(ErrorCode::config, "K, d, embed and hidden must be positive");
  if (f == "nb") return std::make_unique<NaiveBayes>(NaiveBayes::random(k, v, rng));
  if (f == "catbow") return std::make_unique<CategoricalBow>(CategoricalBow::random(k, v, rng, radius));
  if (f == "hmm") return std::make_unique<HiddenMarkovModel>(HiddenMarkovModel::random_tabular(k, v, rng));
  if (f == "neural-hmm") return std::make_unique<HiddenMarkovModel>(HiddenMarkovModel::neural(k, v, e, h, &rng, radius));
  if (f == "mixture-rnn") return std::make_unique<MixtureRnn>(k, v, e, h, &rng, radius);
  if (f == "gaussian-bow") return std::make_unique<GaussianBow>(v, d, &rng, radius);
  return std::make_unique<GaussianCrnn>(v, e, h, d, &rng, radius);
}

}  // namespace

std::unique_ptr<LatentModel> make_model(const Config& config, std::size_t vocab_size, Rng& rng) {
  return build(config, vocab_size, rng, config.real("init_radius"));
}

std::unique_ptr<LatentModel> make_truth(const Config& config, Rng& rng) {
  return build(config, config.size("V"), rng, config.real("truth_radius"));
}

Encoder make_encoder(const Config& config, const LatentModel& model, Rng& rng) {
  EncoderSpec spec;
  spec.kind = config.text("encoder") == "bow" ? EncoderKind::bow : EncoderKind::rnn;
  spec.vocab_size = model.vocab_size();
  spec.embed = config.size("encoder_embed");
  spec.hidden = config.size("encoder_hidden");
  if (const auto* d = dynamic_cast<const DiscreteLatentModel*>(&model)) {
    spec.latent = LatentKind::categorical;
    spec.latent_size = d->num_states();
  } else if (const auto* cm = dynamic_cast<const ContinuousLatentModel*>(&model)) {
    spec.latent = LatentKind::gaussian;
    spec.latent_size = cm->latent_dim();
  } else {
    fail(ErrorCode::unsupported_model, "no encoder for model '" + model.family() + "'; amortized methods need a flat latent");
  }
  return Encoder::create(spec, &rng, config.real("init_radius"));
}

FlowStack make_flow(const Config& config, const LatentModel& model, Rng& rng) {
  const FlowKind kind = parse_flow_kind(config.text("flow"));
  if (kind == FlowKind::none) return {};
  const auto* cm = dynamic_cast<const ContinuousLatentModel*>(&model);
  if (!cm) fail(ErrorCode::config, "flow '" + config.text("flow") + "' needs a Gaussian latent; family '" + model.family() + "' has none");
  return FlowStack::create(kind, config.size("flow_depth"), cm->latent_dim(), &rng, config.real("init_radius"), config.size("iaf_hidden"));
}

Checkpoint make_checkpoint(const Config& config, const LatentModel& model, const Encoder* encoder, const FlowStack* flow) {
  Checkpoint cp;
  for (const auto& k : model_keys()) cp.meta.emplace_back(k, config.text(k));
  cp.meta.emplace_back("V_model", std::to_string(model.vocab_size()));
  cp.meta.emplace_back("has_encoder", encoder ? "true" : "false");
  cp.meta.emplace_back("has_flow", flow && !flow->empty() ? "true" : "false");
  cp.params = all_parameters(model, encoder, flow && !flow->empty() ? flow : nullptr);
  return cp;
}

TrainedRun load_trained(const std::string& checkpoint_path) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  TrainedRun run;
  for (const auto& k : model_keys()) {
    const std::string* v = cp.find_meta(k);
    if (!v) fail(ErrorCode::io, "checkpoint '" + checkpoint_path + "' lacks meta '" + k + "'");
    run.config.set(k, *v);
  }
  const std::string* vm = cp.find_meta("V_model");
  const std::string* he = cp.find_meta("has_encoder");
  const std::string* hf = cp.find_meta("has_flow");
  if (!vm || !he || !hf) fail(ErrorCode::io, "checkpoint '" + checkpoint_path + "' lacks run meta");
  Rng scratch(0);
  run.model = make_model(run.config, std::stoul(*vm), scratch);
  if (*he == "true") run.encoder = make_encoder(run.config, *run.model, scratch);
  if (*hf == "true") run.flow = make_flow(run.config, *run.model, scratch);
  assign_parameters(cp, all_parameters(*run.model, run.encoder ? &*run.encoder : nullptr, &run.flow));
  return run;
}

Split split_corpus(const Corpus& corpus, double heldout_fraction, std::uint64_t seed) {
  if (heldout_fraction < 0.0 || heldout_fraction >= 1.0) fail(ErrorCode::config, "heldout_fraction must be in [0, 1)");
  Rng rng = Rng(seed).split(kSplitStream);
  auto order = epoch_order(corpus.size(), true, rng);
  const auto held = static_cast<std::size_t>(std::floor(heldout_fraction * static_cast<double>(corpus.size())));
  std::vector<bool> is_held(corpus.size(), false);
  for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = true;
  Split s;
  for (std::size_t n = 0; n < corpus.size(); ++n) (is_held[n] ? s.heldout : s.train).push_back(corpus[n]);
  return s;
}

RunResult run_synth(const Config& config) {
  RunResult result;
  Rng rng = stream(config, kSynthStream);
  std::unique_ptr<LatentModel> truth;
  Config resolved = config;
  if (!config.text("truth").empty()) {
    TrainedRun t = load_trained(config.text("truth"));
    truth = std::move(t.model);
    resolved.set("family", truth->family());
    resolved.set("V", std::to_string(truth->vocab_size()));
  } else {
    truth = make_truth(config, rng);
  }
  result.output_dir = prepare_output(resolved);
  const std::string& dir = result.output_dir;
  const Vocab vocab = Vocab::synthetic(truth->vocab_size());
  const std::size_t n = config.size("N");
  if (n == 0) fail(ErrorCode::config, "N must be positive");
  const SampleOptions so = sample_options(config);
  Corpus corpus;
  std::vector<Draw> draws;
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Draw d = truth->sample(rng, so);
    truncated += d.truncated ? 1 : 0;
    corpus.push_back(d.x);
    draws.push_back(std::move(d));
  }
  const double rate = static_cast<double>(truncated) / static_cast<double>(n);
  if (rate > 0.1) {
    warn("WARNING: " + std::to_string(truncated) + " of " + std::to_string(n) + " sentences (" +
         std::to_string(100.0 * rate) + "%) hit the length cap max_length=" + std::to_string(so.max_length));
  }
  save_vocab(join_path(dir, "vocab.txt"), vocab);
  save_corpus(join_path(dir, "corpus.txt"), corpus, vocab);
  save_latents(join_path(dir, "latents.txt"), draws);
  save_checkpoint(join_path(dir, "truth.ckpt"), make_checkpoint(resolved, *truth, nullptr, nullptr));
  MetricsWriter metrics(join_path(dir, "metrics.txt"), config.text("run_id"));
  MetricsRecord r("synth");
  r.add("sentences", n).add("truncated", truncated).add("truncation_rate", rate);
  if (enumerable(*truth)) {
    const double ll = mean_loglik(*truth, corpus);
    r.add("truth_loglik", ll);
    result.summary["truth_loglik"] = ll;
  }
  metrics.write(r);
  result.summary["sentences"] = static_cast<double>(n);
  result.summary["truncation_rate"] = rate;
  info("synth: wrote " + std::to_string(n) + " sentences to " + dir);
  return result;
}

RunResult run_train(const Config& config) {
  Vocabulary voc = resolve_vocab(config);
  const Corpus corpus = require_corpus(config, voc.vocab);
  Config c = config;
  c.set("V", std::to_string(voc.vocab.size()));
  c.set("vocab", voc.path);
  RunResult result;
  result.output_dir = prepare_output(c);
  const std::string& dir = result.output_dir;
  const Split split = split_corpus(corpus, c.real("heldout_fraction"), static_cast<std::uint64_t>(c.integer("seed")));
  if (split.train.empty()) fail(ErrorCode::config, "training split is empty");

  const std::string method = c.text("inference");
  Rng init_rng = stream(c, kInitStream);
  Rng rng = stream(c, kTrainStream);
  std::unique_ptr<LatentModel> model;
  if (c.text("family") == "nb") {
    model = std::make_unique<NaiveBayes>(nb_random_init(split.train, c.size("K"), voc.vocab.size(), init_rng));
  } else {
    model = make_model(c, voc.vocab.size(), init_rng);
  }
  if (method == "em" && c.text("family") != "nb") {
    fail(ErrorCode::config, "inference=em has a closed-form M-step for family nb only; use direct-marginal or variational-em");
  }
  std::optional<Encoder> encoder;
  FlowStack flow;
  if (method == "vae" || method == "wake-sleep") {
    encoder = make_encoder(c, *model, init_rng);
    flow = make_flow(c, *model, init_rng);
    if (method == "wake-sleep" && !flow.empty()) fail(ErrorCode::config, "wake-sleep does not use flows; set flow = none");
  } else if (c.text("flow") != "none") {
    fail(ErrorCode::config, "flows apply to inference=vae only");
  }
  if (!c.text("resume").empty()) {
    Checkpoint cp = load_checkpoint(c.text("resume"));
    assign_parameters(cp, all_parameters(*model, encoder ? &*encoder : nullptr, &flow));
    info("train: resumed from " + c.text("resume"));
  }

  MetricsWriter metrics(join_path(dir, "metrics.txt"), c.text("run_id"));
  info("train: " + method + " on " + std::to_string(split.train.size()) + " sentences, family " + model->family());
  if (method == "em") {
    train_em(c, dynamic_cast<NaiveBayes&>(*model), split, metrics);
  } else if (method == "direct-marginal") {
    train_direct(c, *model, split, rng, metrics);
  } else if (method == "variational-em" || method == "svi") {
    train_variational(c, *model, split, rng, metrics, method == "variational-em");
  } else if (method == "vae") {
    VaeOptions o = vae_options(c);
    VaeResult r = train_vae(*model, *encoder, &flow, split.train, split.heldout, o, rng,
                            [&](const VaeEpochReport& rep) { write_vae_report(metrics, rep); });
    for (const auto& rep : r.reports) {
      result.summary[rep.split + "_elbo"] = rep.elbo;
      result.summary[rep.split + "_kl"] = rep.kl;
      result.summary[rep.split + "_kl_objective"] = rep.kl_objective;
      if (std::isfinite(rep.lp_is)) result.summary[rep.split + "_lp_is"] = rep.lp_is;
    }
  } else {
    WakeSleepOptions o;
    o.epochs = c.size("epochs");
    o.batch_size = c.size("batch_size") == 0 ? split.train.size() : c.size("batch_size");
    o.model_optimizer = optimizer_settings(c, c.real("lr"));
    o.encoder_optimizer = optimizer_settings(c, encoder_lr(c));
    o.wake_per_sleep = c.size("wake_per_sleep");
    o.sample = sample_options(c);
    auto reports = wake_sleep_train(*model, *encoder, split.train, o, rng, [&](const WakeSleepReport& r) {
      MetricsRecord rec("epoch");
      rec.add("epoch", r.epoch).add("split", "train").add("loglik", r.loglik);
      add_optional(rec, "mean_tv", r.mean_tv);
      rec.add("discarded", r.discarded);
      metrics.write(rec);
    });
    result.summary["initial_loglik"] = reports.front().loglik;
    result.summary["final_mean_tv"] = reports.back().mean_tv;
  }
  write_final(metrics, result, *model, split);
  save_checkpoint(join_path(dir, "model.ckpt"), make_checkpoint(c, *model, encoder ? &*encoder : nullptr, &flow));
  info("train: wrote " + dir);
  return result;
}

RunResult run_eval(const Config& config) {
  if (config.text("checkpoint").empty()) fail(ErrorCode::config, "eval needs 'checkpoint'");
  TrainedRun run = load_trained(config.text("checkpoint"));
  Vocabulary voc = resolve_vocab(config);
  const Corpus data = select_split(config, require_corpus(config, voc.vocab));
  RunResult result;
  result.output_dir = prepare_output(config);
  MetricsWriter metrics(join_path(result.output_dir, "metrics.txt"), config.text("run_id"));
  Rng rng = stream(config, kEvalStream);
  const auto ks = parse_ks(config.text("eval_iwae_ks"));
  const std::size_t is_k = config.size("is_k");
  const bool exact = enumerable(*run.model);
  const bool flat = dynamic_cast<const HiddenMarkovModel*>(run.model.get()) == nullptr;
  const std::size_t eval_samples = std::max<std::size_t>(1, config.size("eval_samples"));

  std::map<std::string, double> totals;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sentence& x = data[i];
    MetricsRecord r("sentence");
    r.add("index", i);
    if (exact) {
      const double lp = log_marginal(*run.model, x).item();
      r.add("log_marginal", lp);
      totals["log_marginal"] += lp;
    }
    if (flat) {
      NoGradGuard no_grad;
      VariationalParams q = run.encoder ? (*run.encoder)(x) : fallback_q(*run.model, x);
      double elbo = 0.0;
      if (const auto* d = dynamic_cast<const DiscreteLatentModel*>(run.model.get())) {
        elbo = elbo_categorical(*d, x, q.logits).objective.item();
      } else {
        const ContinuousTarget target = target_for(dynamic_cast<const ContinuousLatentModel&>(*run.model), x);
        for (std::size_t s = 0; s < eval_samples; ++s) {
          elbo += flow_elbo(target, q.gaussian, run.flow, rng.normals(q.gaussian.dim())).objective.item() / static_cast<double>(eval_samples);
        }
      }
      r.add("elbo", elbo);
      totals["elbo"] += elbo;
      for (std::size_t k : ks) {
        const double b = bound_from(log_weights(*run.model, q, run.flow, x, k, rng));
        r.add("iwae_" + std::to_string(k), b);
        totals["iwae_" + std::to_string(k)] += b;
      }
      if (is_k > 0) {
        const double lp = bound_from(log_weights(*run.model, q, run.flow, x, is_k, rng));
        r.add("lp_is", lp);
        totals["lp_is"] += lp;
      }
    }
    metrics.write(r);
  }
  MetricsRecord s("summary");
  s.add("sentences", data.size());
  for (const auto& [k, v] : totals) {
    const double m = mean_or_nan(v, data.size());
    s.add(k, m);
    result.summary[k] = m;
  }
  metrics.write(s);
  return result;
}

RunResult run_sample(const Config& config) {
  if (config.text("checkpoint").empty()) fail(ErrorCode::config, "sample needs 'checkpoint'");
  TrainedRun run = load_trained(config.text("checkpoint"));
  const Vocab vocab = config.text("vocab").empty() ? Vocab::synthetic(run.model->vocab_size()) : load_vocab(config.text("vocab"));
  if (vocab.size() != run.model->vocab_size()) fail(ErrorCode::config, "vocab size does not match the checkpoint");
  RunResult result;
  result.output_dir = prepare_output(config);
  Rng rng = stream(config, kSynthStream);
  Corpus corpus;
  std::vector<Draw> draws;
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < config.size("num_samples"); ++i) {
    Draw d = run.model->sample(rng, sample_options(config));
    truncated += d.truncated ? 1 : 0;
    corpus.push_back(d.x);
    draws.push_back(std::move(d));
  }
  save_corpus(join_path(result.output_dir, "samples.txt"), corpus, vocab);
  save_latents(join_path(result.output_dir, "latents.txt"), draws);
  MetricsWriter metrics(join_path(result.output_dir, "metrics.txt"), config.text("run_id"));
  metrics.write(MetricsRecord("sample").add("samples", corpus.size()).add("truncated", truncated));
  result.summary["samples"] = static_cast<double>(corpus.size());
  return result;
}

RunResult run_diagnose(const Config& config) {
  if (config.text("checkpoint").empty()) fail(ErrorCode::config, "diagnose needs 'checkpoint'");
  TrainedRun run = load_trained(config.text("checkpoint"));
  if (!run.encoder) fail(ErrorCode::config, "diagnose needs a checkpoint with an encoder (inference = vae or wake-sleep)");
  Vocabulary voc = resolve_vocab(config);
  Corpus data = select_split(config, require_corpus(config, voc.vocab));
  if (config.size("gap_sentences") > 0 && data.size() > config.size("gap_sentences")) data.resize(config.size("gap_sentences"));
  RunResult result;
  result.output_dir = prepare_output(config);
  MetricsWriter metrics(join_path(result.output_dir, "metrics.txt"), config.text("run_id"));
  Rng rng = stream(config, kEvalStream);
  GapOptions o;
  o.refine.steps = config.size("gap_steps");
  o.refine.learning_rate = config.real("gap_lr");
  o.refine.optimizer = OptimizerKind::plain_gradient;
  o.eval_samples = std::max<std::size_t>(1, config.size("gap_eval_samples"));
  o.is_k = std::max<std::size_t>(1, config.size("gap_is_k"));
  const std::size_t r_steps = config.size("gap_residual_r");

  std::map<std::string, double> totals;
  std::size_t monotone = 0, exact_reports = 0, identity = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    GapReport g = inference_gap_report(*run.model, *run.encoder, data[i], o, rng);
    MetricsRecord r("sentence");
    r.add("index", i).add("log_marginal", g.log_marginal).add("elbo_amortized", g.elbo_amortized).add("elbo_refined", g.elbo_refined);
    r.add("inference_gap", g.inference_gap).add("approximation_gap", g.approximation_gap).add("amortization_gap", g.amortization_gap);
    r.add("exact", g.exact ? 1 : 0).add("diverged", g.diverged ? 1 : 0);
    identity += g.inference_gap == g.approximation_gap + g.amortization_gap ? 1 : 0;
    totals["inference_gap"] += g.inference_gap;
    totals["approximation_gap"] += g.approximation_gap;
    totals["amortization_gap"] += g.amortization_gap;
    if (g.exact) {
      const double r0 = residual_amortization_gap(g, 0);
      const double rr = residual_amortization_gap(g, r_steps);
      r.add("residual_0", r0).add("residual_" + std::to_string(r_steps), rr);
      ++exact_reports;
      monotone += rr <= r0 ? 1 : 0;
    }
    metrics.write(r);
  }
  MetricsRecord s("summary");
  s.add("sentences", data.size());
  for (const auto& [k, v] : totals) {
    const double m = mean_or_nan(v, data.size());
    s.add("mean_" + k, m);
    result.summary["mean_" + k] = m;
  }
  const double id_frac = data.empty() ? 1.0 : static_cast<double>(identity) / static_cast<double>(data.size());
  s.add("frac_identity", id_frac);
  result.summary["frac_identity"] = id_frac;
  if (exact_reports > 0) {
    const double frac = static_cast<double>(monotone) / static_cast<double>(exact_reports);
    s.add("frac_refinement_monotone", frac);
    result.summary["frac_refinement_monotone"] = frac;
  }
  metrics.write(s);
  return result;
}

RunResult run_command(const std::string& command, const Config& config) {
  if (command == "synth") return run_synth(config);
  if (command == "train") return run_train(config);
  if (command == "eval") return run_eval(config);
  if (command == "sample") return run_sample(config);
  if (command == "diagnose") return run_diagnose(config);
  if (command == "recipe") return run_recipe(config);
  fail(ErrorCode::config, "unknown command '" + command + "' (expected synth, train, eval, sample, diagnose or recipe)");
}

}  // namespace latentkit
