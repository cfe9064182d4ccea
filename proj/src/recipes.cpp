#include <cmath>

#include "latentkit/error.hpp"
#include "latentkit/estimators.hpp"
#include "latentkit/harness.hpp"

namespace latentkit {

namespace {

struct Preset {
  const char* name;
  const char* text;
};

const Preset kPresets[] = {
    {"table1-sweep", R"(# Every training method on one synthetic naive Bayes corpus.
recipe = table1-sweep
run_id = table1-sweep
seed = 7
family = nb
K = 3
V = 30
length = 10
N = 5000
heldout_fraction = 0.1
encoder = bow
encoder_embed = 3
em.em_iters = 100
em.em_tol = 1e-9
direct-marginal.batch_size = 0
direct-marginal.optimizer = adam
direct-marginal.lr = 0.05
direct-marginal.epochs = 400
variational-em.epochs = 40
variational-em.svi_steps = 20
variational-em.svi_lr = 0.5
svi.epochs = 10
svi.batch_size = 100
svi.lr = 0.05
svi.svi_steps = 20
svi.svi_lr = 0.5
vae.estimator = exact
vae.epochs = 20
vae.batch_size = 50
vae.lr = 0.02
vae.eval_is_k = 0
wake-sleep.epochs = 20
wake-sleep.batch_size = 50
wake-sleep.lr = 0.02
)"},
    {"collapse-demo", R"(# Gaussian-latent VAE with a conditional RNN decoder, trained without and
# with countermeasures (KL warm-up and free bits).
recipe = collapse-demo
run_id = collapse-demo
seed = 3
family = gaussian-crnn
V = 30
d = 8
embed = 16
hidden = 32
max_length = 15
N = 1000
truth_radius = 1.0
inference = vae
estimator = reparam
encoder = rnn
epochs = 10
batch_size = 20
lr = 0.005
eval_is_k = 0
countermeasure.free_bits = 2.0
countermeasure.warmup_steps = 200
)"},
    {"gap-study", R"(# Inference gap split into approximation and amortization parts, before
# and after per-sentence SVI refinement of a briefly trained encoder.
recipe = gap-study
run_id = gap-study
seed = 11
family = nb
K = 4
V = 50
length = 10
N = 2000
inference = vae
estimator = exact
encoder = bow
encoder_embed = 4
epochs = 2
batch_size = 50
lr = 0.01
eval_is_k = 0
eval_split = heldout
gap_sentences = 100
gap_steps = 200
gap_lr = 0.05
gap_residual_r = 20
)"},
    {"estimator-bench", R"(# Score-function versus reparameterized ELBO gradients on the 1-D
# Gaussian toy: means, variances and the closed form.
recipe = estimator-bench
run_id = estimator-bench
seed = 5
bench_samples = 100000
bench_reps = 10
)"},
};

Config stage(const Config& base, const std::string& name, const std::string& dir) {
  Config c = base.for_stage(name);
  c.set("run_id", name);
  c.set("output", join_path(dir, name));
  c.set("recipe", "");
  return c;
}

std::string synth_stage(const Config& base, const std::string& dir) {
  Config c = stage(base, "data", dir);
  run_synth(c);
  return join_path(c.text("output"), "corpus.txt");
}

RunResult table1_sweep(const Config& config, const std::string& dir) {
  const std::string corpus = synth_stage(config, dir);
  RunResult result;
  result.output_dir = dir;
  MetricsWriter metrics(join_path(dir, "metrics.txt"), config.text("run_id"));
  for (const char* method : {"em", "direct-marginal", "variational-em", "svi", "vae", "wake-sleep"}) {
    Config c = stage(config, method, dir);
    c.set("corpus", corpus);
    c.set("inference", method);
    RunResult r = run_train(c);
    MetricsRecord rec("method");
    rec.add("method", method);
    for (const char* key : {"train_loglik", "heldout_loglik"}) {
      auto it = r.summary.find(key);
      if (it == r.summary.end()) continue;
      rec.add(key, it->second);
      result.summary[std::string(method) + "_" + key] = it->second;
    }
    metrics.write(rec);
  }
  const double gap = std::abs(result.summary.at("em_train_loglik") - result.summary.at("direct-marginal_train_loglik"));
  result.summary["em_direct_abs_diff"] = gap;
  metrics.write(MetricsRecord("comparison").add("em_direct_abs_diff", gap));
  return result;
}

RunResult collapse_demo(const Config& config, const std::string& dir) {
  const std::string corpus = synth_stage(config, dir);
  RunResult result;
  result.output_dir = dir;
  MetricsWriter metrics(join_path(dir, "metrics.txt"), config.text("run_id"));
  for (const char* name : {"plain", "countermeasure"}) {
    Config c = stage(config, name, dir);
    c.set("corpus", corpus);
    RunResult r = run_train(c);
    const double kl = r.summary.at("train_kl");
    const double kl_obj = r.summary.at("train_kl_objective");
    metrics.write(MetricsRecord("run")
                      .add("name", name)
                      .add("free_bits", c.real("free_bits"))
                      .add("warmup_steps", c.size("warmup_steps"))
                      .add("final_kl", kl)
                      .add("final_kl_objective", kl_obj)
                      .add("final_elbo", r.summary.at("train_elbo")));
    result.summary[std::string(name) + "_kl"] = kl;
    result.summary[std::string(name) + "_kl_objective"] = kl_obj;
    result.summary[std::string(name) + "_free_bits"] = c.real("free_bits");
  }
  return result;
}

RunResult gap_study(const Config& config, const std::string& dir) {
  const std::string corpus = synth_stage(config, dir);
  Config train = stage(config, "train", dir);
  train.set("corpus", corpus);
  run_train(train);
  Config diag = stage(config, "diagnose", dir);
  diag.set("corpus", corpus);
  diag.set("checkpoint", join_path(train.text("output"), "model.ckpt"));
  RunResult r = run_diagnose(diag);
  RunResult result;
  result.output_dir = dir;
  result.summary = r.summary;
  MetricsWriter metrics(join_path(dir, "metrics.txt"), config.text("run_id"));
  MetricsRecord rec("gaps");
  for (const auto& [k, v] : r.summary) rec.add(k, v);
  metrics.write(rec);
  return result;
}

RunResult estimator_bench(const Config& config, const std::string& dir) {
  RunResult result;
  result.output_dir = dir;
  MetricsWriter metrics(join_path(dir, "metrics.txt"), config.text("run_id"));
  const GaussianToy toy;
  const ContinuousTarget target = toy.target();
  const double mean = 0.3, log_var = -0.5;
  const auto closed = toy.elbo_gradient(mean, log_var);
  const std::size_t n = config.size("bench_samples");
  const std::size_t reps = config.size("bench_reps");
  if (n < 2 || reps == 0) fail(ErrorCode::config, "estimator-bench needs bench_samples >= 2 and bench_reps >= 1");
  const Rng base(static_cast<std::uint64_t>(config.integer("seed")));
  std::size_t lower = 0;
  double worst_z_closed = 0.0, worst_z_pair = 0.0;
  const char* names[] = {"q.mean", "q.log_var"};
  for (std::size_t rep = 0; rep < reps; ++rep) {
    VariationalParams q = VariationalParams::normal(Tensor::vector({mean}, true), Tensor::vector({log_var}, true));
    const ParameterList targets = q.tensors();
    Rng score_rng = base.split(2 * rep + 100);
    Rng reparam_rng = base.split(2 * rep + 101);
    GradEstimate score = score_function_grad(target, q.gaussian, targets, n, score_rng);
    GradEstimate reparam = reparam_grad(target, q.gaussian, targets, n, reparam_rng);
    bool all_lower = true;
    for (std::size_t i = 0; i < 2; ++i) {
      const GradEntry& s = score.at(names[i]);
      const GradEntry& r = reparam.at(names[i]);
      const double se_s = std::sqrt(s.variance[0] / static_cast<double>(n));
      const double se_r = std::sqrt(r.variance[0] / static_cast<double>(n));
      const double z_pair = (s.mean[0] - r.mean[0]) / std::sqrt(se_s * se_s + se_r * se_r);
      const double z_s = (s.mean[0] - closed[i]) / se_s;
      const double z_r = (r.mean[0] - closed[i]) / se_r;
      worst_z_pair = std::max(worst_z_pair, std::abs(z_pair));
      worst_z_closed = std::max({worst_z_closed, std::abs(z_s), std::abs(z_r)});
      all_lower = all_lower && r.variance[0] < s.variance[0];
      metrics.write(MetricsRecord("estimate")
                        .add("rep", rep)
                        .add("param", names[i])
                        .add("closed_form", closed[i])
                        .add("score_mean", s.mean[0])
                        .add("score_variance", s.variance[0])
                        .add("reparam_mean", r.mean[0])
                        .add("reparam_variance", r.variance[0])
                        .add("z_pair", z_pair));
    }
    lower += all_lower ? 1 : 0;
  }
  result.summary["reparam_lower_variance_reps"] = static_cast<double>(lower);
  result.summary["reps"] = static_cast<double>(reps);
  result.summary["max_abs_z_pair"] = worst_z_pair;
  result.summary["max_abs_z_closed"] = worst_z_closed;
  MetricsRecord s("summary");
  for (const auto& [k, v] : result.summary) s.add(k, v);
  metrics.write(s);
  return result;
}

}  // namespace

std::vector<std::string> recipe_names() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.name);
  return out;
}

std::string recipe_text(const std::string& name) {
  for (const auto& p : kPresets) {
    if (name == p.name) return p.text;
  }
  fail(ErrorCode::config, "unknown recipe '" + name + "'");
}

RunResult run_recipe(const Config& config) {
  const std::string name = config.text("recipe");
  if (name.empty()) fail(ErrorCode::config, "set 'recipe' to one of table1-sweep, collapse-demo, gap-study, estimator-bench");
  const std::string dir = output_directory(config);
  ensure_directory(dir);
  config.save(join_path(dir, "config.txt"));
  info("recipe " + name + ": writing to " + dir);
  if (name == "table1-sweep") return table1_sweep(config, dir);
  if (name == "collapse-demo") return collapse_demo(config, dir);
  if (name == "gap-study") return gap_study(config, dir);
  if (name == "estimator-bench") return estimator_bench(config, dir);
  fail(ErrorCode::config, "unknown recipe '" + name + "'");
}

}  // namespace latentkit
