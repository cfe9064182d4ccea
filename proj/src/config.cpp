#include "latentkit/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

ConfigKey integer_key(std::string name, std::string def, std::string help) {
  return {std::move(name), ValueType::integer, std::move(def), {}, std::move(help)};
}
ConfigKey real_key(std::string name, std::string def, std::string help) {
  return {std::move(name), ValueType::real, std::move(def), {}, std::move(help)};
}
ConfigKey text_key(std::string name, std::string def, std::string help) {
  return {std::move(name), ValueType::text, std::move(def), {}, std::move(help)};
}
ConfigKey flag_key(std::string name, std::string def, std::string help) {
  return {std::move(name), ValueType::boolean, std::move(def), {}, std::move(help)};
}
ConfigKey choice_key(std::string name, std::vector<std::string> choices, std::string help) {
  std::string def = choices.front();
  return {std::move(name), ValueType::choice, std::move(def), std::move(choices), std::move(help)};
}

std::vector<ConfigKey> build_keys() {
  return {
      // run
      text_key("recipe", "", "preset name (recipe runs only)"),
      text_key("run_id", "run", "run name; also the output subdirectory"),
      text_key("output", "", "output directory; default <output root>/<run_id>"),
      integer_key("seed", "1", "master seed"),
      text_key("corpus", "", "corpus file"),
      text_key("vocab", "", "vocab file; default vocab.txt next to the corpus"),
      text_key("checkpoint", "", "model checkpoint for eval, sample and diagnose"),
      text_key("resume", "", "train: start from this checkpoint"),
      text_key("truth", "", "synth: ground-truth checkpoint; default a random model"),
      // model
      choice_key("family", {"nb", "catbow", "hmm", "neural-hmm", "mixture-rnn", "gaussian-bow", "gaussian-crnn"}, "model family"),
      integer_key("K", "4", "latent states"),
      integer_key("d", "16", "continuous latent dimension"),
      integer_key("V", "50", "vocabulary size including <s> and </s> (synth)"),
      integer_key("length", "10", "sentence length for bag-of-words and HMM families"),
      integer_key("max_length", "20", "length cap for RNN families"),
      integer_key("embed", "16", "model embedding width"),
      integer_key("hidden", "16", "model hidden width"),
      real_key("init_radius", "0.1", "uniform init radius for network weights"),
      real_key("truth_radius", "1.0", "synth: init radius for random ground-truth networks"),
      integer_key("N", "5000", "synth: number of sentences"),
      real_key("heldout_fraction", "0.1", "train: fraction held out (seeded split)"),
      // inference
      choice_key("inference", {"em", "direct-marginal", "variational-em", "svi", "vae", "wake-sleep"}, "training method"),
      integer_key("epochs", "20", "training epochs"),
      integer_key("batch_size", "32", "minibatch size; 0 means full batch"),
      choice_key("optimizer", {"adam", "sgd"}, "optimizer for model and encoder"),
      real_key("lr", "0.001", "learning rate"),
      real_key("adam_beta1", "0.9", "adam first-moment decay"),
      real_key("adam_beta2", "0.999", "adam second-moment decay"),
      real_key("adam_eps", "1e-8", "adam epsilon"),
      real_key("encoder_lr", "0", "wake-sleep encoder learning rate; 0 means lr"),
      integer_key("em_iters", "50", "EM iterations"),
      real_key("em_tol", "1e-7", "EM absolute improvement threshold"),
      integer_key("em_patience", "3", "EM small improvements before stopping"),
      flag_key("em_early_stop", "true", "EM early stopping"),
      integer_key("svi_steps", "20", "per-sentence SVI steps per visit"),
      real_key("svi_lr", "0.1", "SVI learning rate"),
      choice_key("svi_optimizer", {"sgd", "adam"}, "SVI optimizer"),
      integer_key("svi_samples", "1", "SVI Monte Carlo samples (Gaussian q)"),
      integer_key("m_steps", "1", "variational-em: gradient M-steps per epoch"),
      choice_key("estimator", {"reparam", "score", "concrete", "iwae", "exact"}, "VAE gradient estimator"),
      integer_key("samples", "1", "VAE Monte Carlo samples per sentence"),
      integer_key("iwae_k", "5", "importance samples for the iwae estimator"),
      real_key("temperature", "0.5", "Concrete temperature"),
      choice_key("relaxed_kl", {"categorical", "concrete"}, "KL term under the Concrete relaxation"),
      real_key("beta", "1.0", "KL weight after warm-up"),
      integer_key("warmup_steps", "0", "linear KL warm-up steps; 0 disables"),
      real_key("free_bits", "0", "KL floor in nats"),
      choice_key("flow", {"none", "planar", "iaf"}, "posterior flow"),
      integer_key("flow_depth", "2", "flow steps"),
      integer_key("iaf_hidden", "16", "IAF hidden width"),
      choice_key("encoder", {"rnn", "bow"}, "encoder architecture"),
      integer_key("encoder_embed", "16", "encoder embedding width"),
      integer_key("encoder_hidden", "16", "encoder hidden width"),
      integer_key("wake_per_sleep", "1", "wake steps per sleep step"),
      integer_key("eval_samples", "1", "Monte Carlo samples for reported ELBOs"),
      integer_key("eval_is_k", "10", "importance samples for reported log p(x); 0 disables"),
      // eval / sample / diagnose / bench
      choice_key("eval_split", {"all", "train", "heldout"}, "eval: which split"),
      text_key("eval_iwae_ks", "1,5,50", "eval: comma-separated IWAE sample counts"),
      integer_key("is_k", "1000", "eval: importance samples for log p(x)"),
      integer_key("num_samples", "10", "sample: number of draws"),
      integer_key("gap_sentences", "50", "diagnose: sentences examined; 0 means all"),
      integer_key("gap_steps", "200", "diagnose: SVI refinement steps"),
      real_key("gap_lr", "0.01", "diagnose: SVI learning rate (plain gradient)"),
      integer_key("gap_eval_samples", "1000", "diagnose: Monte Carlo samples for Gaussian ELBOs"),
      integer_key("gap_is_k", "1000", "diagnose: importance samples when log p(x) is not enumerable"),
      integer_key("gap_residual_r", "20", "diagnose: refinement steps for the residual gap"),
      integer_key("bench_samples", "100000", "estimator-bench: gradient samples per estimate"),
      integer_key("bench_reps", "10", "estimator-bench: paired repetitions"),
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void validate(const ConfigKey& key, const std::string& value) {
  const auto bad = [&](const std::string& expect) {
    fail(ErrorCode::config, "key '" + key.name + "': expected " + expect + ", got '" + value + "'");
  };
  switch (key.type) {
    case ValueType::integer: {
      if (value.empty()) bad("an integer");
      char* end = nullptr;
      errno = 0;
      std::strtoll(value.c_str(), &end, 10);
      if (*end != '\0' || errno == ERANGE) bad("an integer");
      break;
    }
    case ValueType::real: {
      if (value.empty()) bad("a number");
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (*end != '\0' || !std::isfinite(v)) bad("a finite number");
      break;
    }
    case ValueType::boolean:
      if (value != "true" && value != "false") bad("true or false");
      break;
    case ValueType::choice: {
      bool ok = false;
      std::string list;
      for (const auto& c : key.choices) {
        ok = ok || c == value;
        list += (list.empty() ? "" : "|") + c;
      }
      if (!ok) bad("one of " + list);
      break;
    }
    case ValueType::text:
      if (value.find('\n') != std::string::npos) bad("a single line");
      break;
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    const std::string stage = key.substr(0, dot), name = key.substr(dot + 1);
    if (stage.empty()) fail(ErrorCode::config, "empty stage in key '" + key + "'");
    const ConfigKey* k = find_config_key(name);
    if (!k) fail(ErrorCode::config, "unknown config key '" + name + "' in '" + key + "'");
    validate(*k, value);
    for (auto& o : overrides_) {
      if (o.first == stage && o.second.first == name) {
        o.second.second = value;
        return;
      }
    }
    overrides_.push_back({stage, {name, value}});
    return;
  }
  const ConfigKey* k = find_config_key(key);
  if (!k) fail(ErrorCode::config, "unknown config key '" + key + "'");
  validate(*k, value);
  values_[key] = value;
  explicit_.insert(key);
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorCode::config, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorCode::config, source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      c.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorCode::config, source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

Config Config::parse_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config '" + path + "'");
  return parse(in, path);
}

const std::string& Config::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::config, "unknown config key '" + key + "'");
  return it->second;
}

std::int64_t Config::integer(const std::string& key) const {
  const ConfigKey* k = find_config_key(key);
  if (!k || k->type != ValueType::integer) fail(ErrorCode::config, "'" + key + "' is not an integer key");
  return std::strtoll(text(key).c_str(), nullptr, 10);
}

std::size_t Config::size(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) fail(ErrorCode::config, "key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double Config::real(const std::string& key) const {
  const ConfigKey* k = find_config_key(key);
  if (!k || k->type != ValueType::real) fail(ErrorCode::config, "'" + key + "' is not a numeric key");
  return std::strtod(text(key).c_str(), nullptr);
}

bool Config::flag(const std::string& key) const {
  const ConfigKey* k = find_config_key(key);
  if (!k || k->type != ValueType::boolean) fail(ErrorCode::config, "'" + key + "' is not a boolean key");
  return text(key) == "true";
}

Config Config::for_stage(const std::string& stage) const {
  Config c = *this;
  c.overrides_.clear();
  for (const auto& [st, kv] : overrides_) {
    if (st == stage) c.set(kv.first, kv.second);
  }
  return c;
}

void Config::write(std::ostream& out) const {
  out << kConfigHeader << '\n';
  for (const auto& k : config_keys()) out << k.name << " = " << values_.at(k.name) << '\n';
  for (const auto& [stage, kv] : overrides_) out << stage << '.' << kv.first << " = " << kv.second << '\n';
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write config '" + path + "'");
  write(out);
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

std::string Config::to_string() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

}  // namespace latentkit
