#pragma once

// Experiment runner behind the CLI: synthetic corpora, training dispatch,
// evaluation, sampling, diagnostics and the shipped recipes. Every run writes
// its resolved config (config.txt), a metrics file (metrics.txt) and, where a
// model is produced, a checkpoint (model.ckpt) into its output directory.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latentkit/checkpoint.hpp"
#include "latentkit/config.hpp"
#include "latentkit/error.hpp"
#include "latentkit/exact.hpp"
#include "latentkit/flows.hpp"
#include "latentkit/io.hpp"
#include "latentkit/models.hpp"
#include "latentkit/variational.hpp"

namespace latentkit {

// Output root from LATENTKIT_OUTPUT_ROOT, else "runs".
inline constexpr const char* kOutputRootEnv = "LATENTKIT_OUTPUT_ROOT";
std::string output_root();
// `output` when set, else <output root>/<run_id>.
std::string output_directory(const Config& config);

// Progress messages; stderr unless a sink is installed.
void set_info_sink(WarningSink sink);
void info(const std::string& message);

bool is_discrete_family(const std::string& family);
bool is_continuous_family(const std::string& family);

// Fresh model for training (weights from `rng`).
std::unique_ptr<LatentModel> make_model(const Config& config, std::size_t vocab_size, Rng& rng);
// Random ground truth for synth: Dirichlet(1) tables, or network weights at
// truth_radius.
std::unique_ptr<LatentModel> make_truth(const Config& config, Rng& rng);
Encoder make_encoder(const Config& config, const LatentModel& model, Rng& rng);
FlowStack make_flow(const Config& config, const LatentModel& model, Rng& rng);

// Everything needed to rebuild a trained run from its checkpoint.
struct TrainedRun {
  Config config;
  std::unique_ptr<LatentModel> model;
  std::optional<Encoder> encoder;
  FlowStack flow;
};

// Meta holds the model-defining config keys; params hold model, encoder and
// flow tensors.
Checkpoint make_checkpoint(const Config& config, const LatentModel& model, const Encoder* encoder, const FlowStack* flow);
TrainedRun load_trained(const std::string& checkpoint_path);

// Seeded 90/10-style split; the held-out part may be empty.
struct Split {
  Corpus train;
  Corpus heldout;
};
Split split_corpus(const Corpus& corpus, double heldout_fraction, std::uint64_t seed);

struct RunResult {
  std::string output_dir;
  std::map<std::string, double> summary;
};

RunResult run_synth(const Config& config);
RunResult run_train(const Config& config);
RunResult run_eval(const Config& config);
RunResult run_sample(const Config& config);
RunResult run_diagnose(const Config& config);
// command in {synth, train, eval, sample, diagnose, recipe}.
RunResult run_command(const std::string& command, const Config& config);

std::vector<std::string> recipe_names();
// The preset as config text (what recipes/<name>.conf ships).
std::string recipe_text(const std::string& name);
// Runs the preset named by the config's `recipe` key; other keys override.
RunResult run_recipe(const Config& config);

}  // namespace latentkit
