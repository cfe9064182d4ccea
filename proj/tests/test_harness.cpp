#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "latentkit/checkpoint.hpp"
#include "latentkit/config.hpp"
#include "latentkit/error.hpp"
#include "latentkit/harness.hpp"
#include "latentkit/io.hpp"
#include "latentkit/latentkit.h"
#include "test_util.hpp"

using namespace latentkit;
using namespace lktest;

TEST(Config, DefaultsAndTypes) {
  Config c;
  EXPECT_EQ(c.text("family"), "nb");
  EXPECT_EQ(c.integer("K"), 4);
  EXPECT_DOUBLE_EQ(c.real("beta"), 1.0);
  EXPECT_TRUE(c.flag("em_early_stop"));
  EXPECT_FALSE(c.is_set("K"));
  c.set("K", "7");
  EXPECT_TRUE(c.is_set("K"));
  EXPECT_THROW(c.set("K", "seven"), Error);
  EXPECT_THROW(c.set("family", "lda"), Error);
  EXPECT_THROW(c.set("no_such_key", "1"), Error);
  EXPECT_THROW(c.set("lr", "nan"), Error);
}

TEST(Config, ParseErrorsNameLine) {
  try {
    Config::parse_text("K = 3\n\nbogus line\n", "test.conf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    EXPECT_NE(std::string(e.what()).find("test.conf:3"), std::string::npos);
  }
}

TEST(Config, RoundTripWithStageOverrides) {
  Config c = Config::parse_text("# comment\nK = 3\nlr = 0.25 # trailing\nvae.epochs = 7\n", "x");
  EXPECT_TRUE(c.has_stage_overrides());
  EXPECT_EQ(c.size("epochs"), 20u);
  Config s = c.for_stage("vae");
  EXPECT_EQ(s.size("epochs"), 7u);
  EXPECT_FALSE(s.has_stage_overrides());
  Config back = Config::parse_text(c.to_string(), "echo");
  EXPECT_EQ(back.to_string(), c.to_string());
  EXPECT_EQ(c.to_string().rfind(kConfigHeader, 0), 0u);
}

TEST(Config, KeysHaveValidDefaults) {
  for (const auto& k : config_keys()) {
    Config c;
    EXPECT_NO_THROW(c.set(k.name, k.default_value)) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
}

TEST(Io, CorpusAndVocabRoundTrip) {
  TempDir dir("io");
  Vocab v = Vocab::synthetic(6);
  save_vocab(dir.file("v.txt"), v);
  Vocab v2 = load_vocab(dir.file("v.txt"));
  EXPECT_EQ(v2.tokens(), v.tokens());
  const Corpus c{{2, 3, 1}, {5}, {4, 4, 4, 1}};
  save_corpus(dir.file("c.txt"), c, v);
  EXPECT_EQ(load_corpus(dir.file("c.txt"), v2), c);
}

TEST(Io, UnknownTokenNamesLine) {
  TempDir dir("io2");
  Vocab v = Vocab::synthetic(4);
  write_file(dir.file("c.txt"), std::string(kCorpusHeader) + "\nw2 w3\nw2 zz\n");
  try {
    load_corpus(dir.file("c.txt"), v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos);
  }
}

TEST(Io, EmptyLineWarns) {
  TempDir dir("io3");
  Vocab v = Vocab::synthetic(4);
  write_file(dir.file("c.txt"), std::string(kCorpusHeader) + "\nw2\n\nw3\n");
  std::vector<std::string> w;
  set_warning_sink([&](const std::string& m) { w.push_back(m); });
  Corpus c = load_corpus(dir.file("c.txt"), v);
  set_warning_sink({});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(w.size(), 1u);
}

TEST(Io, MetricsRoundTripAndRejectNonFinite) {
  TempDir dir("metrics");
  {
    MetricsWriter m(dir.file("m.txt"), "r1");
    m.write(MetricsRecord("epoch").add("epoch", 3).add("loglik", 0.1).add("split", "train"));
    EXPECT_THROW(m.write(MetricsRecord("bad").add("x", std::nan(""))), Error);
  }
  auto recs = read_metrics(dir.file("m.txt"));
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].at("run"), "r1");
  EXPECT_EQ(recs[0].at("event"), "epoch");
  EXPECT_EQ(std::stod(recs[0].at("loglik")), 0.1);
  EXPECT_EQ(recs[0].at("split"), "train");
}

TEST(Checkpoint, BitExactRoundTrip) {
  Rng rng(1);
  GaussianCrnn m(5, 3, 4, 2, &rng, 0.7);
  Checkpoint c;
  c.meta.push_back({"family", "gaussian-crnn"});
  c.params = m.parameters();
  std::stringstream ss;
  write_checkpoint(ss, c);
  Checkpoint back = read_checkpoint(ss);
  ASSERT_EQ(back.params.size(), c.params.size());
  GaussianCrnn other(5, 3, 4, 2, nullptr, 0.0);
  assign_parameters(back, other.parameters());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    EXPECT_EQ(other.parameters()[i].tensor.to_vector(), c.params[i].tensor.to_vector());
  }
  EXPECT_EQ(*back.find_meta("family"), "gaussian-crnn");
}

TEST(Checkpoint, ShapeMismatchRejected) {
  Rng rng(2);
  NaiveBayes a = NaiveBayes::random(2, 5, rng);
  NaiveBayes b(3, 5);
  Checkpoint c;
  c.params = a.parameters();
  EXPECT_THROW(assign_parameters(c, b.parameters()), Error);
}

TEST(Harness, SplitIsSeededAndOrdered) {
  Corpus c;
  for (std::size_t i = 0; i < 50; ++i) c.push_back({i});
  Split a = split_corpus(c, 0.2, 9);
  Split b = split_corpus(c, 0.2, 9);
  EXPECT_EQ(a.heldout, b.heldout);
  EXPECT_EQ(a.heldout.size(), 10u);
  EXPECT_EQ(a.train.size(), 40u);
  for (std::size_t i = 1; i < a.train.size(); ++i) EXPECT_LT(a.train[i - 1][0], a.train[i][0]);
  EXPECT_TRUE(split_corpus(c, 0.0, 9).heldout.empty());
}

TEST(Harness, SynthTrainEvalSampleDiagnose) {
  TempDir dir("pipeline");
  Config base;
  base.set("family", "nb");
  base.set("K", "2");
  base.set("V", "12");
  base.set("N", "200");
  base.set("length", "6");
  base.set("seed", "4");
  Config s = base;
  s.set("output", dir.file("data"));
  run_synth(s);
  for (const char* f : {"vocab.txt", "corpus.txt", "latents.txt", "truth.ckpt", "config.txt", "metrics.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.file(std::string("data/") + f))) << f;
  }
  Config t = base;
  t.set("output", dir.file("train"));
  t.set("corpus", dir.file("data/corpus.txt"));
  t.set("inference", "vae");
  t.set("estimator", "exact");
  t.set("encoder", "bow");
  t.set("encoder_embed", "2");
  t.set("epochs", "3");
  t.set("lr", "0.02");
  RunResult tr = run_train(t);
  EXPECT_TRUE(tr.summary.count("train_loglik"));
  Config e = base;
  e.set("output", dir.file("eval"));
  e.set("corpus", dir.file("data/corpus.txt"));
  e.set("checkpoint", dir.file("train/model.ckpt"));
  e.set("is_k", "200");
  e.set("eval_iwae_ks", "1,5");
  RunResult er = run_eval(e);
  EXPECT_LE(er.summary.at("iwae_1"), er.summary.at("iwae_5") + 1e-3);
  EXPECT_LE(er.summary.at("iwae_5"), er.summary.at("log_marginal") + 1e-3);
  EXPECT_NEAR(er.summary.at("lp_is"), er.summary.at("log_marginal"), 1e-2);
  Config sa = base;
  sa.set("output", dir.file("sample"));
  sa.set("checkpoint", dir.file("train/model.ckpt"));
  run_sample(sa);
  EXPECT_TRUE(std::filesystem::exists(dir.file("sample/samples.txt")));
  Config d = base;
  d.set("output", dir.file("diag"));
  d.set("corpus", dir.file("data/corpus.txt"));
  d.set("checkpoint", dir.file("train/model.ckpt"));
  d.set("gap_sentences", "5");
  d.set("gap_steps", "20");
  RunResult dr = run_diagnose(d);
  EXPECT_EQ(dr.summary.at("frac_identity"), 1.0);

  TrainedRun run = load_trained(dir.file("train/model.ckpt"));
  EXPECT_EQ(run.model->family(), "nb");
  EXPECT_TRUE(run.encoder.has_value());
}

TEST(Harness, ResumeContinuesFromCheckpoint) {
  TempDir dir("resume");
  Config base;
  base.set("K", "2");
  base.set("V", "10");
  base.set("N", "100");
  base.set("output", dir.file("data"));
  run_synth(base);
  Config t = base;
  t.set("corpus", dir.file("data/corpus.txt"));
  t.set("inference", "em");
  t.set("output", dir.file("a"));
  RunResult a = run_train(t);
  t.set("output", dir.file("b"));
  t.set("resume", dir.file("a/model.ckpt"));
  t.set("em_iters", "1");
  RunResult b = run_train(t);
  EXPECT_GE(b.summary.at("train_loglik"), a.summary.at("train_loglik") - 1e-9);
}

TEST(Harness, EmRequiresNaiveBayes) {
  TempDir dir("emfam");
  Config c;
  c.set("family", "catbow");
  c.set("V", "10");
  c.set("N", "50");
  c.set("output", dir.file("data"));
  run_synth(c);
  c.set("corpus", dir.file("data/corpus.txt"));
  c.set("inference", "em");
  c.set("output", dir.file("t"));
  EXPECT_THROW(run_train(c), Error);
}

TEST(Recipes, ShippedFilesMatchPresets) {
  for (const auto& name : recipe_names()) {
    const std::string path = std::string(LATENTKIT_SOURCE_DIR) + "/recipes/" + name + ".conf";
    EXPECT_EQ(read_file(path), recipe_text(name)) << name;
    EXPECT_NO_THROW(Config::parse_text(recipe_text(name), name));
  }
  EXPECT_THROW(recipe_text("nope"), Error);
}

TEST(CApi, SessionLifecycle) {
  lk_session* s = nullptr;
  ASSERT_EQ(lk_session_create(&s), LK_OK);
  EXPECT_EQ(lk_session_set(s, "K", "x"), LK_ERR_CONFIG);
  EXPECT_NE(std::string(lk_session_last_error(s)), "");
  EXPECT_EQ(lk_session_set(s, "K", "3"), LK_OK);
  const char* text = nullptr;
  ASSERT_EQ(lk_session_config_text(s, &text), LK_OK);
  EXPECT_NE(std::string(text).find("K = 3"), std::string::npos);
  EXPECT_EQ(lk_session_run(s, "fly"), LK_ERR_CONFIG);
  EXPECT_EQ(lk_session_load_config(s, "/nonexistent/file.conf"), LK_ERR_IO);
  EXPECT_EQ(lk_session_set(nullptr, "K", "3"), LK_ERR_INVALID_ARGUMENT);
  const char* key = nullptr;
  double v = 0;
  EXPECT_EQ(lk_session_summary_get(s, 0, &key, &v), LK_ERR_INVALID_ARGUMENT);
  lk_session_destroy(s);
  EXPECT_EQ(lk_recipe_count(), recipe_names().size());
  EXPECT_EQ(lk_recipe_name(lk_recipe_count()), nullptr);
  EXPECT_EQ(lk_config_key_count(), config_keys().size());
  EXPECT_STREQ(lk_status_name(LK_ERR_NUMERIC), "numeric error");
}

TEST(CApi, RunAndLoadModel) {
  TempDir dir("capi");
  std::vector<std::string> messages;
  lk_set_message_handler([](const char* m, void* u) { static_cast<std::vector<std::string>*>(u)->push_back(m); }, &messages);
  lk_session* s = nullptr;
  ASSERT_EQ(lk_session_create(&s), LK_OK);
  lk_session_set(s, "K", "2");
  lk_session_set(s, "V", "8");
  lk_session_set(s, "N", "100");
  lk_session_set(s, "output", dir.file("data").c_str());
  ASSERT_EQ(lk_session_run(s, "synth"), LK_OK) << lk_session_last_error(s);
  lk_session_set(s, "corpus", dir.file("data/corpus.txt").c_str());
  lk_session_set(s, "inference", "em");
  lk_session_set(s, "output", dir.file("train").c_str());
  ASSERT_EQ(lk_session_run(s, "train"), LK_OK) << lk_session_last_error(s);
  EXPECT_EQ(std::string(lk_session_output_dir(s)), dir.file("train"));
  EXPECT_GT(lk_session_summary_count(s), 0u);
  lk_session_destroy(s);
  lk_set_message_handler(nullptr, nullptr);
  EXPECT_FALSE(messages.empty());

  lk_model* m = nullptr;
  ASSERT_EQ(lk_model_load(dir.file("train/model.ckpt").c_str(), &m), LK_OK) << lk_last_error();
  EXPECT_STREQ(lk_model_family(m), "nb");
  EXPECT_EQ(lk_model_vocab_size(m), 8u);
  const size_t tokens[] = {2, 3, 7};
  double lp = 0;
  ASSERT_EQ(lk_model_log_marginal(m, tokens, 3, &lp), LK_OK);
  EXPECT_LT(lp, 0.0);
  const size_t bad[] = {9};
  EXPECT_EQ(lk_model_log_marginal(m, bad, 1, &lp), LK_ERR_INVALID_ARGUMENT);
  lk_model_free(m);
  EXPECT_EQ(lk_model_load("/nonexistent.ckpt", &m), LK_ERR_IO);
}

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LATENTKIT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("version"), 0);
  EXPECT_EQ(run_cli("keys"), 0);
  EXPECT_EQ(run_cli("recipe --list"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("recipe"), 2);
  EXPECT_EQ(run_cli("train K=notanumber"), 1);
  EXPECT_EQ(run_cli("train corpus=/nonexistent/corpus.txt"), 1);
}
