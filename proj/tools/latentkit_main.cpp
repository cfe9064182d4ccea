// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latentkit/latentkit.h"

namespace {

struct Session {
  lk_session* s = nullptr;
  Session() {
    if (lk_session_create(&s) != LK_OK) {
      std::cerr << "error: " << lk_last_error() << '\n';
      std::exit(1);
    }
  }
  ~Session() { lk_session_destroy(s); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;
};

int report_failure(const Session& session, lk_status status) {
  std::cerr << "error (" << lk_status_name(status) << "): " << lk_session_last_error(session.s) << '\n';
  return 1;
}

// Applies key=value overrides; "key=value" and "key = value" both work when
// quoted as one argument.
lk_status apply_overrides(Session& session, const std::vector<std::string>& overrides) {
  for (const auto& a : overrides) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: expected key=value, got '" << a << "'\n";
      return LK_ERR_CONFIG;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const lk_status st = lk_session_set(session.s, trim(a.substr(0, eq)).c_str(), trim(a.substr(eq + 1)).c_str());
    if (st != LK_OK) return st;
  }
  return LK_OK;
}

void print_summary(const Session& session) {
  std::printf("output %s\n", lk_session_output_dir(session.s));
  for (size_t i = 0; i < lk_session_summary_count(session.s); ++i) {
    const char* key = nullptr;
    double value = 0.0;
    if (lk_session_summary_get(session.s, i, &key, &value) == LK_OK) std::printf("%s %.10g\n", key, value);
  }
}

int run(const std::string& command, const std::string& config_path, const std::string& recipe, const std::string& resume,
        const std::vector<std::string>& overrides) {
  Session session;
  lk_status st = LK_OK;
  if (!recipe.empty()) st = lk_session_load_recipe(session.s, recipe.c_str());
  if (st == LK_OK && !config_path.empty()) st = lk_session_load_config(session.s, config_path.c_str());
  if (st == LK_OK) st = apply_overrides(session, overrides);
  if (st == LK_OK && !resume.empty()) st = lk_session_set(session.s, "resume", resume.c_str());
  if (st != LK_OK) return report_failure(session, st);
  st = lk_session_run(session.s, command.c_str());
  if (st != LK_OK) return report_failure(session, st);
  print_summary(session);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentkit: latent-variable models of token sequences"};
  app.require_subcommand(1);

  std::string config_path, resume, recipe_name, dump_name;
  std::vector<std::string> overrides;
  bool list = false;

  std::vector<CLI::App*> runs;
  for (const char* name : {"synth", "train", "eval", "sample", "diagnose"}) {
    static const char* help[] = {"sample a corpus from a ground-truth model", "fit a model (inference key picks the method)",
                                 "ELBO, IWAE bounds and importance-sampled log p(x) over a split",
                                 "ancestral samples from a checkpoint", "inference, approximation and amortization gaps"};
    const std::size_t i = runs.size();
    CLI::App* sub = app.add_subcommand(name, help[i]);
    sub->add_option("-c,--config", config_path, "config file (key = value lines)");
    sub->add_option("overrides", overrides, "key=value overrides");
    if (std::string(name) == "train") sub->add_option("--resume", resume, "resume from a checkpoint");
    runs.push_back(sub);
  }
  CLI::App* recipe = app.add_subcommand("recipe", "run a shipped preset");
  recipe->add_option("name", recipe_name, "preset name");
  recipe->add_option("overrides", overrides, "key=value overrides");
  recipe->add_option("-c,--config", config_path, "config file replacing the preset");
  recipe->add_flag("--list", list, "list presets");
  recipe->add_option("--dump", dump_name, "print a preset's config");
  CLI::App* keys = app.add_subcommand("keys", "list configuration keys with defaults");
  CLI::App* version = app.add_subcommand("version", "print the library version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (version->parsed()) {
    std::printf("%s\n", lk_version());
    return 0;
  }
  if (keys->parsed()) {
    for (size_t i = 0; i < lk_config_key_count(); ++i) {
      const char *name = nullptr, *def = nullptr, *help = nullptr;
      if (lk_config_key(i, &name, &def, &help) == LK_OK) std::printf("%-18s %-10s %s\n", name, *def ? def : "\"\"", help);
    }
    return 0;
  }
  if (recipe->parsed()) {
    if (list) {
      for (size_t i = 0; i < lk_recipe_count(); ++i) std::printf("%s\n", lk_recipe_name(i));
      return 0;
    }
    if (!dump_name.empty()) {
      const char* text = nullptr;
      if (lk_recipe_text(dump_name.c_str(), &text) != LK_OK) {
        std::cerr << "error: " << lk_last_error() << '\n';
        return 1;
      }
      std::fputs(text, stdout);
      return 0;
    }
    if (recipe_name.find('=') != std::string::npos) {
      overrides.insert(overrides.begin(), recipe_name);
      recipe_name.clear();
    }
    if (recipe_name.empty() == config_path.empty()) {
      std::cerr << "error: recipe needs either a preset name or --config\n\n" << recipe->help();
      return 2;
    }
    return run("recipe", config_path, recipe_name, "", overrides);
  }
  for (CLI::App* sub : runs) {
    if (sub->parsed()) return run(sub->get_name(), config_path, "", resume, overrides);
  }
  std::cerr << app.help();
  return 2;
}
