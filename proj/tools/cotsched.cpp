// Command-line front end for the curriculum scheduling pipeline.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cotsched/error.hpp"
#include "cotsched/pipeline.hpp"

namespace {

using cotsched::ExitCode;
using cotsched::PipelineConfig;

struct Flags {
  std::string config;
  std::string corpus;
  std::string out;
  std::uint64_t seed = 0;
  std::uint64_t synthetic_logprobs = 0;
  bool lenient = false;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "Pipeline config file (key = value)");
  cmd->add_option("--corpus", flags.corpus, "Corpus JSONL (overrides the config)");
  cmd->add_option("--out", flags.out, "Output directory for artifacts");
  cmd->add_option("--seed", flags.seed, "Master seed for every random stage");
  cmd->add_option("--synthetic-logprobs", flags.synthetic_logprobs,
                  "Fill missing token_logprobs with seeded synthetic values");
  cmd->add_flag("--lenient", flags.lenient, "Ignore unknown corpus keys instead of rejecting them");
}

PipelineConfig resolve(const CLI::App& cmd, const Flags& flags) {
  PipelineConfig config = flags.config.empty() ? PipelineConfig{} : cotsched::load_config(flags.config);
  if (cmd.count("--corpus")) config.corpus = flags.corpus;
  if (cmd.count("--out")) config.out = flags.out;
  if (cmd.count("--seed")) {
    config.seed = flags.seed;
    config.seed_set = true;
  }
  if (cmd.count("--synthetic-logprobs")) config.synthetic_logprobs = flags.synthetic_logprobs;
  if (flags.lenient) config.lenient = true;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plan easy-to-hard rationale distillation schedules"};
  app.require_subcommand(1);
  Flags flags;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const PipelineConfig&);
  };
  const Command commands[] = {
      {"run", "Run every stage: weigh, assess, cluster, schedule, shape-loss (and simulate)",
       cotsched::run_pipeline},
      {"weigh", "Train the token weighting model and write per-token significance weights", cotsched::run_weigh},
      {"assess", "Compute step difficulties and the corpus total B", cotsched::run_assess},
      {"cluster", "K-means cluster question embeddings", cotsched::run_cluster},
      {"schedule", "Plan per-stage input-step counts under the difficulty budget", cotsched::run_schedule},
      {"shape-loss", "Emit per-stage loss specifications for a trainer", cotsched::run_shape_loss},
      {"simulate", "Train the toy student along the schedule", cotsched::run_simulate},
      {"validate", "Parse and check the corpus only", cotsched::run_validate},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, flags);
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      PipelineConfig config = resolve(*sub, flags);
      const std::string name = cmd->name;
      if (name == "validate") {
        cmd->run(config);
        std::cout << "ok: corpus is valid\n";
        return 0;
      }
      if (name != "run") config.validate();
      cmd->run(config);
      std::cout << name << ": wrote artifacts to " << config.out.string() << "\n";
      return 0;
    } catch (const cotsched::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return static_cast<int>(e.exit_code());
    } catch (const std::filesystem::filesystem_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return static_cast<int>(ExitCode::kUsage);
    }
  }
  return static_cast<int>(ExitCode::kUsage);
}
