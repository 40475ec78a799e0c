#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "coachpipe/errors.hpp"
#include "config.hpp"
#include "pipeline.hpp"

namespace {

struct Descriptions {
  const char* name;
  const char* help;
};

constexpr Descriptions kCommands[] = {
    {"ingest", "Validate the raw corpus and write the normalized copy"},
    {"split", "Assign train/dev/test labels per conversation"},
    {"fit-units", "Cluster train turn embeddings into discrete dialogue units"},
    {"train-summarizer", "Warm-start the goal summarizer"},
    {"rl-tune", "Fine-tune the summarizer against the ROUGE reward"},
    {"pvi-score", "Score every train response by pointwise V-information"},
    {"curate", "Flag low-information responses and replace them from donors"},
    {"train-generator", "Train the unit-conditioned response generator"},
    {"summarize", "Summarize the goal of every session"},
    {"respond", "Generate coach responses for the evaluation split"},
    {"evaluate", "Score summaries and generated responses"},
    {"export-ab", "Write blinded A/B review pairs"},
    {"import-ab", "Aggregate A/B votes"},
    {"make-fixture", "Write the synthetic coaching fixture corpus"},
};

}  // namespace

int main(int argc, char** argv) {
  using namespace coachpipe;
  CLI::App app{"coachpipe: goal summarization and coaching response pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config file layered over the defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed; per-stage seeds are derived from it");
  app.add_option("--override", overrides, "Set a config key, e.g. --override pvi.fraction=0.1 (repeatable)");
  app.fallthrough();

  cli::StageOptions options;
  std::optional<double> fraction;
  std::optional<double> threshold;
  for (const auto& c : kCommands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    if (std::string(c.name) == "curate") {
      auto* f = sub->add_option("--fraction", fraction, "Flag this share of responses, most negative first");
      auto* t = sub->add_option("--threshold", threshold, "Flag responses whose PVI is below this value");
      f->excludes(t);
    } else if (std::string(c.name) == "import-ab") {
      sub->add_option("--votes", options.votes, "JSONL file of reviewer votes")->required();
    } else if (std::string(c.name) == "make-fixture") {
      sub->add_option("--out", options.out, "Output directory")->capture_default_str();
      sub->add_option("--conversations", options.conversations, "Number of conversations")->capture_default_str();
      sub->add_option("--weeks", options.weeks, "Weeks per conversation")->capture_default_str();
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (fraction) {
      overrides.push_back("pvi.fraction=" + std::to_string(*fraction));
      overrides.push_back("pvi.threshold=null");
    } else if (threshold) {
      overrides.push_back("pvi.threshold=" + std::to_string(*threshold));
      overrides.push_back("pvi.fraction=null");
    }
    cli::RunContext ctx;
    ctx.config = cli::load_config(config_path, cli::config_environment(), overrides);
    ctx.seed = seed ? *seed : ctx.config.at("seed").get<std::uint64_t>();
    ctx.config["seed"] = ctx.seed;
    ctx.workdir = ctx.config.at("paths").at("workdir").get<std::string>();
    ctx.overrides = overrides;
    cli::run_stage(stage, ctx, options);
  } catch (const MissingArtifactError& e) {
    std::cerr << "coachpipe " << stage << ": " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "coachpipe " << stage << ": " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "coachpipe " << stage << ": " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "coachpipe " << stage << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "coachpipe " << stage << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
