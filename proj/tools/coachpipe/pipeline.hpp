#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace coachpipe::cli {

struct RunContext {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::filesystem::path workdir;
  std::vector<std::string> overrides;
};

/// Flags that belong to a single subcommand.
struct StageOptions {
  std::filesystem::path votes;
  std::filesystem::path out = "data/fixture";
  std::size_t conversations = 24;
  int weeks = 4;
};

/// Subcommands in pipeline order, followed by the auxiliary ones.
const std::vector<std::string>& stage_names();

/// Runs one subcommand, writing its artifacts and manifest under the work
/// directory.
void run_stage(const std::string& stage, const RunContext& ctx, const StageOptions& options);

}  // namespace coachpipe::cli
