#include "config.hpp"

#include <fstream>

#include "coachpipe/errors.hpp"
#include "coachpipe/text.hpp"

extern char** environ;

namespace coachpipe::cli {

namespace {

constexpr std::string_view kEnvPrefix = "COACHPIPE__";

bool compatible(const nlohmann::json& def, const nlohmann::json& value) {
  if (def.is_null() || value.is_null()) return !value.is_object() && !value.is_array();
  if (def.is_number()) return value.is_number();
  if (def.is_array()) return value.is_array();
  return def.type() == value.type();
}

void merge(nlohmann::json& into, const nlohmann::json& from, const std::string& where) {
  if (!from.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : from.items()) {
    std::string path = where.empty() ? key : where + "." + key;
    if (!into.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    auto& slot = into[key];
    if (slot.is_object()) {
      merge(slot, value, path);
    } else {
      if (!compatible(slot, value))
        throw ConfigError("config: key '" + path + "' expects " + std::string(slot.type_name()) +
                          ", got " + std::string(value.type_name()));
      slot = value;
    }
  }
}

}  // namespace

nlohmann::json default_config() {
  return nlohmann::json::parse(R"({
    "seed": 13,
    "paths": {
      "corpus": "data/fixture/corpus.jsonl",
      "positives": "data/fixture/positives.jsonl",
      "schema": null,
      "workdir": "runs/default"
    },
    "split": {"train": 0.8, "dev": 0.1, "test": 0.1},
    "units": {
      "k": 15,
      "metric": "squared_euclidean",
      "embedder": "hash-bow-256",
      "max_iterations": 100,
      "restarts": 4
    },
    "summarizer": {
      "phase1_epochs": 7.0,
      "phase2_epochs": 7.0,
      "learning_rate": 1e-4,
      "batch_size": 16,
      "max_attempts": 3
    },
    "rl": {
      "reward_metric": "rouge_l",
      "kl_coefficient": 0.05,
      "ppo_clip": 0.2,
      "batch_size": 8,
      "steps": 100,
      "learning_rate": 0.5,
      "ppo_epochs": 2,
      "baseline_momentum": 0.9,
      "max_length": 64
    },
    "generator": {
      "corpus": "train",
      "goal_fallback": "none",
      "epochs": 7.0,
      "learning_rate": 1e-4,
      "batch_size": 16,
      "max_length": 128
    },
    "pvi": {
      "context_window": 3,
      "g_epochs": 2.0,
      "g_null_epochs": 1.0,
      "learning_rate": 1e-4,
      "batch_size": 16,
      "fraction": 0.05,
      "threshold": null,
      "threads": 0
    },
    "decode": {"top_k": 40, "top_p": 1.0, "max_length": 128},
    "eval": {
      "similarity_kernel": "exact",
      "scorer_checkpoint": null,
      "split": "test"
    },
    "ab": {"baseline": null}
  })");
}

void set_key(nlohmann::json& config, const std::string& dotted_key, const std::string& value) {
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  auto parts = text::split_whitespace([&] {
    std::string s = dotted_key;
    for (char& c : s)
      if (c == '.') c = ' ';
    return s;
  }());
  if (parts.empty()) throw ConfigError("config: empty override key");
  nlohmann::json patch = parsed;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = nlohmann::json{{*it, patch}};
  merge(config, patch, "");
}

std::map<std::string, std::string> config_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (entry.substr(0, kEnvPrefix.size()) != kEnvPrefix) continue;
    auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return out;
}

nlohmann::json load_config(const std::filesystem::path& file,
                           const std::map<std::string, std::string>& environment,
                           const std::vector<std::string>& overrides) {
  nlohmann::json config = default_config();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("config: cannot open " + file.string());
    nlohmann::json user;
    try {
      user = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + file.string() + ": " + e.what());
    }
    merge(config, user, "");
  }
  for (const auto& [name, value] : environment) {
    if (name.substr(0, kEnvPrefix.size()) != kEnvPrefix) continue;
    std::string key = text::to_lower_ascii(name.substr(kEnvPrefix.size()));
    for (std::size_t pos; (pos = key.find("__")) != std::string::npos;) key.replace(pos, 2, ".");
    set_key(config, key, value);
  }
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    set_key(config, o.substr(0, eq), o.substr(eq + 1));
  }
  return config;
}

std::uint64_t stage_seed(std::uint64_t global, std::string_view stage) {
  return text::mix_seed(global, text::fnv1a64(stage));
}

}  // namespace coachpipe::cli
