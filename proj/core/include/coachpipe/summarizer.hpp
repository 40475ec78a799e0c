#pragma once

// Goal summarization as (partial goal, edit instruction) generation:
// supervised warm start, contrastive refinement, PPO with a ROUGE reward and
// KL regularization toward a frozen base, and inference.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/corpus.hpp"
#include "coachpipe/evalkit.hpp"
#include "coachpipe/goalkit.hpp"
#include "coachpipe/seqmodel.hpp"

namespace coachpipe::summarizer {

// --- wire protocol ----------------------------------------------------------------

struct ProtocolOutput {
  std::string partial;
  goalkit::Instruction instruction;
};

/// `PARTIAL: <text> || INSTR: <instruction>`
std::string format_protocol(std::string_view partial, const goalkit::Instruction& instruction);
/// nullopt unless the text holds exactly one `||`, the field labels are
/// present and the instruction parses.
std::optional<ProtocolOutput> parse_protocol(std::string_view raw);

/// Model source text for a week's dialogue: speaker-tagged, normalized turns.
std::string dialogue_source(const corpus::WeekSession& session);

/// Gold text in the form rewards and frames compare against.
std::string normalize_goal(std::string_view goal_text);

/// ROUGE F1 of the executed output against the normalized gold goal; 0 when
/// the output does not parse or cannot be executed.
double reward(std::string_view raw, std::string_view gold_goal_text,
              const goalkit::GoalFrame& reference,
              evalkit::RougeMetric metric = evalkit::RougeMetric::RougeL,
              const goalkit::Schema& schema = goalkit::Schema::default_schema());

/// Gold frame of the previous week (teacher forcing), empty when absent.
goalkit::GoalFrame previous_gold_frame(const corpus::DialogueCorpus& corpus,
                                       const corpus::WeekSession& session,
                                       const goalkit::Schema& schema = goalkit::Schema::default_schema());

// --- supervised warm start ----------------------------------------------------------

struct PositiveExample {
  std::string source;
  std::string output;
};

/// Protocol tokens and the seven instructions first, then every token of
/// the dialogue sources, normalized gold goals and positive outputs.
seqmodel::Vocabulary summarizer_vocabulary(const corpus::DialogueCorpus& corpus,
                                           const std::vector<PositiveExample>& positives);

/// Resolves positives stored by session key. Lines look like
/// {"conversation_id": ..., "week": ..., "output": "PARTIAL: ... || INSTR: ..."}.
std::vector<PositiveExample> read_positives(std::istream& in, const corpus::DialogueCorpus& corpus);

struct WarmStartConfig {
  seqmodel::TrainConfig phase1{7.0, 1e-4, 16, 0};
  seqmodel::TrainConfig phase2{7.0, 1e-4, 16, 0};
};

struct WarmStartReport {
  std::size_t phase1_pairs = 0;
  /// Sessions without a gold goal, skipped in phase one.
  std::size_t skipped = 0;
  std::size_t phase2_pairs = 0;
  seqmodel::FitReport phase1;
  std::optional<seqmodel::FitReport> phase2;
};

/// Phase one fits dialogue -> gold goal text, phase two dialogue -> protocol
/// output on the positives (skipped when there are none). Throws ConfigError
/// "no supervised pairs" when no session carries a gold goal.
WarmStartReport warm_start(seqmodel::SequenceModel& model, const corpus::DialogueCorpus& corpus,
                           const std::vector<PositiveExample>& positives,
                           const WarmStartConfig& cfg);

// --- contrastive refinement ---------------------------------------------------------

struct ContrastiveGroup {
  std::string source;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
};

struct ContrastiveConfig {
  double margin = 1.0;
  std::size_t epochs = 5;
  double learning_rate = 0.05;
};

struct ContrastiveReport {
  double mean_gap_before = 0;
  double mean_gap_after = 0;
  std::size_t updates = 0;
};

/// Mean sequence log-probability of positives minus that of negatives, in nats.
double contrastive_gap(const seqmodel::SequenceModel& model, const ContrastiveGroup& group);

/// Hinge on the per-dialogue gap: groups below `margin` get one ascent step
/// on the gap per epoch. Throws ConfigError for groups missing either side.
ContrastiveReport contrastive_refine(seqmodel::SequenceModel& model,
                                     const std::vector<ContrastiveGroup>& groups,
                                     const ContrastiveConfig& cfg);

/// Samples candidate outputs and keeps distinct ones whose executed goal
/// differs from the gold goal.
std::vector<std::string> sample_negatives(const seqmodel::SequenceModel& model,
                                          std::string_view source, std::string_view gold_goal_text,
                                          const goalkit::GoalFrame& reference, std::size_t count,
                                          std::uint64_t seed);

// --- PPO ------------------------------------------------------------------------------------

struct RLExample {
  std::string source;
  std::string gold_goal_text;
  goalkit::GoalFrame reference;
};

/// One example per session with a gold goal; reference is the previous
/// week's gold frame.
std::vector<RLExample> rl_examples(const corpus::DialogueCorpus& corpus,
                                   const goalkit::Schema& schema = goalkit::Schema::default_schema());

struct RLConfig {
  evalkit::RougeMetric reward_metric = evalkit::RougeMetric::RougeL;
  double kl_coefficient = 0.05;
  double ppo_clip = 0.2;
  std::size_t batch_size = 8;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  double learning_rate = 0.5;
  /// Optimization passes over each rollout batch.
  std::size_t ppo_epochs = 2;
  /// Weight of the previous baseline in the moving average.
  double baseline_momentum = 0.9;
  std::size_t max_length = 64;

  /// Throws ConfigError for negative λ, ε outside (0, 1] and other bad values.
  void validate() const;
  nlohmann::json to_json() const;
};

struct TraceEntry {
  std::size_t step = 0;
  double mean_reward = 0;
  /// Mean over rollouts of the summed per-step KL(π_φ || π_base), in nats.
  double mean_kl = 0;
  /// mean_reward - λ * mean_kl
  double objective = 0;
};

void write_trace_jsonl(const std::vector<TraceEntry>& trace, std::ostream& out);

/// Clipped-ratio PPO on E[r - λ KL(π_φ || π_base)]. Rollouts are drawn from
/// the current policy by unrestricted ancestral sampling each step. Throws
/// ConfigError for invalid settings or a base that is not frozen.
std::vector<TraceEntry> rl_tune(seqmodel::SequenceModel& policy, const seqmodel::SequenceModel& base,
                                const std::vector<RLExample>& examples, const RLConfig& cfg,
                                const goalkit::Schema& schema = goalkit::Schema::default_schema());

/// Mean reward over `samples` decodes per example with seeds derived from
/// `seed`.
double expected_reward(const seqmodel::SequenceModel& policy, const std::vector<RLExample>& examples,
                       const seqmodel::DecodeConfig& decode, std::size_t samples,
                       evalkit::RougeMetric metric = evalkit::RougeMetric::RougeL,
                       const goalkit::Schema& schema = goalkit::Schema::default_schema());

// --- inference --------------------------------------------------------------------------

struct GoalSummary {
  std::string partial_goal_text;
  goalkit::Instruction instruction;
  std::string full_goal_text;
  goalkit::GoalFrame full_frame;
  std::string raw;
  /// True when no sample parsed and the raw text was used with Pass.
  bool fallback = false;
  std::size_t attempts = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct SummarizeOptions {
  seqmodel::DecodeConfig decode;
  std::size_t max_attempts = 3;
};

GoalSummary summarize(const seqmodel::SequenceModel& policy, const corpus::WeekSession& session,
                      const goalkit::GoalFrame& previous_goal, const SummarizeOptions& options,
                      const goalkit::Schema& schema = goalkit::Schema::default_schema());

/// Summarizes every session in order; week t references the summary produced
/// for week t-1 of the same conversation (empty when that week is absent).
std::map<corpus::SessionKey, GoalSummary> summarize_corpus(
    const seqmodel::SequenceModel& policy, const corpus::DialogueCorpus& corpus,
    const SummarizeOptions& options,
    const goalkit::Schema& schema = goalkit::Schema::default_schema());

}  // namespace coachpipe::summarizer
