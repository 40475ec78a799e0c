#pragma once

// Point-wise V-usable information for generated responses: a context model g
// and a null-context model g_null score each patient turn, low scores flag
// unconventional responses, and Low-PVI-Replace swaps them for responses
// from the most similar coach context.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/corpus.hpp"
#include "coachpipe/seqmodel.hpp"

namespace coachpipe::pvi {

struct PviInstance {
  corpus::SessionKey key;
  int turn_index = 0;
  std::string context;
  std::string response;
};

struct ScoredInstance {
  corpus::SessionKey key;
  int turn_index = 0;
  std::string context;
  std::string response;
  /// Bits; positive means the context made the response more predictable.
  double pvi = 0;
  bool flagged = false;

  friend bool operator==(const ScoredInstance&, const ScoredInstance&) = default;
};

/// Up to `window` turns before turn `index` of the session, each tagged
/// "coach:" or "patient:".
std::string context_text(const corpus::WeekSession& session, std::size_t index, std::size_t window);

struct InstanceSet {
  std::vector<PviInstance> instances;
  /// Patient turns with no earlier turn in their session.
  std::size_t excluded = 0;
};

/// Patient turns with at least one preceding turn in the same session,
/// ordered by (session key, turn index).
InstanceSet pvi_instances(const corpus::DialogueCorpus& corpus, std::size_t window = 3);

using ModelFactory = std::function<std::unique_ptr<seqmodel::SequenceModel>(const seqmodel::Vocabulary&)>;

struct PviTrainConfig {
  std::size_t context_window = 3;
  double g_epochs = 2.0;
  double g_null_epochs = 1.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct PviModels {
  std::shared_ptr<const seqmodel::SequenceModel> g;
  std::shared_ptr<const seqmodel::SequenceModel> g_null;
  std::string backend_id;
};

/// Fits g on (context -> response) and g_null on (empty -> response), both
/// over one shared vocabulary, then freezes them. Throws ConfigError when
/// the corpus has no eligible patient turn.
PviModels train_pvi_models(const corpus::DialogueCorpus& train, const ModelFactory& factory,
                           const PviTrainConfig& cfg);

/// sum_t log2 g(y_t | y_<t, x) - log2 g_null(y_t | y_<t, empty). Throws
/// ConfigError for a blank response or mismatched backends.
double score(const PviModels& models, std::string_view context, std::string_view response);

struct ScoredSet {
  std::vector<ScoredInstance> instances;
  std::size_t excluded = 0;
};

/// Scores every instance on up to `threads` workers (0 = hardware
/// concurrency); the result does not depend on the thread count.
std::vector<ScoredInstance> score_instances(const PviModels& models,
                                            const std::vector<PviInstance>& instances,
                                            std::size_t threads = 0);
ScoredSet score_corpus(const PviModels& models, const corpus::DialogueCorpus& corpus,
                       std::size_t context_window = 3, std::size_t threads = 0);

/// Mean PVI. Throws ConfigError when empty.
double v_information(const std::vector<ScoredInstance>& instances);

struct FlagOptions {
  std::optional<double> threshold;
  std::optional<double> fraction;
};

/// Sets `flagged` on every instance and returns the flagged indices, most
/// negative first. Threshold mode flags pvi < threshold. Fraction mode flags
/// the ceil(fraction * N) most negative instances among those with pvi < 0.
/// Throws ConfigError unless exactly one criterion is set.
std::vector<std::size_t> flag(std::vector<ScoredInstance>& instances, const FlagOptions& options);

struct Replacement {
  corpus::SessionKey victim_key;
  int victim_turn = 0;
  double victim_pvi = 0;
  std::optional<corpus::SessionKey> donor_key;
  std::optional<int> donor_turn;
  std::optional<double> cosine;
  std::optional<double> donor_pvi;
};

struct CurationResult {
  corpus::DialogueCorpus corpus;
  std::vector<Replacement> log;
};

/// The coach turn closest before patient turn `turn_index`, if any.
const corpus::Turn* preceding_coach_turn(const corpus::WeekSession& session, int turn_index);

/// Flags instances per `options`, then replaces each flagged response with
/// the response of the positive-PVI instance from another session whose
/// preceding coach turn is nearest by cosine (ties: lowest key and turn).
/// Flagged instances without a donor stay and are logged with a null donor.
CurationResult low_pvi_replace(const corpus::DialogueCorpus& corpus,
                               std::vector<ScoredInstance> instances,
                               const seqmodel::EmbeddingProvider& embedder,
                               const FlagOptions& options);

void write_scores_jsonl(const std::vector<ScoredInstance>& instances, std::ostream& out);
std::vector<ScoredInstance> read_scores_jsonl(std::istream& in);
void write_replacements_jsonl(const std::vector<Replacement>& log, std::ostream& out);

}  // namespace coachpipe::pvi
