#pragma once

// Evaluation metrics (frame correctness, ROUGE, corpus BLEU, perplexity,
// greedy-matching similarity F1), report aggregation and A/B review export.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/goalkit.hpp"
#include "coachpipe/seqmodel.hpp"

namespace coachpipe::evalkit {

/// Lower-cases ASCII, splits on ASCII characters that are not letters or
/// digits. Non-ASCII bytes (emoji, accents) stay inside tokens.
std::vector<std::string> metric_tokens(std::string_view text);

// --- frame correctness --------------------------------------------------------------

/// True when every schema slot agrees after canonicalization (absent on both
/// sides counts as agreement).
bool frame_matches(const goalkit::GoalFrame& predicted, const goalkit::GoalFrame& gold,
                   const goalkit::Schema& schema = goalkit::Schema::default_schema());

double frame_correctness(const std::vector<std::string>& predictions,
                         const std::vector<goalkit::GoalFrame>& golds,
                         const goalkit::Schema& schema = goalkit::Schema::default_schema());

// --- ROUGE --------------------------------------------------------------------------

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

enum class RougeMetric { RougeL, Rouge1, Rouge2 };
std::optional<RougeMetric> parse_rouge_metric(std::string_view name);
std::string_view to_string(RougeMetric m);

/// Both sides empty scores 1; exactly one empty scores 0.
PRF rouge_n(std::string_view candidate, std::string_view reference, int n);
PRF rouge_l(std::string_view candidate, std::string_view reference);
double rouge(RougeMetric metric, std::string_view candidate, std::string_view reference);

// --- BLEU ---------------------------------------------------------------------------

/// Sufficient statistics of one pair; corpus BLEU sums them.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(std::string_view candidate, std::string_view reference);

struct BleuOptions {
  /// Add-one smoothing on orders 2-4. Diagnostics only; reports use none.
  bool smooth = false;
};

/// BLEU-n (n = 1..4) on the 0-100 scale from summed statistics.
double bleu_n(const BleuStats& stats, int n, const BleuOptions& options = {});
/// Mean of BLEU-1..4 from summed statistics.
double bleu_avg(const BleuStats& stats, const BleuOptions& options = {});
/// Corpus-level mean of BLEU-1..4. Throws ConfigError for empty or unequal inputs.
double bleu_avg(const std::vector<std::string>& candidates,
                const std::vector<std::string>& references, const BleuOptions& options = {});

// --- perplexity -----------------------------------------------------------------------

struct LikelihoodStats {
  double nll_bits = 0;
  std::size_t tokens = 0;
};

/// Token log-likelihood of `response` under `scorer` with an empty source.
LikelihoodStats likelihood(const seqmodel::SequenceModel& scorer, std::string_view response);
double perplexity(const LikelihoodStats& stats);
/// 2^(mean negative log2-likelihood per token). The scorer must be frozen.
double perplexity(const std::vector<std::string>& responses,
                  const seqmodel::SequenceModel& scorer);

// --- similarity F1 --------------------------------------------------------------------

/// Pairwise token similarity in [0, 1].
class TokenSimilarity {
 public:
  virtual ~TokenSimilarity() = default;
  virtual std::string name() const = 0;
  virtual double similarity(std::string_view a, std::string_view b) const = 0;
};

class ExactMatchSimilarity final : public TokenSimilarity {
 public:
  std::string name() const override { return "exact"; }
  double similarity(std::string_view a, std::string_view b) const override {
    return a == b ? 1.0 : 0.0;
  }
};

/// Greedy matching: precision averages each candidate token's best match,
/// recall each reference token's.
PRF similarity_prf(std::string_view candidate, std::string_view reference,
                   const TokenSimilarity& scorer);
/// Mean F1 over pairs. Throws ConfigError when `scorer` is null.
double similarity_f1(const std::vector<std::string>& candidates,
                     const std::vector<std::string>& references, const TokenSimilarity* scorer);

// --- reports ------------------------------------------------------------------------

struct ExampleRecord {
  std::string id;
  std::string candidate;
  std::string reference;
  BleuStats bleu;
  std::optional<LikelihoodStats> likelihood;
  std::optional<double> similarity_f1;
  std::optional<bool> frame_correct;
};

struct EvalReport {
  std::optional<double> frame_correctness;
  std::optional<double> bleu_avg;
  std::optional<double> perplexity;
  std::optional<double> similarity_f1;
  std::vector<ExampleRecord> per_example;

  nlohmann::json to_json() const;
};

/// Aggregates are always derived from the records, so a report can be
/// recomputed from its own per-example section.
EvalReport aggregate(std::vector<ExampleRecord> records);

struct ResponseEvalInput {
  std::vector<std::string> ids;
  std::vector<std::string> candidates;
  std::vector<std::string> references;
};

/// Fills BLEU statistics, likelihoods (when `scorer` is given) and similarity
/// (when `similarity` is given) per example, then aggregates.
EvalReport evaluate_responses(const ResponseEvalInput& input,
                              const seqmodel::SequenceModel* scorer,
                              const TokenSimilarity* similarity);

// --- A/B export -----------------------------------------------------------------------

struct ABRecord {
  std::string item_id;
  std::string context;
  std::string response_1;
  std::string response_2;
  /// "AB": response_1 is system A; "BA": response_1 is system B.
  std::string blinding_key;
};

std::vector<ABRecord> export_ab_pairs(const std::vector<std::string>& system_a,
                                      const std::vector<std::string>& system_b,
                                      const std::vector<std::string>& contexts,
                                      std::uint64_t seed);
void write_ab_jsonl(const std::vector<ABRecord>& records, std::ostream& out);
std::vector<ABRecord> read_ab_jsonl(std::istream& in);

/// Reviewer choice for one item, in blinded terms.
enum class ABChoice { Response1, Response2, Tie, Neither };
std::optional<ABChoice> parse_ab_choice(std::string_view s);

struct ABVote {
  std::string item_id;
  ABChoice choice = ABChoice::Tie;
};

std::vector<ABVote> read_votes_jsonl(std::istream& in);

struct ABSummary {
  std::size_t items = 0;
  std::size_t a_wins = 0;
  std::size_t b_wins = 0;
  std::size_t ties = 0;
  std::size_t neither = 0;
  /// (a_wins - b_wins) / items * 100.
  double preference_delta = 0;

  nlohmann::json to_json() const;
};

/// Unblinds votes against the exported records. Unknown item ids throw
/// ValidationError.
ABSummary summarize_votes(const std::vector<ABRecord>& records, const std::vector<ABVote>& votes);

}  // namespace coachpipe::evalkit
