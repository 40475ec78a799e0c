#pragma once

// Independent reference computations used to cross-check the library.
// Nothing here calls into the metric code it is checked against.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "coachpipe/goalkit.hpp"
#include "coachpipe/seqmodel.hpp"

namespace coachpipe::testing {

/// Lower-case ASCII; bytes >= 0x80 and ASCII letters/digits form tokens.
std::vector<std::string> oracle_tokens(const std::string& text);

struct OraclePRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Clipped n-gram overlap found by greedy one-to-one pairing of equal
/// n-grams (no hashing).
OraclePRF oracle_rouge_n(const std::string& candidate, const std::string& reference, int n);
/// LCS by exhaustive memoized recursion.
OraclePRF oracle_rouge_l(const std::string& candidate, const std::string& reference);

/// Corpus BLEU-1..4 mean on the 0-100 scale, no smoothing.
double oracle_bleu_avg(const std::vector<std::string>& candidates,
                       const std::vector<std::string>& references);

/// Random sentence over a small word pool, so n-gram overlaps are common.
std::string random_sentence(std::mt19937_64& rng, std::size_t max_words);

/// Each slot present with probability `density`, value drawn from its lexicon.
goalkit::GoalFrame random_frame(std::mt19937_64& rng, double density = 0.5,
                                const goalkit::Schema& schema = goalkit::Schema::default_schema());

/// Hand-specified next-token model: each (source, prefix length) maps to a
/// fixed distribution; unspecified positions are uniform.
class TableModel final : public seqmodel::SequenceModel {
 public:
  explicit TableModel(seqmodel::Vocabulary vocab) : SequenceModel(std::move(vocab)) {}

  /// Probability 1 on `target` tokens then EOS, for the given source.
  void make_deterministic(const std::string& source, const std::string& target);

  std::string backend_id() const override { return "table"; }
  std::unique_ptr<seqmodel::SourceContext> condition(std::string_view source) const override;
  void next_log_probs(const seqmodel::SourceContext& ctx, std::span<const int> prefix,
                      std::vector<double>& out) const override;
  std::unique_ptr<seqmodel::SequenceModel> clone() const override;

 protected:
  seqmodel::FitReport do_fit(const std::vector<seqmodel::TrainPair>&, const seqmodel::TrainConfig&) override;
  void do_apply_gradients(std::span<const seqmodel::SequenceGradient>, double) override {}
  void save_params(std::ostream&) const override {}
  nlohmann::json meta() const override { return nlohmann::json::object(); }

 private:
  std::vector<std::pair<std::string, std::vector<int>>> rows_;
};

}  // namespace coachpipe::testing
