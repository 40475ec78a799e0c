#pragma once

// Synthetic corpora and point sets with known structure, used by tests,
// benchmarks and the bundled CLI fixture.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coachpipe/corpus.hpp"
#include "coachpipe/goalkit.hpp"

namespace coachpipe::fixtures {

/// Size profile of a corpus: who talks, over which weeks, how much.
struct CorpusShape {
  std::string prefix;
  std::size_t patients = 0;
  std::size_t coaches = 0;
  int first_week = 1;
  int last_week = 1;
  std::size_t sessions = 0;
  std::size_t total_turns = 0;
};

/// 22 patients, 4 coaches, weeks 2-8, 102 sessions, 1880 turns.
CorpusShape ours_shape();
/// 27 patients, 1 coach, weeks 1-4, 107 sessions, 2853 turns.
CorpusShape dataset1_shape();

/// Filler dialogue with exactly the requested shape. Every patient covers a
/// contiguous run of weeks; together they span first_week..last_week.
corpus::DialogueCorpus shaped_corpus(const CorpusShape& shape, std::uint64_t seed = 0);

struct PositiveRecord {
  corpus::SessionKey key;
  std::string output;
};

void write_positives_jsonl(const std::vector<PositiveRecord>& positives, std::ostream& out);

struct CoachingOptions {
  std::size_t conversations = 12;
  int weeks = 4;
  std::uint64_t seed = 0;
  /// Instructions drawn for weeks after the first (the first week is always
  /// Pass). Empty means the full instruction set.
  std::vector<goalkit::Instruction> instructions;
  /// Chance that the patient's closing reply is an off-topic message.
  double odd_reply_rate = 0.0;
};

struct CoachingFixture {
  corpus::DialogueCorpus corpus;
  /// Gold protocol output per session.
  std::vector<PositiveRecord> positives;
  /// Gold instruction per session, aligned with corpus.sessions().
  std::vector<goalkit::Instruction> instructions;
};

/// Templated weekly goal-setting dialogues. Each week the patient states a
/// partial goal with a cue phrase for the instruction; the gold goal is the
/// instruction executed against the previous week's gold frame.
CoachingFixture coaching_corpus(const CoachingOptions& options);

/// Two-week conversations whose second week always needs Copy {Days}.
CoachingFixture copy_days_task(std::size_t conversations, std::uint64_t seed);

/// Coach question / patient answer sessions. With `deterministic` each of
/// the questions has one fixed answer; otherwise answers are drawn
/// uniformly from a small set, independent of the question.
corpus::DialogueCorpus qa_corpus(std::size_t patient_turns, bool deterministic, std::uint64_t seed,
                                 std::size_t pairs_per_session = 5);

/// 100 patient turns of deterministic question answering with `odd_turns`
/// answers swapped for off-topic replies.
corpus::DialogueCorpus curation_corpus(std::size_t odd_turns, std::uint64_t seed);

struct LabeledPoints {
  std::vector<std::vector<double>> points;
  std::vector<int> labels;
};

/// `clusters` tight Gaussian blobs around well-separated centers.
LabeledPoints separable_clusters(std::size_t clusters, std::size_t per_cluster, std::size_t dimension,
                                 std::uint64_t seed);

}  // namespace coachpipe::fixtures
