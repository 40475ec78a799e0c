#pragma once

// Week-partitioned coaching transcripts: data model, JSONL ingest/emit,
// conversation-level splits and summary statistics.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/errors.hpp"
#include "coachpipe/goalkit.hpp"

namespace coachpipe::corpus {

enum class Speaker { Coach, Patient };
enum class LabelPoint { Forward, Backward };
enum class Split { Train, Dev, Test };

std::string_view to_string(Speaker s);
std::string_view to_string(LabelPoint p);
std::string_view to_string(Split s);
std::optional<Speaker> parse_speaker(std::string_view s);
std::optional<LabelPoint> parse_label_point(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

struct Turn {
  int turn_index = 0;
  /// ISO-8601 datetime, stored verbatim.
  std::string timestamp;
  Speaker speaker = Speaker::Coach;
  std::string text;
  /// Discrete unit id assigned by a codebook; never serialized.
  std::optional<int> unit_id;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct FitbitRecord {
  /// YYYY-MM-DD
  std::string date;
  std::int64_t steps = 0;

  friend bool operator==(const FitbitRecord&, const FitbitRecord&) = default;
};

struct SessionKey {
  std::string conversation_id;
  int week = 0;

  friend auto operator<=>(const SessionKey&, const SessionKey&) = default;
  friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

std::string to_string(const SessionKey& key);

struct WeekSession {
  std::string conversation_id;
  std::string patient_id;
  std::string coach_id;
  int week = 1;
  std::vector<Turn> turns;
  std::vector<FitbitRecord> fitbit;
  std::optional<std::string> gold_goal_text;
  std::optional<goalkit::GoalFrame> gold_frame;
  std::optional<LabelPoint> label_point;

  SessionKey key() const { return {conversation_id, week}; }
  friend bool operator==(const WeekSession&, const WeekSession&) = default;
};

struct CorpusOptions {
  int max_week = 8;

  friend bool operator==(const CorpusOptions&, const CorpusOptions&) = default;
};

/// Validated, key-ordered collection of sessions.
class DialogueCorpus {
 public:
  DialogueCorpus() = default;
  /// Validates every session and sorts by (conversation_id, week). Throws
  /// ValidationError on the first breach.
  explicit DialogueCorpus(std::vector<WeekSession> sessions, CorpusOptions options = {});

  const std::vector<WeekSession>& sessions() const noexcept { return sessions_; }
  std::vector<WeekSession>& mutable_sessions() noexcept { return sessions_; }
  std::size_t size() const noexcept { return sessions_.size(); }
  bool empty() const noexcept { return sessions_.empty(); }
  const CorpusOptions& options() const noexcept { return options_; }

  const WeekSession* find(const SessionKey& key) const;
  /// Session of the same conversation one week earlier, if present.
  const WeekSession* previous_week(const WeekSession& session) const;

  const std::map<SessionKey, Split>& split_labels() const noexcept { return split_labels_; }
  void set_split_labels(std::map<SessionKey, Split> labels);
  std::optional<Split> split_of(const SessionKey& key) const;
  /// Sessions labelled `split`, keeping labels. Throws ContractError when the
  /// corpus has no split labels.
  DialogueCorpus subset(Split split) const;

  std::size_t total_turns() const;

  friend bool operator==(const DialogueCorpus&, const DialogueCorpus&) = default;

 private:
  std::vector<WeekSession> sessions_;
  std::map<SessionKey, Split> split_labels_;
  CorpusOptions options_;
};

/// Reads one turn record per line. Blank lines are skipped.
DialogueCorpus ingest(std::istream& in, CorpusOptions options = {},
                      const goalkit::Schema& schema = goalkit::Schema::default_schema());
DialogueCorpus ingest_file(const std::filesystem::path& path, CorpusOptions options = {},
                           const goalkit::Schema& schema = goalkit::Schema::default_schema());

/// Writes the JSONL form; ingest(emit(c)) == c apart from unit ids and
/// split labels. Fitbit records ride on the first turns of their session.
void emit(const DialogueCorpus& corpus, std::ostream& out);
void emit_file(const DialogueCorpus& corpus, const std::filesystem::path& path);

struct SplitPolicy {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

/// Conversation-level split with largest-remainder rounding over a seeded
/// shuffle of the sorted conversation ids. Every split with a non-zero
/// fraction receives at least one conversation.
DialogueCorpus split(const DialogueCorpus& corpus, const SplitPolicy& policy,
                     std::uint64_t seed);

/// Number of conversations per split under `policy`, in train/dev/test order.
std::array<std::size_t, 3> split_counts(std::size_t conversations, const SplitPolicy& policy);

nlohmann::json splits_to_json(const DialogueCorpus& corpus);
/// Applies labels from a splits document; every session must be labelled.
void apply_splits(DialogueCorpus& corpus, const nlohmann::json& j);

struct CorpusStats {
  std::size_t patients = 0;
  std::size_t coaches = 0;
  int min_week = 0;
  int max_week = 0;
  std::size_t sessions = 0;
  std::size_t total_turns = 0;
  std::size_t patient_turns = 0;
  std::size_t coach_turns = 0;
  /// Mean turns per (week, patient) session.
  double mean_turns_per_session = 0;
};

CorpusStats stats(const DialogueCorpus& corpus);
nlohmann::json to_json(const CorpusStats& s);

/// Checks an ISO-8601 datetime: YYYY-MM-DDTHH:MM[:SS[.fff]][Z|+HH:MM].
bool is_iso8601_datetime(std::string_view s);
bool is_iso8601_date(std::string_view s);

}  // namespace coachpipe::corpus
