#include "coachpipe/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "coachpipe/text.hpp"

namespace coachpipe::corpus {

namespace {

using nlohmann::json;

constexpr int kFitbitSlackDays = 7;

bool digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) return false;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

int number_at(std::string_view s, std::size_t pos, std::size_t n) {
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) v = v * 10 + (s[i] - '0');
  return v;
}

std::optional<std::chrono::sys_days> parse_date(std::string_view s) {
  if (s.size() < 10 || !digits(s, 0, 4) || s[4] != '-' || !digits(s, 5, 2) || s[7] != '-' ||
      !digits(s, 8, 2))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year(number_at(s, 0, 4)),
                                  std::chrono::month(number_at(s, 5, 2)),
                                  std::chrono::day(number_at(s, 8, 2))};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days(ymd);
}

void validate_session(const WeekSession& s, const CorpusOptions& options) {
  auto fail = [&](const std::string& field, const std::string& msg) {
    throw ValidationError(field, to_string(s.key()) + ": " + msg);
  };
  if (s.conversation_id.empty()) fail("conversation_id", "must be non-empty");
  if (s.patient_id.empty()) fail("patient_id", "must be non-empty");
  if (s.coach_id.empty()) fail("coach_id", "must be non-empty");
  if (s.week < 1 || s.week > options.max_week)
    fail("week", "must lie in [1, " + std::to_string(options.max_week) + "]");
  if (s.turns.empty()) fail("turn_index", "session has no turns");
  for (std::size_t i = 0; i < s.turns.size(); ++i) {
    const Turn& t = s.turns[i];
    if (i > 0 && t.turn_index <= s.turns[i - 1].turn_index)
      fail("turn_index", "must be strictly increasing (saw " + std::to_string(t.turn_index) + ")");
    if (!is_iso8601_datetime(t.timestamp))
      fail("timestamp", "'" + t.timestamp + "' is not an ISO-8601 datetime");
    if (text::is_blank(t.text)) fail("text", "turn " + std::to_string(t.turn_index) + " is blank");
  }
  if (s.gold_frame && !s.gold_goal_text)
    fail("gold_goal_text", "required when gold_frame is present");
  if (s.gold_goal_text && s.gold_goal_text->find("||") != std::string::npos)
    fail("gold_goal_text", "must not contain '||'");
  if (!s.fitbit.empty()) {
    auto first = parse_date(s.turns.front().timestamp);
    auto last = parse_date(s.turns.back().timestamp);
    for (const auto& r : s.fitbit) {
      auto d = parse_date(r.date);
      if (!d || r.date.size() != 10) fail("fitbit_date", "'" + r.date + "' is not a date");
      if (r.steps < 0) fail("fitbit_steps", "must be non-negative");
      auto lo = *first - std::chrono::days(kFitbitSlackDays);
      auto hi = *last + std::chrono::days(kFitbitSlackDays);
      if (*d < lo || *d > hi) fail("fitbit_date", r.date + " is outside the session window");
    }
  }
}

// --- JSONL record decoding --------------------------------------------------

const std::set<std::string, std::less<>>& known_fields() {
  static const std::set<std::string, std::less<>> f = {
      "conversation_id", "patient_id",     "coach_id",   "week",
      "turn_index",      "timestamp",      "speaker",    "text",
      "fitbit_date",     "fitbit_steps",   "gold_goal_text", "gold_frame",
      "label_point"};
  return f;
}

std::string get_string(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw ValidationError(field, "missing", line);
  if (!it->is_string()) throw ValidationError(field, "must be a string", line);
  return it->get<std::string>();
}

std::int64_t get_int(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw ValidationError(field, "missing", line);
  if (!it->is_number_integer()) throw ValidationError(field, "must be an integer", line);
  return it->get<std::int64_t>();
}

struct SessionBuilder {
  WeekSession session;
  std::vector<std::pair<int, FitbitRecord>> fitbit;
  std::set<int> seen_turns;
  bool has_gold_text = false;
  bool has_gold_frame = false;
  bool has_label = false;
};

template <typename T>
void merge_session_field(std::optional<T>& slot, T value, bool& seen, const char* field,
                         std::size_t line) {
  if (seen && slot != value)
    throw ValidationError(field, "disagrees with an earlier line of the same session", line);
  slot = std::move(value);
  seen = true;
}

}  // namespace

// --- enums --------------------------------------------------------------------

std::string_view to_string(Speaker s) { return s == Speaker::Coach ? "coach" : "patient"; }
std::string_view to_string(LabelPoint p) {
  return p == LabelPoint::Forward ? "forward" : "backward";
}
std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "train";
}
std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "coach") return Speaker::Coach;
  if (s == "patient") return Speaker::Patient;
  return std::nullopt;
}
std::optional<LabelPoint> parse_label_point(std::string_view s) {
  if (s == "forward") return LabelPoint::Forward;
  if (s == "backward") return LabelPoint::Backward;
  return std::nullopt;
}
std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::string to_string(const SessionKey& key) {
  return key.conversation_id + "/w" + std::to_string(key.week);
}

bool is_iso8601_date(std::string_view s) { return s.size() == 10 && parse_date(s).has_value(); }

bool is_iso8601_datetime(std::string_view s) {
  if (!parse_date(s) || s.size() < 16) return false;
  if (s[10] != 'T' && s[10] != ' ') return false;
  if (!digits(s, 11, 2) || s[13] != ':' || !digits(s, 14, 2)) return false;
  if (number_at(s, 11, 2) > 23 || number_at(s, 14, 2) > 59) return false;
  std::size_t i = 16;
  if (i < s.size() && s[i] == ':') {
    if (!digits(s, i + 1, 2) || number_at(s, i + 1, 2) > 60) return false;
    i += 3;
    if (i < s.size() && s[i] == '.') {
      std::size_t j = i + 1;
      while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
      if (j == i + 1) return false;
      i = j;
    }
  }
  if (i == s.size()) return true;
  if (s[i] == 'Z') return i + 1 == s.size();
  if (s[i] == '+' || s[i] == '-') {
    return s.size() == i + 6 && digits(s, i + 1, 2) && s[i + 3] == ':' && digits(s, i + 4, 2);
  }
  return false;
}

// --- DialogueCorpus -------------------------------------------------------------

DialogueCorpus::DialogueCorpus(std::vector<WeekSession> sessions, CorpusOptions options)
    : sessions_(std::move(sessions)), options_(options) {
  std::sort(sessions_.begin(), sessions_.end(),
            [](const WeekSession& a, const WeekSession& b) { return a.key() < b.key(); });
  for (std::size_t i = 0; i < sessions_.size(); ++i) {
    validate_session(sessions_[i], options_);
    if (i > 0 && sessions_[i].key() == sessions_[i - 1].key())
      throw ValidationError("week", "duplicate session " + to_string(sessions_[i].key()));
  }
}

const WeekSession* DialogueCorpus::find(const SessionKey& key) const {
  auto it = std::lower_bound(sessions_.begin(), sessions_.end(), key,
                             [](const WeekSession& s, const SessionKey& k) { return s.key() < k; });
  if (it == sessions_.end() || it->key() != key) return nullptr;
  return &*it;
}

const WeekSession* DialogueCorpus::previous_week(const WeekSession& session) const {
  if (session.week <= 1) return nullptr;
  return find({session.conversation_id, session.week - 1});
}

void DialogueCorpus::set_split_labels(std::map<SessionKey, Split> labels) {
  for (const auto& s : sessions_) {
    if (!labels.count(s.key()))
      throw ValidationError("split", "session " + to_string(s.key()) + " has no split label");
  }
  for (const auto& [key, _] : labels) {
    if (!find(key)) throw ValidationError("split", "label for unknown session " + to_string(key));
  }
  split_labels_ = std::move(labels);
}

std::optional<Split> DialogueCorpus::split_of(const SessionKey& key) const {
  auto it = split_labels_.find(key);
  if (it == split_labels_.end()) return std::nullopt;
  return it->second;
}

DialogueCorpus DialogueCorpus::subset(Split split) const {
  if (split_labels_.empty() && !sessions_.empty())
    throw ContractError("corpus has no split labels; run split first");
  DialogueCorpus out;
  out.options_ = options_;
  for (const auto& s : sessions_) {
    if (split_labels_.at(s.key()) == split) {
      out.sessions_.push_back(s);
      out.split_labels_.emplace(s.key(), split);
    }
  }
  return out;
}

std::size_t DialogueCorpus::total_turns() const {
  std::size_t n = 0;
  for (const auto& s : sessions_) n += s.turns.size();
  return n;
}

// --- ingest / emit ----------------------------------------------------------------

DialogueCorpus ingest(std::istream& in, CorpusOptions options, const goalkit::Schema& schema) {
  std::map<SessionKey, SessionBuilder> builders;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    for (const auto& [k, _] : j.items()) {
      if (!known_fields().count(k)) throw ValidationError(k, "unknown field", line_no);
    }

    SessionKey key{get_string(j, "conversation_id", line_no),
                   static_cast<int>(get_int(j, "week", line_no))};
    Turn turn;
    auto turn_index = get_int(j, "turn_index", line_no);
    if (turn_index < 0 || turn_index > 1'000'000'000)
      throw ValidationError("turn_index", "out of range", line_no);
    turn.turn_index = static_cast<int>(turn_index);
    turn.timestamp = get_string(j, "timestamp", line_no);
    if (!is_iso8601_datetime(turn.timestamp))
      throw ValidationError("timestamp", "'" + turn.timestamp + "' is not an ISO-8601 datetime",
                            line_no);
    std::string speaker = get_string(j, "speaker", line_no);
    auto sp = parse_speaker(speaker);
    if (!sp) throw ValidationError("speaker", "must be 'coach' or 'patient'", line_no);
    turn.speaker = *sp;
    turn.text = get_string(j, "text", line_no);
    if (text::is_blank(turn.text)) throw ValidationError("text", "must be non-empty", line_no);

    auto [it, inserted] = builders.try_emplace(key);
    SessionBuilder& b = it->second;
    std::string patient = get_string(j, "patient_id", line_no);
    std::string coach = get_string(j, "coach_id", line_no);
    if (inserted) {
      b.session.conversation_id = key.conversation_id;
      b.session.week = key.week;
      b.session.patient_id = patient;
      b.session.coach_id = coach;
    } else {
      if (b.session.patient_id != patient)
        throw ValidationError("patient_id", "disagrees with an earlier line of the same session",
                              line_no);
      if (b.session.coach_id != coach)
        throw ValidationError("coach_id", "disagrees with an earlier line of the same session",
                              line_no);
    }
    if (!b.seen_turns.insert(turn.turn_index).second)
      throw ValidationError("turn_index",
                            "duplicate turn " + std::to_string(turn.turn_index) + " in " +
                                to_string(key),
                            line_no);

    bool has_date = j.contains("fitbit_date");
    bool has_steps = j.contains("fitbit_steps");
    if (has_date != has_steps)
      throw ValidationError(has_date ? "fitbit_steps" : "fitbit_date",
                            "fitbit_date and fitbit_steps must appear together", line_no);
    if (has_date) {
      FitbitRecord r{get_string(j, "fitbit_date", line_no), get_int(j, "fitbit_steps", line_no)};
      if (!is_iso8601_date(r.date))
        throw ValidationError("fitbit_date", "'" + r.date + "' is not a date", line_no);
      if (r.steps < 0) throw ValidationError("fitbit_steps", "must be non-negative", line_no);
      b.fitbit.emplace_back(turn.turn_index, std::move(r));
    }
    if (j.contains("gold_goal_text")) {
      merge_session_field(b.session.gold_goal_text, get_string(j, "gold_goal_text", line_no),
                          b.has_gold_text, "gold_goal_text", line_no);
    }
    if (j.contains("gold_frame")) {
      goalkit::GoalFrame frame;
      try {
        frame = goalkit::frame_from_json(j["gold_frame"], schema);
      } catch (const ValidationError& e) {
        throw ValidationError("gold_frame", e.what(), line_no);
      }
      merge_session_field(b.session.gold_frame, std::move(frame), b.has_gold_frame, "gold_frame",
                          line_no);
    }
    if (j.contains("label_point")) {
      auto lp = parse_label_point(get_string(j, "label_point", line_no));
      if (!lp) throw ValidationError("label_point", "must be 'forward' or 'backward'", line_no);
      merge_session_field(b.session.label_point, *lp, b.has_label, "label_point", line_no);
    }
    b.session.turns.push_back(std::move(turn));
  }

  std::vector<WeekSession> sessions;
  sessions.reserve(builders.size());
  for (auto& [key, b] : builders) {
    std::sort(b.session.turns.begin(), b.session.turns.end(),
              [](const Turn& x, const Turn& y) { return x.turn_index < y.turn_index; });
    std::stable_sort(b.fitbit.begin(), b.fitbit.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (auto& [_, r] : b.fitbit) b.session.fitbit.push_back(std::move(r));
    sessions.push_back(std::move(b.session));
  }
  return DialogueCorpus(std::move(sessions), options);
}

DialogueCorpus ingest_file(const std::filesystem::path& path, CorpusOptions options,
                           const goalkit::Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return ingest(in, options, schema);
}

void emit(const DialogueCorpus& corpus, std::ostream& out) {
  for (const auto& s : corpus.sessions()) {
    if (s.fitbit.size() > s.turns.size())
      throw ValidationError("fitbit_date", to_string(s.key()) +
                                               ": more fitbit records than turns cannot be emitted");
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
      const Turn& t = s.turns[i];
      nlohmann::ordered_json j;
      j["conversation_id"] = s.conversation_id;
      j["patient_id"] = s.patient_id;
      j["coach_id"] = s.coach_id;
      j["week"] = s.week;
      j["turn_index"] = t.turn_index;
      j["timestamp"] = t.timestamp;
      j["speaker"] = to_string(t.speaker);
      j["text"] = t.text;
      if (i < s.fitbit.size()) {
        j["fitbit_date"] = s.fitbit[i].date;
        j["fitbit_steps"] = s.fitbit[i].steps;
      }
      if (s.gold_goal_text) j["gold_goal_text"] = *s.gold_goal_text;
      if (s.gold_frame) {
        nlohmann::ordered_json frame = nlohmann::ordered_json::object();
        for (const auto& [k, v] : s.gold_frame->slots()) frame[k] = v;
        j["gold_frame"] = std::move(frame);
      }
      if (s.label_point) j["label_point"] = to_string(*s.label_point);
      out << j.dump() << '\n';
    }
  }
}

void emit_file(const DialogueCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  emit(corpus, out);
}

// --- split ------------------------------------------------------------------------

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitPolicy& policy) {
  std::array<double, 3> f = {policy.train, policy.dev, policy.test};
  for (double x : f) {
    if (!(x >= 0.0) || x > 1.0) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  std::size_t nonzero = std::count_if(f.begin(), f.end(), [](double x) { return x > 0; });
  if (n < nonzero)
    throw ConfigError("corpus has " + std::to_string(n) + " conversations but " +
                      std::to_string(nonzero) + " splits were requested");

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = f[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];

  // A requested split must not come out empty: borrow from the largest.
  for (int i = 0; i < 3; ++i) {
    if (f[i] > 0 && counts[i] == 0) {
      auto donor = std::max_element(counts.begin(), counts.end()) - counts.begin();
      --counts[donor];
      ++counts[i];
    }
  }
  return counts;
}

DialogueCorpus split(const DialogueCorpus& corpus, const SplitPolicy& policy,
                     std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& s : corpus.sessions()) {
    if (ids.empty() || ids.back() != s.conversation_id) ids.push_back(s.conversation_id);
  }
  auto counts = split_counts(ids.size(), policy);
  std::mt19937_64 rng(seed);
  text::shuffle(ids, rng);

  std::map<std::string, Split, std::less<>> by_conversation;
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < counts[i]; ++c) {
      by_conversation[ids[pos++]] = static_cast<Split>(i);
    }
  }
  std::map<SessionKey, Split> labels;
  for (const auto& s : corpus.sessions()) labels[s.key()] = by_conversation.at(s.conversation_id);
  DialogueCorpus out = corpus;
  out.set_split_labels(std::move(labels));
  return out;
}

nlohmann::json splits_to_json(const DialogueCorpus& corpus) {
  json sessions = json::array();
  for (const auto& [key, split] : corpus.split_labels()) {
    sessions.push_back(
        {{"conversation_id", key.conversation_id}, {"week", key.week}, {"split", to_string(split)}});
  }
  return {{"sessions", sessions}};
}

void apply_splits(DialogueCorpus& corpus, const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("sessions") || !j["sessions"].is_array())
    throw ValidationError("sessions", "splits document must hold a 'sessions' array");
  std::map<SessionKey, Split> labels;
  for (const auto& e : j["sessions"]) {
    if (!e.is_object()) throw ValidationError("sessions", "entries must be objects");
    SessionKey key{get_string(e, "conversation_id", 0), static_cast<int>(get_int(e, "week", 0))};
    auto s = parse_split(get_string(e, "split", 0));
    if (!s) throw ValidationError("split", "must be train, dev or test");
    labels[key] = *s;
  }
  corpus.set_split_labels(std::move(labels));
}

// --- stats --------------------------------------------------------------------------

CorpusStats stats(const DialogueCorpus& corpus) {
  if (corpus.empty()) throw ValidationError("sessions", "statistics of an empty corpus");
  CorpusStats st;
  std::set<std::string> patients, coaches;
  st.min_week = corpus.sessions().front().week;
  st.max_week = st.min_week;
  for (const auto& s : corpus.sessions()) {
    patients.insert(s.patient_id);
    coaches.insert(s.coach_id);
    st.min_week = std::min(st.min_week, s.week);
    st.max_week = std::max(st.max_week, s.week);
    st.total_turns += s.turns.size();
    for (const auto& t : s.turns) {
      (t.speaker == Speaker::Patient ? st.patient_turns : st.coach_turns) += 1;
    }
  }
  st.patients = patients.size();
  st.coaches = coaches.size();
  st.sessions = corpus.size();
  st.mean_turns_per_session =
      static_cast<double>(st.total_turns) / static_cast<double>(st.sessions);
  return st;
}

nlohmann::json to_json(const CorpusStats& s) {
  return {{"patients", s.patients},
          {"coaches", s.coaches},
          {"min_week", s.min_week},
          {"max_week", s.max_week},
          {"sessions", s.sessions},
          {"total_turns", s.total_turns},
          {"patient_turns", s.patient_turns},
          {"coach_turns", s.coach_turns},
          {"mean_turns_per_session", s.mean_turns_per_session}};
}

}  // namespace coachpipe::corpus
