#include "coachpipe/fixtures.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "coachpipe/summarizer.hpp"
#include "coachpipe/text.hpp"
#include "goalkit_internal.hpp"

namespace coachpipe::fixtures {

namespace {

using goalkit::GoalFrame;
using goalkit::Instruction;
using goalkit::SlotGroup;

std::string numbered(std::string_view prefix, std::size_t n, int width = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return std::string(prefix) + buf;
}

std::string date_string(int day_offset) {
  using namespace std::chrono;
  year_month_day ymd{sys_days{year{2023} / January / 2} + days{day_offset}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

// Builds one week of dialogue with monotone turn indices and timestamps.
class SessionBuilder {
 public:
  SessionBuilder(std::string conversation, std::string patient, std::string coach, int week) {
    s_.conversation_id = std::move(conversation);
    s_.patient_id = std::move(patient);
    s_.coach_id = std::move(coach);
    s_.week = week;
    day_ = 7 * (week - 1);
  }

  SessionBuilder& say(corpus::Speaker who, std::string text) {
    int i = static_cast<int>(s_.turns.size());
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%02d:%02d:00", 9 + i / 60, i % 60);
    s_.turns.push_back({i, date_string(day_) + buf, who, std::move(text), std::nullopt});
    return *this;
  }
  SessionBuilder& coach(std::string text) { return say(corpus::Speaker::Coach, std::move(text)); }
  SessionBuilder& patient(std::string text) { return say(corpus::Speaker::Patient, std::move(text)); }
  SessionBuilder& fitbit(int day, std::int64_t steps) {
    s_.fitbit.push_back({date_string(day_ + day), steps});
    return *this;
  }
  corpus::WeekSession& session() { return s_; }
  corpus::WeekSession build() { return std::move(s_); }

 private:
  corpus::WeekSession s_;
  int day_ = 0;
};

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[text::uniform_index(rng, v.size())];
}

const std::vector<std::string> kOddAnswers = {
    "This is King. Looking at Youtube.", "lol my cat just sat on the keyboard",
    "Who is this again?", "pizza tonight 🍕", "sorry wrong chat", "brb my phone is dying",
    "haha", "I bought new shoes yesterday"};

const std::vector<std::string> kNames = {
    "Alex", "Sam",   "Jordan", "Casey", "Riley", "Morgan", "Taylor", "Jamie",
    "Drew", "Avery", "Quinn",  "Parker", "Reese", "Rowan", "Sage",   "Emery",
    "Kai",  "Noel",  "Robin",  "Shay",  "Toni",  "Blair",  "Dana",   "Lee"};

}  // namespace

// --- shaped corpora -------------------------------------------------------------------

CorpusShape ours_shape() { return {"ours", 22, 4, 2, 8, 102, 1880}; }
CorpusShape dataset1_shape() { return {"d1", 27, 1, 1, 4, 107, 2853}; }

corpus::DialogueCorpus shaped_corpus(const CorpusShape& shape, std::uint64_t seed) {
  const int span = shape.last_week - shape.first_week + 1;
  if (shape.patients == 0 || shape.coaches == 0 || span < 1)
    throw ConfigError("shaped_corpus: empty shape");
  if (shape.sessions < shape.patients || shape.sessions > shape.patients * static_cast<std::size_t>(span))
    throw ConfigError("shaped_corpus: sessions must lie in [patients, patients * weeks]");
  if (shape.total_turns < shape.sessions) throw ConfigError("shaped_corpus: fewer turns than sessions");

  // Weeks per patient, as even as possible, with patient 0 spanning every week.
  std::vector<std::size_t> weeks(shape.patients, shape.sessions / shape.patients);
  for (std::size_t i = 0; i < shape.sessions % shape.patients; ++i) ++weeks[i];
  for (std::size_t i = 1; i < shape.patients && weeks[0] < static_cast<std::size_t>(span); ++i) {
    while (weeks[i] > 1 && weeks[0] < static_cast<std::size_t>(span)) {
      --weeks[i];
      ++weeks[0];
    }
  }

  const std::vector<std::string> coach_lines = {
      "How are you feeling today?", "Did you get your walk in?", "Great job this week!",
      "What got in the way?", "Let's plan for tomorrow.", "Remember to stretch 🙂"};
  const std::vector<std::string> patient_lines = {
      "Pretty good thanks", "Yes I walked after lunch", "Thank you!", "Work was busy",
      "Sounds good", "Will do 👍"};

  std::mt19937_64 rng(seed);
  std::vector<corpus::WeekSession> sessions;
  const std::size_t base_turns = shape.total_turns / shape.sessions;
  std::size_t extra_turns = shape.total_turns % shape.sessions;
  for (std::size_t p = 0; p < shape.patients; ++p) {
    int start = shape.first_week;
    if (p % 2 == 1) start = shape.last_week - static_cast<int>(weeks[p]) + 1;
    for (std::size_t w = 0; w < weeks[p]; ++w) {
      SessionBuilder b(numbered(shape.prefix + "-conv-", p + 1), numbered("p", p + 1),
                       numbered("c", p % shape.coaches + 1), start + static_cast<int>(w));
      std::size_t n = base_turns + (extra_turns > 0 ? 1 : 0);
      if (extra_turns > 0) --extra_turns;
      for (std::size_t t = 0; t < n; ++t) {
        if (t % 2 == 0)
          b.coach(pick(coach_lines, rng));
        else
          b.patient(pick(patient_lines, rng));
      }
      sessions.push_back(b.build());
    }
  }
  return corpus::DialogueCorpus(std::move(sessions));
}

void write_positives_jsonl(const std::vector<PositiveRecord>& positives, std::ostream& out) {
  for (const auto& p : positives) {
    nlohmann::ordered_json j;
    j["conversation_id"] = p.key.conversation_id;
    j["week"] = p.key.week;
    j["output"] = p.output;
    out << j.dump() << '\n';
  }
}

// --- coaching dialogues ---------------------------------------------------------------

namespace {

using goalkit::detail::DayMask;

const std::vector<std::string> kActivities = {"walk", "jog", "run"};
const std::vector<int> kStepAmounts = {2500, 3000, 4000, 5000, 6000, 7000, 8000, 10000};
const std::vector<DayMask> kDaySets = {0x1F, 0x15, 0x0A, 0x60, 0x07, 0x1C, 0x3E};
const std::vector<std::string> kTimes = {"7 am", "6:30 pm", "before 9 am", "after 5 pm", "12 pm"};

std::string cue(const Instruction& in) {
  if (in.verb() == goalkit::Verb::Pass) return "";
  switch (*in.group()) {
    case SlotGroup::Days:
      return in.verb() == goalkit::Verb::Copy ? "on the same days as last week"
                                              : "in addition to the days from last week";
    case SlotGroup::Times: return "at the same time as last week";
    case SlotGroup::Num:
      return in.verb() == goalkit::Verb::Copy ? "with the same amount as last week"
                                              : "on top of what i did last week";
    case SlotGroup::All: return "and keep the same goal as last week";
  }
  return "";
}

GoalFrame random_frame(std::mt19937_64& rng, bool with_times) {
  GoalFrame f;
  f.set("activity", pick(kActivities, rng));
  f.set("amount", std::to_string(pick(kStepAmounts, rng)) + " steps");
  f.set("days", goalkit::detail::canonical_days(pick(kDaySets, rng)));
  if (with_times) f.set("times", pick(kTimes, rng));
  return f;
}

// Partial frame the patient states for `in` given last week's gold `ref`;
// nullopt when `ref` cannot support the instruction.
std::optional<GoalFrame> partial_for(const Instruction& in, const GoalFrame& ref, std::mt19937_64& rng) {
  GoalFrame f = random_frame(rng, text::uniform01(rng) < 0.6);
  if (in.verb() == goalkit::Verb::Pass) return f;
  switch (*in.group()) {
    case SlotGroup::Days: {
      const std::string* days = ref.get("days");
      if (!days) return std::nullopt;
      if (in.verb() == goalkit::Verb::Copy) {
        f.erase("days");
        return f;
      }
      auto mask = goalkit::detail::parse_day_set(*days);
      if (!mask || *mask == goalkit::detail::kAllDays) return std::nullopt;
      DayMask free = static_cast<DayMask>(goalkit::detail::kAllDays & ~*mask);
      // One or two of the free days, lowest first.
      DayMask extra = 0;
      int want = 1 + static_cast<int>(text::uniform_index(rng, 2));
      for (int d = 0; d < 7 && want > 0; ++d) {
        if (free & (1u << d)) {
          extra |= static_cast<DayMask>(1u << d);
          --want;
        }
      }
      GoalFrame p;
      p.set("activity", ref.get("activity") ? *ref.get("activity") : *f.get("activity"));
      p.set("days", goalkit::detail::canonical_days(extra));
      return p;
    }
    case SlotGroup::Times:
      if (!ref.has("times")) return std::nullopt;
      f.erase("times");
      return f;
    case SlotGroup::Num: {
      const std::string* amount = ref.get("amount");
      if (!amount) return std::nullopt;
      if (in.verb() == goalkit::Verb::Copy) {
        f.erase("amount");
        return f;
      }
      auto a = goalkit::detail::parse_amount(*amount);
      if (!a || a->unit != "steps") return std::nullopt;
      GoalFrame p;
      p.set("activity", ref.get("activity") ? *ref.get("activity") : *f.get("activity"));
      p.set("amount", std::to_string(500 * (1 + text::uniform_index(rng, 4))) + " steps");
      p.set("days", *f.get("days"));
      return p;
    }
    case SlotGroup::All:
      if (ref.empty()) return std::nullopt;
      return GoalFrame{};
  }
  return std::nullopt;
}

std::string statement(const GoalFrame& partial, const Instruction& in, std::mt19937_64& rng) {
  static const std::vector<std::string> openers = {"I want to", "This week I will", "My plan is to",
                                                   "I think I can"};
  std::string s = pick(openers, rng);
  std::string body = goalkit::render(partial);
  if (!body.empty()) s += " " + body;
  std::string c = cue(in);
  if (!c.empty()) s += " " + c;
  return s + ".";
}

}  // namespace

CoachingFixture coaching_corpus(const CoachingOptions& options) {
  if (options.conversations == 0 || options.weeks < 1 || options.weeks > 8)
    throw ConfigError("coaching_corpus: need conversations > 0 and weeks in 1..8");
  std::vector<Instruction> later = options.instructions.empty() ? goalkit::all_instructions()
                                                                : options.instructions;
  const std::vector<std::string> greetings = {"Hi!", "Hello coach", "Hey there", "Good morning 😊"};
  const std::vector<std::string> reviews = {"It went well", "Pretty good, I missed one day",
                                            "Not great, work was busy", "Really good actually!"};
  const std::vector<std::string> praise = {"That sounds like a great plan!",
                                           "Love it. I will check in later this week.",
                                           "Great goal, you can do it!"};
  const std::vector<std::string> closers = {"Thanks!", "Thank you 😊", "Will do", "Sounds good"};

  std::mt19937_64 rng(options.seed);
  CoachingFixture fx;
  std::vector<corpus::WeekSession> sessions;
  for (std::size_t c = 0; c < options.conversations; ++c) {
    const std::string& name = kNames[c % kNames.size()];
    GoalFrame previous;
    for (int week = 1; week <= options.weeks; ++week) {
      Instruction in = Instruction::pass();
      std::optional<GoalFrame> partial;
      if (week == 1) {
        partial = random_frame(rng, true);
      } else {
        std::vector<Instruction> order = later;
        text::shuffle(order, rng);
        for (const auto& cand : order) {
          partial = partial_for(cand, previous, rng);
          if (partial) {
            in = cand;
            break;
          }
        }
        if (!partial) partial = random_frame(rng, true);
      }
      std::string partial_text = goalkit::normalize_text(goalkit::render(*partial));
      auto gold = goalkit::execute(partial_text, in, previous);

      SessionBuilder b(numbered("coach-", c + 1), numbered("p", c + 1), numbered("c", c % 3 + 1), week);
      b.coach("Hi " + name + ", welcome to week " + std::to_string(week) + "!");
      b.patient(pick(greetings, rng));
      if (week > 1) {
        b.coach("How did last week go?");
        b.patient(pick(reviews, rng));
        std::int64_t steps = 1000 * static_cast<std::int64_t>(2 + text::uniform_index(rng, 9));
        b.fitbit(-1, steps);
        if (text::uniform01(rng) < 0.5) {
          b.coach("Your Fitbit shows " + std::to_string(steps) + " steps yesterday, nice work.");
          b.patient("Thanks, I am trying");
        }
        b.coach("What would you like to aim for this week?");
      } else {
        b.coach("Let's set your first goal. What would you like to do this week?");
      }
      b.patient(statement(*partial, in, rng));
      b.coach(pick(praise, rng));
      if (options.odd_reply_rate > 0 && text::uniform01(rng) < options.odd_reply_rate)
        b.patient(pick(kOddAnswers, rng));
      else
        b.patient(pick(closers, rng));
      b.session().gold_goal_text = gold.text;
      b.session().gold_frame = gold.frame;
      b.session().label_point = corpus::LabelPoint::Forward;

      fx.positives.push_back({{numbered("coach-", c + 1), week},
                              summarizer::format_protocol(partial_text, in)});
      sessions.push_back(b.build());
      previous = gold.frame;
    }
  }
  fx.corpus = corpus::DialogueCorpus(std::move(sessions));
  std::map<corpus::SessionKey, Instruction> by_key;
  for (const auto& p : fx.positives) by_key.emplace(p.key, summarizer::parse_protocol(p.output)->instruction);
  std::sort(fx.positives.begin(), fx.positives.end(),
            [](const PositiveRecord& a, const PositiveRecord& b) { return a.key < b.key; });
  for (const auto& s : fx.corpus.sessions()) fx.instructions.push_back(by_key.at(s.key()));
  return fx;
}

CoachingFixture copy_days_task(std::size_t conversations, std::uint64_t seed) {
  CoachingOptions opts;
  opts.conversations = conversations;
  opts.weeks = 2;
  opts.seed = seed;
  opts.instructions = {Instruction::copy(SlotGroup::Days)};
  return coaching_corpus(opts);
}

// --- question answering ------------------------------------------------------------------

namespace {

const std::vector<std::string> kQaActivities = {"walk", "run", "swim", "bike", "yoga", "hike", "dance"};
const std::vector<std::string> kQaFeelings = {"easy", "tiring", "fun", "slow", "great", "hard", "relaxing"};
const std::vector<std::string> kQaDays = {"monday", "tuesday", "wednesday", "thursday",
                                          "friday", "saturday", "sunday"};
const std::vector<std::string> kQaMinutes = {"10", "15", "20", "25", "30", "40", "45"};
const std::vector<std::string> kIndependentAnswers = {"ok", "sounds good", "sure thing", "not sure yet",
                                                      "maybe later", "thanks coach"};

std::string qa_question(std::size_t a, std::size_t d) {
  return "How was your " + kQaActivities[a] + " on " + kQaDays[d] + "?";
}

std::string qa_answer(std::size_t a, std::size_t d) {
  return kQaActivities[a] + " felt " + kQaFeelings[a] + " for " + kQaMinutes[d] + " minutes on " +
         kQaDays[d];
}

}  // namespace

corpus::DialogueCorpus qa_corpus(std::size_t patient_turns, bool deterministic, std::uint64_t seed,
                                 std::size_t pairs_per_session) {
  if (patient_turns == 0 || pairs_per_session == 0) throw ConfigError("qa_corpus: empty corpus");
  std::mt19937_64 rng(seed);
  std::vector<corpus::WeekSession> sessions;
  std::size_t made = 0;
  for (std::size_t s = 0; made < patient_turns; ++s) {
    SessionBuilder b(numbered(deterministic ? "qa-det-" : "qa-ind-", s + 1, 4), numbered("p", s + 1, 4),
                     "c1", 1);
    for (std::size_t k = 0; k < pairs_per_session && made < patient_turns; ++k, ++made) {
      std::size_t a = text::uniform_index(rng, kQaActivities.size());
      std::size_t d = text::uniform_index(rng, kQaDays.size());
      b.coach(qa_question(a, d));
      b.patient(deterministic ? qa_answer(a, d) : pick(kIndependentAnswers, rng));
    }
    sessions.push_back(b.build());
  }
  return corpus::DialogueCorpus(std::move(sessions));
}

corpus::DialogueCorpus curation_corpus(std::size_t odd_turns, std::uint64_t seed) {
  constexpr std::size_t kTurns = 100;
  if (odd_turns > kTurns) throw ConfigError("curation_corpus: more odd turns than turns");
  auto base = qa_corpus(kTurns, true, seed);
  std::vector<std::size_t> slots(kTurns);
  for (std::size_t i = 0; i < kTurns; ++i) slots[i] = i;
  std::mt19937_64 rng(text::mix_seed(seed, 7));
  text::shuffle(slots, rng);
  std::vector<bool> odd(kTurns, false);
  for (std::size_t i = 0; i < odd_turns; ++i) odd[slots[i]] = true;
  std::vector<corpus::WeekSession> sessions = base.sessions();
  std::size_t n = 0;
  for (auto& s : sessions) {
    for (auto& t : s.turns) {
      if (t.speaker != corpus::Speaker::Patient) continue;
      if (odd[n]) t.text = kOddAnswers[n % kOddAnswers.size()];
      ++n;
    }
  }
  return corpus::DialogueCorpus(std::move(sessions));
}

// --- points ---------------------------------------------------------------------------------

LabeledPoints separable_clusters(std::size_t clusters, std::size_t per_cluster, std::size_t dimension,
                                 std::uint64_t seed) {
  if (clusters == 0 || per_cluster == 0 || dimension < clusters)
    throw ConfigError("separable_clusters: need dimension >= clusters > 0");
  std::mt19937_64 rng(seed);
  auto gaussian = [&rng] {
    double u1 = std::max(text::uniform01(rng), 1e-300);
    double u2 = text::uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  LabeledPoints out;
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t i = 0; i < per_cluster; ++i) {
      std::vector<double> p(dimension);
      for (double& x : p) x = 0.1 * gaussian();
      p[c] += 10.0;
      out.points.push_back(std::move(p));
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

}  // namespace coachpipe::fixtures
