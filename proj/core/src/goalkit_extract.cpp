#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <map>

#include "coachpipe/goalkit.hpp"
#include "coachpipe/text.hpp"
#include "goalkit_internal.hpp"

namespace coachpipe::goalkit {

namespace detail {

namespace {
constexpr std::array<std::string_view, 7> kDayNames = {
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};

// Unit surface form -> plural canonical unit. Singular forms are derived.
const std::map<std::string_view, std::string_view>& amount_units() {
  static const std::map<std::string_view, std::string_view> m = {
      {"step", "steps"},     {"steps", "steps"},   {"mile", "miles"},
      {"miles", "miles"},    {"mi", "miles"},      {"km", "km"},
      {"kms", "km"},         {"kilometer", "km"},  {"kilometers", "km"},
      {"lap", "laps"},       {"laps", "laps"},     {"flight", "flights"},
      {"flights", "flights"}, {"floor", "floors"}, {"floors", "floors"},
      {"round", "rounds"},   {"rounds", "rounds"}, {"rep", "reps"},
      {"reps", "reps"}};
  return m;
}

std::string_view singular(std::string_view plural) {
  if (plural == "km") return plural;
  if (plural.size() > 1 && plural.back() == 's') return plural.substr(0, plural.size() - 1);
  return plural;
}
}  // namespace

std::string_view day_name(int index) { return kDayNames.at(index); }

std::string canonical_days(DayMask mask) {
  mask &= kAllDays;
  if (!mask) return {};
  int first = std::countr_zero(static_cast<unsigned>(mask));
  int last = 31 - std::countl_zero(static_cast<unsigned>(mask));
  int count = std::popcount(static_cast<unsigned>(mask));
  if (count >= 3 && count == last - first + 1) {
    return std::string(kDayNames[first]) + "-" + std::string(kDayNames[last]);
  }
  std::string out;
  for (int d = 0; d < 7; ++d) {
    if (mask & (1u << d)) {
      if (!out.empty()) out += ',';
      out += kDayNames[d];
    }
  }
  return out;
}

namespace {
std::optional<int> exact_day(std::string_view s) {
  for (int d = 0; d < 7; ++d) {
    if (kDayNames[d] == s) return d;
  }
  return std::nullopt;
}

DayMask range_mask(int from, int to) {
  DayMask m = 0;
  for (int d = from;; d = (d + 1) % 7) {
    m |= static_cast<DayMask>(1u << d);
    if (d == to) break;
  }
  return m;
}
}  // namespace

std::optional<DayMask> parse_day_set(std::string_view value) {
  auto dash = value.find('-');
  if (dash != std::string_view::npos) {
    auto a = exact_day(value.substr(0, dash));
    auto b = exact_day(value.substr(dash + 1));
    if (!a || !b) return std::nullopt;
    return range_mask(*a, *b);
  }
  DayMask mask = 0;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    auto part = value.substr(start, comma == std::string_view::npos
                                        ? std::string_view::npos
                                        : comma - start);
    auto d = exact_day(part);
    if (!d) return std::nullopt;
    mask |= static_cast<DayMask>(1u << *d);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return mask ? std::optional<DayMask>(mask) : std::nullopt;
}

std::optional<int> parse_day_count(std::string_view value) {
  if (value == "every day") return 7;
  int n = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
  if (ec != std::errc()) return std::nullopt;
  std::string_view rest(ptr, value.data() + value.size() - ptr);
  if (rest == " days a week" || rest == " day a week") return n;
  return std::nullopt;
}

std::optional<Amount> parse_amount(std::string_view value) {
  auto space = value.find(' ');
  if (space == std::string_view::npos) return std::nullopt;
  double number = 0;
  auto num = value.substr(0, space);
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), number);
  if (ec != std::errc() || ptr != num.data() + num.size()) return std::nullopt;
  auto it = amount_units().find(value.substr(space + 1));
  if (it == amount_units().end()) return std::nullopt;
  return Amount{number, std::string(it->second)};
}

std::string format_amount(double number, std::string_view plural_unit) {
  std::string_view unit = number == 1.0 ? singular(plural_unit) : plural_unit;
  return text::format_number(number) + " " + std::string(unit);
}

}  // namespace detail

namespace {

using detail::DayMask;

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::optional<double> parse_number(std::string_view s) {
  if (s.empty() || !is_digit(s.front()) || !is_digit(s.back())) return std::nullopt;
  int dots = 0;
  for (char c : s) {
    if (c == '.') ++dots;
    else if (!is_digit(c)) return std::nullopt;
  }
  if (dots > 1) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  if (s.empty() || s.size() > 6) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <std::size_t N>
bool one_of(std::string_view s, const std::array<std::string_view, N>& set) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

std::optional<int> day_index(std::string_view tok) {
  static const std::map<std::string_view, int> m = {
      {"monday", 0},    {"mon", 0},       {"mondays", 0},   {"tuesday", 1},
      {"tue", 1},       {"tues", 1},      {"tuesdays", 1},  {"wednesday", 2},
      {"wed", 2},       {"weds", 2},      {"wednesdays", 2}, {"thursday", 3},
      {"thu", 3},       {"thur", 3},      {"thurs", 3},     {"thursdays", 3},
      {"friday", 4},    {"fri", 4},       {"fridays", 4},   {"saturday", 5},
      {"sat", 5},       {"saturdays", 5}, {"sunday", 6},    {"sun", 6},
      {"sundays", 6}};
  auto it = m.find(tok);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

/// Token stream with a consumed-mask. tok() returns "" for consumed or
/// out-of-range positions so patterns never straddle an earlier match.
class Tokens {
 public:
  explicit Tokens(std::vector<std::string> toks)
      : toks_(std::move(toks)), used_(toks_.size(), false) {}

  std::size_t size() const { return toks_.size(); }
  bool used(std::size_t i) const { return used_[i]; }
  std::string_view tok(std::size_t i) const {
    if (i >= toks_.size() || used_[i]) return {};
    return toks_[i];
  }
  void take(std::size_t i, std::size_t n) {
    for (std::size_t k = i; k < i + n && k < used_.size(); ++k) used_[k] = true;
  }

 private:
  std::vector<std::string> toks_;
  std::vector<bool> used_;
};

struct Match {
  std::string value;
  std::size_t length;
};

template <typename TryAt>
std::optional<std::string> scan(Tokens& t, TryAt&& try_at) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.used(i)) continue;
    if (std::optional<Match> m = try_at(i)) {
      t.take(i, m->length);
      return std::move(m->value);
    }
  }
  return std::nullopt;
}

// --- individual slot matchers ---------------------------------------------

std::optional<Match> clock_at(const Tokens& t, std::size_t i) {
  std::string_view s = t.tok(i);
  std::string_view ampm = t.tok(i + 1);
  if (ampm != "am" && ampm != "pm") return std::nullopt;
  std::string_view hour = s, minute;
  if (auto colon = s.find(':'); colon != std::string_view::npos) {
    hour = s.substr(0, colon);
    minute = s.substr(colon + 1);
    if (minute.size() != 2) return std::nullopt;
  }
  auto h = parse_int(hour);
  if (!h || *h < 1 || *h > 12) return std::nullopt;
  std::string value = std::to_string(*h);
  if (!minute.empty()) {
    auto m = parse_int(minute);
    if (!m || *m > 59) return std::nullopt;
    if (*m != 0) value += ":" + std::string(minute);
  }
  return Match{value + " " + std::string(ampm), 2};
}

std::optional<Match> start_date_at(const Tokens& t, std::size_t i) {
  static constexpr std::array<std::string_view, 4> kLead = {"starting", "start", "beginning", "begin"};
  if (!one_of(t.tok(i), kLead)) return std::nullopt;
  std::size_t j = i + 1;
  if (t.tok(j) == "on" || t.tok(j) == "from") ++j;
  std::string_view v = t.tok(j);
  if (v == "today" || v == "tomorrow") return Match{std::string(v), j + 1 - i};
  if ((v == "this" || v == "next") && t.tok(j + 1) == "week")
    return Match{std::string(v) + " week", j + 2 - i};
  return std::nullopt;
}

std::optional<Match> confidence_at(const Tokens& t, std::size_t i) {
  auto in_range = [](std::optional<int> v) { return v && *v >= 1 && *v <= 10; };
  auto over_ten = [](std::string_view s) -> std::optional<int> {
    if (s.size() < 4 || s.substr(s.size() - 3) != "/10") return std::nullopt;
    return parse_int(s.substr(0, s.size() - 3));
  };
  std::string_view s = t.tok(i);
  if (s == "confidence") {
    static constexpr std::array<std::string_view, 9> kFiller = {
        "of", "is", "level", "score", "at", "a", "an", "about", "around"};
    std::size_t j = i + 1;
    while (j < i + 4 && one_of(t.tok(j), kFiller)) ++j;
    if (auto v = over_ten(t.tok(j)); in_range(v)) return Match{std::to_string(*v), j + 1 - i};
    auto v = parse_int(t.tok(j));
    if (!in_range(v)) return std::nullopt;
    std::size_t n = j + 1 - i;
    if (t.tok(j + 1) == "out" && t.tok(j + 2) == "of" && t.tok(j + 3) == "10") n += 3;
    return Match{std::to_string(*v), n};
  }
  if (auto v = over_ten(s); in_range(v)) {
    std::size_t n = t.tok(i + 1) == "confidence" ? 2 : 1;
    return Match{std::to_string(*v), n};
  }
  auto v = parse_int(s);
  if (!in_range(v)) return std::nullopt;
  if (t.tok(i + 1) == "out" && t.tok(i + 2) == "of" && t.tok(i + 3) == "10")
    return Match{std::to_string(*v), 4};
  if (t.tok(i + 1) == "confidence") return Match{std::to_string(*v), 2};
  return std::nullopt;
}

std::optional<Match> duration_at(const Tokens& t, std::size_t i) {
  std::size_t j = t.tok(i) == "for" ? i + 1 : i;
  auto num = parse_number(t.tok(j));
  if (!num) return std::nullopt;
  std::string_view u = t.tok(j + 1);
  std::string unit;
  if (u == "minute" || u == "minutes" || u == "min" || u == "mins") unit = "minute";
  else if (u == "hour" || u == "hours" || u == "hr" || u == "hrs") unit = "hour";
  else return std::nullopt;
  if (*num != 1.0) unit += "s";
  return Match{text::format_number(*num) + " " + unit, j + 2 - i};
}

std::optional<Match> times_at(const Tokens& t, std::size_t i) {
  std::string_view s = t.tok(i);
  if (s == "after" || s == "before" || s == "around" || s == "by") {
    if (auto c = clock_at(t, i + 1)) return Match{std::string(s) + " " + c->value, 1 + c->length};
    static constexpr std::array<std::string_view, 5> kAnchors = {"work", "dinner", "lunch", "breakfast", "school"};
    if ((s == "after" || s == "before") && one_of(t.tok(i + 1), kAnchors))
      return Match{std::string(s) + " " + std::string(t.tok(i + 1)), 2};
    return std::nullopt;
  }
  if (s == "at") {
    if (auto c = clock_at(t, i + 1)) return Match{c->value, 1 + c->length};
    std::string_view w = t.tok(i + 1);
    if (w == "night" || w == "lunch" || w == "noon") return Match{"at " + std::string(w), 2};
    return std::nullopt;
  }
  if (s == "in" && t.tok(i + 1) == "the") {
    std::string_view w = t.tok(i + 2);
    if (w == "morning" || w == "afternoon" || w == "evening")
      return Match{"in the " + std::string(w), 3};
    return std::nullopt;
  }
  return clock_at(t, i);
}

std::optional<Match> amount_at(const Tokens& t, std::size_t i) {
  std::string_view s = t.tok(i);
  std::optional<double> num = parse_number(s);
  bool thousands = false;
  if (!num && s.size() >= 2 && s.back() == 'k') {
    num = parse_number(s.substr(0, s.size() - 1));
    thousands = num.has_value();
  }
  if (!num) return std::nullopt;
  const auto& units = detail::amount_units();
  auto it = units.find(t.tok(i + 1));
  if (it == units.end()) return std::nullopt;
  if (thousands) {
    if (it->second != "steps") return std::nullopt;
    *num *= 1000;
  }
  return Match{detail::format_amount(*num, it->second), 2};
}

// One day item: a weekday, a weekday range, or weekdays/weekends.
std::optional<std::pair<DayMask, std::size_t>> day_item_at(const Tokens& t, std::size_t i,
                                                           bool between) {
  std::string_view s = t.tok(i);
  if (s == "weekdays" || s == "weekday") return std::pair<DayMask, std::size_t>{0x1F, 1};
  if (s == "weekends" || s == "weekend") return std::pair<DayMask, std::size_t>{0x60, 1};
  if (s == "week" && (t.tok(i + 1) == "days" || t.tok(i + 1) == "day"))
    return std::pair<DayMask, std::size_t>{0x1F, 2};
  auto d = day_index(s);
  if (!d) return std::nullopt;
  static constexpr std::array<std::string_view, 6> kRange = {"to", "through", "thru", "-", "until", "till"};
  std::string_view conn = t.tok(i + 1);
  if (one_of(conn, kRange) || (between && conn == "and")) {
    if (auto e = day_index(t.tok(i + 2))) {
      return std::pair<DayMask, std::size_t>{detail::range_mask(*d, *e), 3};
    }
  }
  return std::pair<DayMask, std::size_t>{static_cast<DayMask>(1u << *d), 1};
}

std::optional<Match> days_at(const Tokens& t, std::size_t i) {
  std::string_view s = t.tok(i);
  if (auto n = parse_int(s); n && *n >= 1 && *n <= 7 &&
                             (t.tok(i + 1) == "days" || t.tok(i + 1) == "day")) {
    std::size_t len = 2;
    std::string_view per = t.tok(i + 2);
    if ((per == "a" || per == "per" || per == "each" || per == "every") && t.tok(i + 3) == "week")
      len = 4;
    else if (per == "weekly")
      len = 3;
    return Match{std::to_string(*n) + (*n == 1 ? " day a week" : " days a week"), len};
  }
  if (s == "every" && t.tok(i + 1) == "day") return Match{"every day", 2};
  if (s == "everyday") return Match{"every day", 1};
  if (s == "all" && t.tok(i + 1) == "week") return Match{"every day", 2};

  std::size_t j = i;
  bool between = false;
  if (s == "from" || s == "on" || s == "every" || s == "between") {
    between = s == "between";
    ++j;
  }
  auto first = day_item_at(t, j, between);
  if (!first) return std::nullopt;
  DayMask mask = first->first;
  std::size_t end = j + first->second;
  for (;;) {
    std::string_view sep = t.tok(end);
    if (sep == "and" || sep == "or" || sep == "plus") {
      if (auto next = day_item_at(t, end + 1, false)) {
        mask |= next->first;
        end += 1 + next->second;
        continue;
      }
      break;
    }
    if (auto next = day_item_at(t, end, false)) {
      mask |= next->first;
      end += next->second;
      continue;
    }
    break;
  }
  return Match{detail::canonical_days(mask), end - i};
}

std::string frequency_value(int count, std::string_view unit) {
  std::string u(unit);
  if (count <= 1) return "a " + u;
  if (count == 2) return "twice a " + u;
  return std::to_string(count) + " times a " + u;
}

std::optional<Match> frequency_at(const Tokens& t, std::size_t i) {
  std::string_view s = t.tok(i);
  if (s == "every" && t.tok(i + 1) == "other" && t.tok(i + 2) == "day")
    return Match{"every other day", 3};
  if (s == "daily") return Match{"a day", 1};
  if (s == "weekly") return Match{"a week", 1};
  int count = 0;
  std::size_t j = i;
  if (s == "once") {
    count = 1;
    j = i + 1;
  } else if (s == "twice") {
    count = 2;
    j = i + 1;
  } else if (auto n = parse_int(s); n && *n >= 1 && *n <= 20 &&
                                    (t.tok(i + 1) == "times" || t.tok(i + 1) == "x")) {
    count = *n;
    j = i + 2;
  }
  std::string_view per = t.tok(j);
  std::string_view unit = t.tok(j + 1);
  if ((per == "a" || per == "per" || per == "each" || per == "every" || per == "an") &&
      (unit == "day" || unit == "week")) {
    return Match{frequency_value(count, unit), j + 2 - i};
  }
  return std::nullopt;
}

std::optional<Match> location_at(const Tokens& t, std::size_t i) {
  static const std::map<std::string_view, std::string_view> kPlaces = {
      {"home", "home"},          {"work", "work"},
      {"school", "school"},      {"gym", "the gym"},
      {"park", "the park"},      {"track", "the track"},
      {"pool", "the pool"},      {"mall", "the mall"},
      {"neighborhood", "the neighborhood"}, {"beach", "the beach"},
      {"office", "the office"},  {"trail", "the trail"}};
  static constexpr std::array<std::string_view, 6> kPrep = {"at", "in", "on", "around", "to", "near"};
  std::size_t j = i;
  if (one_of(t.tok(j), kPrep)) ++j;
  if (t.tok(j) == "the" || t.tok(j) == "my") ++j;
  auto it = kPlaces.find(t.tok(j));
  if (it == kPlaces.end()) return std::nullopt;
  if (it->first == "work" && t.tok(j + 1) == "out") return std::nullopt;
  return Match{std::string(it->second), j + 1 - i};
}

std::optional<Match> activity_at(const Tokens& t, std::size_t i) {
  static const std::map<std::string_view, std::string_view> kActivities = {
      {"walk", "walk"},         {"walks", "walk"},       {"walking", "walk"},
      {"walked", "walk"},       {"run", "run"},          {"runs", "run"},
      {"running", "run"},       {"ran", "run"},          {"jog", "jog"},
      {"jogs", "jog"},          {"jogging", "jog"},      {"bike", "bike"},
      {"biking", "bike"},       {"cycle", "bike"},       {"cycling", "bike"},
      {"bicycle", "bike"},      {"swim", "swim"},        {"swimming", "swim"},
      {"swam", "swim"},         {"elliptical", "elliptical"},
      {"stairs", "stairs"},     {"stair", "stairs"},     {"yoga", "yoga"},
      {"dance", "dance"},       {"dancing", "dance"},    {"hike", "hike"},
      {"hiking", "hike"},       {"exercise", "exercise"}, {"exercising", "exercise"},
      {"workout", "exercise"},  {"workouts", "exercise"}, {"steps", "steps"}};
  std::string_view s = t.tok(i);
  if (s == "work" && t.tok(i + 1) == "out") return Match{"exercise", 2};
  auto it = kActivities.find(s);
  if (it == kActivities.end()) return std::nullopt;
  return Match{std::string(it->second), 1};
}

// --- annotation slots ---------------------------------------------------------

std::string collapse(std::string_view s) {
  std::string out;
  for (const auto& w : text::split_whitespace(s)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string annotation_canonical(std::string_view raw) {
  std::string s = text::to_lower_ascii(raw);
  std::replace(s.begin(), s.end(), ';', ' ');
  return collapse(s);
}

// Removes `name: value` segments for annotation slots from `lowered`,
// recording values in `frame`. Values run to the next ';' or end of text.
std::string peel_annotations(std::string lowered, const Schema& schema, GoalFrame& frame) {
  struct Hit {
    std::size_t start;
    std::size_t value_start;
    std::string name;
  };
  std::vector<Hit> hits;
  for (const auto& spec : schema.slots()) {
    if (Schema::is_builtin(spec.name)) continue;
    std::string key = text::to_lower_ascii(spec.name) + ":";
    std::size_t pos = 0;
    while ((pos = lowered.find(key, pos)) != std::string::npos) {
      bool boundary = pos == 0 || lowered[pos - 1] == ' ' || lowered[pos - 1] == ';';
      if (boundary) {
        hits.push_back({pos, pos + key.size(), spec.name});
        break;
      }
      pos += key.size();
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.start < b.start; });
  std::string rest = lowered;
  for (std::size_t h = 0; h < hits.size(); ++h) {
    std::size_t limit = h + 1 < hits.size() ? hits[h + 1].start : lowered.size();
    std::size_t end = lowered.find(';', hits[h].value_start);
    if (end == std::string::npos || end > limit) end = limit;
    std::string value = annotation_canonical(lowered.substr(hits[h].value_start, end - hits[h].value_start));
    if (!value.empty() && !frame.has(hits[h].name)) frame.set(hits[h].name, value);
    for (std::size_t k = hits[h].start; k < end; ++k) rest[k] = ' ';
  }
  return rest;
}

std::string render_days(const std::string& value) {
  auto mask = detail::parse_day_set(value);
  if (!mask) return value;
  std::string canon = detail::canonical_days(*mask);
  if (auto dash = canon.find('-'); dash != std::string::npos) {
    return "from " + canon.substr(0, dash) + " to " + canon.substr(dash + 1);
  }
  std::vector<std::string> names;
  for (int d = 0; d < 7; ++d) {
    if (*mask & (1u << d)) names.emplace_back(detail::day_name(d));
  }
  std::string out = "on ";
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (k > 0) out += (k + 1 == names.size()) ? " and " : ", ";
    out += names[k];
  }
  return out;
}

// Text a single slot value is rendered as inside a goal sentence.
std::string render_slot(std::string_view name, const std::string& value) {
  if (name == slot::days) return render_days(value);
  if (name == slot::times) return text::starts_with_digit(value) ? "at " + value : value;
  if (name == slot::location) return "at " + value;
  if (name == slot::duration) return "for " + value;
  if (name == slot::confidence) return "with confidence " + value;
  if (name == slot::start_date) return "starting " + value;
  return value;
}

constexpr std::array<std::string_view, 9> kRenderOrder = {
    slot::activity, slot::amount,     slot::frequency,
    slot::days,     slot::times,      slot::location,
    slot::duration, slot::confidence, slot::start_date};

}  // namespace

std::string normalize_text(std::string_view input) {
  std::string s = text::to_lower_ascii(input);
  for (const auto& [from, to] : std::array<std::pair<std::string_view, std::string_view>, 4>{
           {{"a.m.", "am"}, {"p.m.", "pm"}, {"a.m", "am"}, {"p.m", "pm"}}}) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
      bool after_digit_or_space = pos == 0 || is_digit(s[pos - 1]) || s[pos - 1] == ' ';
      if (after_digit_or_space) s.replace(pos, from.size(), to);
      pos += to.size();
    }
  }

  // Thousands separators: a comma between a digit and exactly three digits.
  std::string t;
  t.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && is_digit(s[i - 1]) && i + 3 < s.size() + 0 &&
        is_digit(s[i + 1]) && is_digit(s[i + 2]) && is_digit(s[i + 3]) &&
        (i + 4 >= s.size() || !is_digit(s[i + 4]))) {
      continue;
    }
    t += s[i];
  }

  std::string out;
  out.reserve(t.size() + 8);
  for (std::size_t i = 0; i < t.size(); ++i) {
    char c = t[i];
    char prev = i > 0 ? t[i - 1] : ' ';
    char next = i + 1 < t.size() ? t[i + 1] : ' ';
    switch (c) {
      case '.':
      case ':':
      case '/':
        out += (is_digit(prev) && is_digit(next)) ? c : ' ';
        break;
      case '-':
        out += " - ";
        break;
      case '&':
        out += " and ";
        break;
      case '\'':
        out += (is_alpha(prev) && is_alpha(next)) ? c : ' ';
        break;
      case ',': case ';': case '!': case '?': case '(': case ')':
      case '[': case ']': case '{': case '}': case '"': case '*':
      case '~': case '+': case '=': case '<': case '>': case '|': case '`':
        out += ' ';
        break;
      default:
        out += c;
    }
  }

  // Split glued clock suffixes: "8pm" -> "8 pm", "6:30am" -> "6:30 am".
  std::vector<std::string> toks = text::split_whitespace(out);
  std::vector<std::string> split;
  split.reserve(toks.size());
  for (auto& tok : toks) {
    if (tok.size() >= 3) {
      std::string_view suffix = std::string_view(tok).substr(tok.size() - 2);
      std::string_view head = std::string_view(tok).substr(0, tok.size() - 2);
      if ((suffix == "am" || suffix == "pm") && !head.empty() && is_digit(head.back()) &&
          std::all_of(head.begin(), head.end(), [](char c) { return is_digit(c) || c == ':'; })) {
        split.emplace_back(head);
        split.emplace_back(suffix);
        continue;
      }
    }
    split.push_back(std::move(tok));
  }
  return text::join(split, " ");
}

GoalFrame extract_frame(std::string_view goal_text, const Schema& schema) {
  GoalFrame frame;
  std::string rest = peel_annotations(text::to_lower_ascii(goal_text), schema, frame);
  Tokens toks(text::split_whitespace(normalize_text(rest)));

  auto run = [&](std::string_view name, auto&& matcher) {
    if (!schema.has(name)) return;
    if (auto v = scan(toks, [&](std::size_t i) { return matcher(toks, i); })) {
      frame.set(std::string(name), std::move(*v));
    }
  };
  run(slot::start_date, start_date_at);
  run(slot::confidence, confidence_at);
  run(slot::duration, duration_at);
  run(slot::times, times_at);
  run(slot::amount, amount_at);
  run(slot::days, days_at);
  run(slot::frequency, frequency_at);
  run(slot::location, location_at);
  run(slot::activity, activity_at);
  return frame;
}

std::string render(const GoalFrame& frame, const Schema& schema) {
  std::vector<std::string> parts;
  for (std::string_view name : kRenderOrder) {
    if (!schema.has(name)) continue;
    if (const std::string* v = frame.get(name)) parts.push_back(render_slot(name, *v));
  }
  std::string out = text::join(parts, " ");
  for (const auto& spec : schema.slots()) {
    if (Schema::is_builtin(spec.name)) continue;
    if (const std::string* v = frame.get(spec.name)) {
      if (!out.empty()) out += "; ";
      out += spec.name + ": " + *v;
    }
  }
  return out;
}

std::string canonical_value(std::string_view slot_name, std::string_view raw,
                            const Schema& schema) {
  std::string lowered = collapse(text::to_lower_ascii(raw));
  if (!Schema::is_builtin(slot_name)) return annotation_canonical(raw);
  GoalFrame f = extract_frame(render_slot(slot_name, lowered), schema);
  if (const std::string* v = f.get(slot_name)) return *v;
  return lowered;
}

GoalFrame canonicalize(const GoalFrame& frame, const Schema& schema) {
  GoalFrame out;
  for (const auto& [name, value] : frame.slots()) {
    out.set(name, canonical_value(name, value, schema));
  }
  return out;
}

}  // namespace coachpipe::goalkit
