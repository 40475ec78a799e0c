#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "coachpipe/goalkit.hpp"
#include "coachpipe/text.hpp"

namespace coachpipe::goalkit {

namespace {

constexpr std::array<std::string_view, 9> kBuiltinSlots = {
    slot::activity, slot::amount,   slot::frequency,
    slot::days,     slot::times,    slot::location,
    slot::duration, slot::confidence, slot::start_date};

Schema make_default_schema() {
  std::vector<SlotSpec> slots = {
      {"activity",
       {"walk", "run", "jog", "bike", "swim", "elliptical", "stairs", "yoga",
        "dance", "hike", "exercise"}},
      {"amount",
       {"2500 steps", "3000 steps", "5000 steps", "7000 steps", "10000 steps",
        "1 mile", "2 miles", "3 miles", "1.5 miles", "3 km", "10 laps",
        "5 flights"}},
      {"frequency",
       {"a day", "a week", "twice a day", "twice a week", "3 times a week",
        "every other day"}},
      {"days",
       {"monday-friday", "monday,wednesday,friday", "saturday,sunday",
        "tuesday", "monday-sunday", "tuesday,thursday", "wednesday-saturday",
        "7 days a week", "5 days a week", "3 days a week", "every day"}},
      {"times",
       {"7 am", "6:30 pm", "after 8 pm", "before 9 am", "around 6 pm",
        "in the morning", "in the afternoon", "in the evening", "at night",
        "at lunch", "after work", "after dinner", "before breakfast"}},
      {"location",
       {"home", "work", "school", "the gym", "the park", "the track",
        "the pool", "the mall", "the neighborhood", "the beach"}},
      {"duration",
       {"20 minutes", "30 minutes", "45 minutes", "1 hour", "2 hours"}},
      {"confidence", {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"}},
      {"start_date", {"today", "tomorrow", "this week", "next week"}},
      {"notes",
       {"with my sister", "bring water", "listen to music", "take the dog",
        "wear the fitbit"}},
  };
  return Schema(std::move(slots));
}

std::string group_name(SlotGroup g) {
  switch (g) {
    case SlotGroup::Times: return "Times";
    case SlotGroup::Days: return "Days";
    case SlotGroup::Num: return "Num";
    case SlotGroup::All: return "All";
  }
  return "?";
}

}  // namespace

// --- Schema -----------------------------------------------------------------

Schema::Schema(std::vector<SlotSpec> slots) : slots_(std::move(slots)) {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& name = slots_[i].name;
    if (name.empty()) throw ConfigError("schema: empty slot name");
    for (char c : name) {
      if (c == ':' || c == ';' || c == ' ')
        throw ConfigError("schema: invalid slot name '" + name + "'");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (slots_[j].name == name)
        throw ConfigError("schema: duplicate slot '" + name + "'");
    }
  }
}

const Schema& Schema::default_schema() {
  static const Schema schema = make_default_schema();
  return schema;
}

Schema Schema::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("slots") || !j["slots"].is_array())
    throw ConfigError("schema: expected an object with a 'slots' array");
  std::vector<SlotSpec> slots;
  for (const auto& s : j["slots"]) {
    SlotSpec spec;
    if (s.is_string()) {
      spec.name = s.get<std::string>();
    } else if (s.is_object() && s.contains("name") && s["name"].is_string()) {
      spec.name = s["name"].get<std::string>();
      if (s.contains("lexicon")) {
        for (const auto& v : s["lexicon"]) spec.lexicon.push_back(v.get<std::string>());
      }
    } else {
      throw ConfigError("schema: slot entries must be names or {name, lexicon}");
    }
    slots.push_back(std::move(spec));
  }
  return Schema(std::move(slots));
}

Schema Schema::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("schema: cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema: " + path.string() + ": " + e.what());
  }
}

nlohmann::json Schema::to_json() const {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : slots_) {
    slots.push_back({{"name", s.name}, {"lexicon", s.lexicon}});
  }
  return {{"slots", slots}};
}

bool Schema::has(std::string_view name) const { return find(name) != nullptr; }

const SlotSpec* Schema::find(std::string_view name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool Schema::is_builtin(std::string_view name) {
  return std::find(kBuiltinSlots.begin(), kBuiltinSlots.end(), name) !=
         kBuiltinSlots.end();
}

// --- GoalFrame --------------------------------------------------------------

GoalFrame::GoalFrame(
    std::initializer_list<std::pair<const std::string, std::string>> init) {
  for (const auto& [k, v] : init) set(k, v);
}

const std::string* GoalFrame::get(std::string_view name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

void GoalFrame::set(std::string name, std::string value) {
  if (value.empty()) {
    slots_.erase(name);
    return;
  }
  slots_[std::move(name)] = std::move(value);
}

void GoalFrame::erase(std::string_view name) {
  auto it = slots_.find(name);
  if (it != slots_.end()) slots_.erase(it);
}

nlohmann::json frame_to_json(const GoalFrame& frame) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : frame.slots()) j[k] = v;
  return j;
}

GoalFrame frame_from_json(const nlohmann::json& j, const Schema& schema) {
  if (!j.is_object())
    throw ValidationError("gold_frame", "expected a JSON object");
  GoalFrame raw;
  for (const auto& [k, v] : j.items()) {
    if (!schema.has(k))
      throw ValidationError("gold_frame", "slot '" + k + "' is not in the schema");
    if (!v.is_string())
      throw ValidationError("gold_frame", "slot '" + k + "' must be a string");
    raw.set(k, v.get<std::string>());
  }
  return canonicalize(raw, schema);
}

std::string to_string(const GoalFrame& frame) {
  return frame_to_json(frame).dump();
}

// --- Instruction ------------------------------------------------------------

Instruction Instruction::make(Verb verb, std::optional<SlotGroup> group) {
  switch (verb) {
    case Verb::Pass:
      if (group) throw UnknownInstructionError("{" + group_name(*group) + "}");
      return Instruction(verb, std::nullopt);
    case Verb::Copy:
      if (!group) throw UnknownInstructionError("Copy");
      return Instruction(verb, group);
    case Verb::Add:
      if (!group) throw UnknownInstructionError("Add");
      if (*group != SlotGroup::Num && *group != SlotGroup::Days)
        throw UnknownInstructionError("{" + group_name(*group) + "}");
      return Instruction(verb, group);
  }
  throw UnknownInstructionError("?");
}

Instruction parse_instruction(std::string_view text) {
  std::string t = text::trim(text);
  if (t.empty()) return Instruction::pass();
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"' &&
      text::is_blank(std::string_view(t).substr(1, t.size() - 2)))
    return Instruction::pass();

  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < t.size() && (t[i] == ' ' || t[i] == '\t')) ++i;
  };
  std::size_t start = i;
  while (i < t.size() && std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
  std::string verb_token = t.substr(start, i - start);
  if (verb_token.empty()) throw UnknownInstructionError(t);
  std::string verb_lower = text::to_lower_ascii(verb_token);

  Verb verb;
  if (verb_lower == "pass") verb = Verb::Pass;
  else if (verb_lower == "copy") verb = Verb::Copy;
  else if (verb_lower == "add") verb = Verb::Add;
  else throw UnknownInstructionError(verb_token);

  skip_ws();
  std::optional<SlotGroup> group;
  if (i < t.size()) {
    bool braced = t[i] == '{';
    if (braced) ++i;
    skip_ws();
    std::size_t arg_start = i;
    while (i < t.size() && std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
    std::string arg = t.substr(arg_start, i - arg_start);
    skip_ws();
    if (braced) {
      if (i >= t.size() || t[i] != '}')
        throw UnknownInstructionError(t.substr(arg_start));
      ++i;
    }
    skip_ws();
    if (i != t.size()) throw UnknownInstructionError(t.substr(i));
    std::string a = text::to_lower_ascii(arg);
    if (a == "times") group = SlotGroup::Times;
    else if (a == "days") group = SlotGroup::Days;
    else if (a == "num") group = SlotGroup::Num;
    else if (a == "all") group = SlotGroup::All;
    else throw UnknownInstructionError(arg.empty() ? t : arg);
  }
  return Instruction::make(verb, group);
}

std::string to_string(const Instruction& instruction) {
  switch (instruction.verb()) {
    case Verb::Pass: return "Pass";
    case Verb::Copy: return "Copy {" + group_name(*instruction.group()) + "}";
    case Verb::Add: return "Add {" + group_name(*instruction.group()) + "}";
  }
  return "Pass";
}

const std::vector<Instruction>& all_instructions() {
  static const std::vector<Instruction> all = {
      Instruction::pass(),
      Instruction::copy(SlotGroup::Times),
      Instruction::copy(SlotGroup::Days),
      Instruction::copy(SlotGroup::Num),
      Instruction::add(SlotGroup::Num),
      Instruction::add(SlotGroup::Days),
      Instruction::copy(SlotGroup::All),
  };
  return all;
}

std::vector<std::string> group_slots(SlotGroup group, const Schema& schema) {
  std::vector<std::string> out;
  auto add_if = [&](std::string_view name) {
    if (schema.has(name)) out.emplace_back(name);
  };
  switch (group) {
    case SlotGroup::Times: add_if(slot::times); break;
    case SlotGroup::Days: add_if(slot::days); break;
    case SlotGroup::Num: add_if(slot::amount); break;
    case SlotGroup::All:
      for (const auto& s : schema.slots()) out.push_back(s.name);
      break;
  }
  return out;
}

}  // namespace coachpipe::goalkit
