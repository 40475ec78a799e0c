#pragma once

// SMART goals as semantic frames, plus the closed edit-instruction language
// used to carry attributes over from the previous week's goal.

#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coachpipe/errors.hpp"

namespace coachpipe::goalkit {

namespace slot {
inline constexpr std::string_view activity = "activity";
inline constexpr std::string_view amount = "amount";
inline constexpr std::string_view frequency = "frequency";
inline constexpr std::string_view days = "days";
inline constexpr std::string_view times = "times";
inline constexpr std::string_view location = "location";
inline constexpr std::string_view duration = "duration";
inline constexpr std::string_view confidence = "confidence";
inline constexpr std::string_view start_date = "start_date";
inline constexpr std::string_view notes = "notes";
}  // namespace slot

struct SlotSpec {
  std::string name;
  /// Canonical sample values, used by fixtures and property tests.
  std::vector<std::string> lexicon;
};

/// The set of slot names a frame may carry. The default schema has ten
/// slots; a schema file may declare a different set. Slots without a
/// built-in extractor are "annotation" slots, written as `; name: value`.
class Schema {
 public:
  explicit Schema(std::vector<SlotSpec> slots);

  static const Schema& default_schema();
  static Schema from_json(const nlohmann::json& j);
  static Schema from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<SlotSpec>& slots() const noexcept { return slots_; }
  std::size_t size() const noexcept { return slots_.size(); }
  bool has(std::string_view name) const;
  const SlotSpec* find(std::string_view name) const;

  /// True for slot names with a dedicated pattern extractor.
  static bool is_builtin(std::string_view name);

 private:
  std::vector<SlotSpec> slots_;
};

/// Slot name -> normalized value. An absent key means "unspecified"; empty
/// values are never stored.
class GoalFrame {
 public:
  GoalFrame() = default;
  GoalFrame(std::initializer_list<std::pair<const std::string, std::string>> init);

  const std::string* get(std::string_view name) const;
  bool has(std::string_view name) const { return get(name) != nullptr; }
  /// Setting an empty value erases the slot.
  void set(std::string name, std::string value);
  void erase(std::string_view name);

  bool empty() const noexcept { return slots_.empty(); }
  std::size_t size() const noexcept { return slots_.size(); }
  const std::map<std::string, std::string, std::less<>>& slots() const noexcept {
    return slots_;
  }

  friend bool operator==(const GoalFrame&, const GoalFrame&) = default;

 private:
  std::map<std::string, std::string, std::less<>> slots_;
};

nlohmann::json frame_to_json(const GoalFrame& frame);
/// Accepts an object of string values. Throws ValidationError("gold_frame")
/// for non-string values or slot names outside the schema.
GoalFrame frame_from_json(const nlohmann::json& j,
                          const Schema& schema = Schema::default_schema());

std::string to_string(const GoalFrame& frame);

// --- instruction language ---------------------------------------------------

enum class Verb { Pass, Copy, Add };
enum class SlotGroup { Times, Days, Num, All };

class UnknownInstructionError : public Error {
 public:
  explicit UnknownInstructionError(std::string token)
      : Error("unknown instruction token '" + token + "'"),
        token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

class UnitMismatchError : public Error {
 public:
  UnitMismatchError(const std::string& lhs, const std::string& rhs)
      : Error("cannot add amounts with units '" + lhs + "' and '" + rhs + "'") {}
};

/// One of: Pass, Copy {Times|Days|Num|All}, Add {Num|Days}.
class Instruction {
 public:
  Instruction() = default;
  static Instruction pass() { return {}; }
  /// Throws UnknownInstructionError if (verb, group) is outside the set.
  static Instruction make(Verb verb, std::optional<SlotGroup> group);
  static Instruction copy(SlotGroup group) { return make(Verb::Copy, group); }
  static Instruction add(SlotGroup group) { return make(Verb::Add, group); }

  Verb verb() const noexcept { return verb_; }
  std::optional<SlotGroup> group() const noexcept { return group_; }

  friend bool operator==(const Instruction&, const Instruction&) = default;

 private:
  Instruction(Verb v, std::optional<SlotGroup> g) : verb_(v), group_(g) {}
  Verb verb_ = Verb::Pass;
  std::optional<SlotGroup> group_;
};

/// Whitespace- and case-tolerant. Blank input and the quoted blank `" "`
/// both mean Pass.
Instruction parse_instruction(std::string_view text);

/// Canonical text form: `Pass` or `Verb {Arg}`.
std::string to_string(const Instruction& instruction);

/// The seven members of the closed instruction set, in a fixed order.
const std::vector<Instruction>& all_instructions();

/// Slot names touched by a group under the given schema.
std::vector<std::string> group_slots(SlotGroup group,
                                     const Schema& schema = Schema::default_schema());

// --- frames <-> text --------------------------------------------------------

/// Lower-cases, removes thousands separators, splits am/pm off clock times
/// and strips punctuation that carries no slot information.
std::string normalize_text(std::string_view text);

/// Deterministic rule-based slot extraction. Unknown text yields an empty
/// frame.
GoalFrame extract_frame(std::string_view goal_text,
                        const Schema& schema = Schema::default_schema());

/// Template rendering; extract_frame(render(f)) == f for frames whose values
/// are canonical.
std::string render(const GoalFrame& frame,
                   const Schema& schema = Schema::default_schema());

/// Canonical form of a single slot value (e.g. "Mon-Fri" -> "monday-friday").
/// Values no extractor recognizes are lower-cased with whitespace collapsed.
std::string canonical_value(std::string_view slot_name, std::string_view raw,
                            const Schema& schema = Schema::default_schema());

GoalFrame canonicalize(const GoalFrame& frame,
                       const Schema& schema = Schema::default_schema());

struct ExecutionResult {
  std::string text;
  GoalFrame frame;
  /// Non-fatal conditions, e.g. copying a slot group the reference lacks.
  std::vector<std::string> warnings;
};

/// Applies `instruction` to the partial goal using `reference` (the previous
/// week's frame). Frame-level merge, then re-rendered; Pass returns the
/// partial text untouched. Throws UnitMismatchError for Add {Num} across
/// incompatible units.
ExecutionResult execute(std::string_view partial_goal_text,
                        const Instruction& instruction,
                        const GoalFrame& reference,
                        const Schema& schema = Schema::default_schema());

}  // namespace coachpipe::goalkit
