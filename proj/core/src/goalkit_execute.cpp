#include <algorithm>
#include <bit>

#include "coachpipe/goalkit.hpp"
#include "goalkit_internal.hpp"

namespace coachpipe::goalkit {

namespace {

std::string add_amounts(const std::string& lhs, const std::string& rhs) {
  auto a = detail::parse_amount(lhs);
  auto b = detail::parse_amount(rhs);
  if (!a || !b || a->unit != b->unit) {
    throw UnitMismatchError(a ? a->unit : lhs, b ? b->unit : rhs);
  }
  return detail::format_amount(a->number + b->number, a->unit);
}

std::string count_days(int n) {
  n = std::clamp(n, 1, 7);
  return std::to_string(n) + (n == 1 ? " day a week" : " days a week");
}

// Sets union; counts add (capped at a full week). A set mixed with a count
// contributes its size.
std::string add_days(const std::string& lhs, const std::string& rhs) {
  if (lhs == "every day" || rhs == "every day") return "every day";
  auto set_a = detail::parse_day_set(lhs);
  auto set_b = detail::parse_day_set(rhs);
  if (set_a && set_b) return detail::canonical_days(*set_a | *set_b);
  auto size = [](const std::string& v, std::optional<detail::DayMask> set) -> int {
    if (set) return std::popcount(static_cast<unsigned>(*set));
    return detail::parse_day_count(v).value_or(0);
  };
  int a = size(lhs, set_a);
  int b = size(rhs, set_b);
  if (a == 0) return rhs;
  if (b == 0) return lhs;
  return count_days(a + b);
}

}  // namespace

ExecutionResult execute(std::string_view partial_goal_text, const Instruction& instruction,
                        const GoalFrame& reference, const Schema& schema) {
  ExecutionResult result;
  GoalFrame merged = extract_frame(partial_goal_text, schema);
  if (instruction.verb() == Verb::Pass) {
    result.text = std::string(partial_goal_text);
    result.frame = std::move(merged);
    return result;
  }

  const SlotGroup group = *instruction.group();
  std::vector<std::string> slots = group_slots(group, schema);
  bool reference_has_group = std::any_of(slots.begin(), slots.end(),
                                         [&](const std::string& s) { return reference.has(s); });
  if (!reference_has_group) {
    result.warnings.push_back("reference goal has no value for " + to_string(instruction) +
                              "; nothing to transfer");
  }

  if (instruction.verb() == Verb::Copy) {
    for (const auto& name : slots) {
      if (!merged.has(name)) {
        if (const std::string* v = reference.get(name)) merged.set(name, *v);
      }
    }
  } else {
    const std::string& name = slots.empty() ? std::string() : slots.front();
    const std::string* ref = name.empty() ? nullptr : reference.get(name);
    const std::string* own = name.empty() ? nullptr : merged.get(name);
    if (ref && !own) {
      merged.set(name, *ref);
    } else if (ref && own) {
      merged.set(name, group == SlotGroup::Num ? add_amounts(*own, *ref) : add_days(*own, *ref));
    }
  }

  result.text = render(merged, schema);
  result.frame = extract_frame(result.text, schema);
  return result;
}

}  // namespace coachpipe::goalkit
