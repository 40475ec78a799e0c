#pragma once

// Helpers shared by extraction and execution. Not installed.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace coachpipe::goalkit::detail {

/// Bit d set means weekday d is included (0 = monday ... 6 = sunday).
using DayMask = std::uint8_t;

inline constexpr DayMask kAllDays = 0x7F;

std::string_view day_name(int index);

/// "monday-friday" for contiguous runs of three or more days, otherwise a
/// comma list in weekday order.
std::string canonical_days(DayMask mask);

/// Parses a canonical day-set value; nullopt for count forms.
std::optional<DayMask> parse_day_set(std::string_view value);

/// "N days a week" -> N, "every day" -> 7.
std::optional<int> parse_day_count(std::string_view value);

struct Amount {
  double number = 0;
  /// Plural unit, e.g. "steps", "miles", "km".
  std::string unit;
};

std::optional<Amount> parse_amount(std::string_view value);
std::string format_amount(double number, std::string_view plural_unit);

}  // namespace coachpipe::goalkit::detail
