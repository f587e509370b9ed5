#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fleetcast {

/// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

/// Parses `YYYY-MM-DDTHH:MM:SS` (also with a space separator, optional fractional
/// seconds and a trailing `Z`). Throws ParseError.
Timestamp parse_timestamp(std::string_view text);

std::string format_timestamp(Timestamp t);

/// 0 = Monday ... 6 = Sunday.
int day_of_week(Timestamp t);

/// Floor division for possibly negative offsets.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
}

}  // namespace fleetcast
