#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stlur {

/// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerWeek = 7 * kSecondsPerDay;

/// Accepts `YYYY-MM-DDTHH:MM:SS` with optional fractional seconds (truncated)
/// and an optional `Z` or `+HH:MM` suffix. A space may replace the `T`.
Timestamp parse_iso8601(std::string_view text);

/// `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp t);

inline double to_hours(Timestamp t) { return static_cast<double>(t) / 3600.0; }

/// Local wall-clock hour in [0, 24) under a fixed UTC offset (no DST).
double local_hour_of_day(Timestamp t, double utc_offset_hours);

/// Index of the local calendar day containing t.
std::int64_t local_day_index(Timestamp t, double utc_offset_hours);

/// Seconds since local midnight.
std::int64_t local_seconds_of_day(Timestamp t, double utc_offset_hours);

std::int64_t floor_div(std::int64_t a, std::int64_t b);

}  // namespace stlur
