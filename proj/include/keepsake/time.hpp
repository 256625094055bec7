#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace keepsake {

// Engine time is a virtual clock: seconds since 1970-01-01T00:00:00 local
// time. No time zone handling; scenarios are written in local time.
using Timestamp = double;

inline constexpr double kSecondsPerDay = 86400.0;

// Days since the epoch. Negative timestamps floor correctly.
std::int64_t day_index(Timestamp t);
Timestamp day_start(std::int64_t day);
double seconds_of_day(Timestamp t);

// "YYYY-MM-DD"
std::string format_date(std::int64_t day);
std::int64_t parse_date(std::string_view text);

// "YYYY-MM-DDTHH:MM:SS" with ".mmm" appended only when the value has a
// sub-second part.
std::string format_timestamp(Timestamp t);

// Accepts the format_timestamp form (optional fraction, optional trailing Z)
// or a plain decimal number of seconds.
Timestamp parse_timestamp(std::string_view text);

// "HH:MM" or "HH:MM:SS" -> seconds after midnight.
double parse_time_of_day(std::string_view text);
std::string format_time_of_day(double seconds);

}  // namespace keepsake
