#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "keepsake/error.hpp"
#include "keepsake/time.hpp"

namespace keepsake {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateOwner: return "DuplicateOwner";
    case ErrorCode::DegenerateCentroid: return "DegenerateCentroid";
    case ErrorCode::UnsortedInput: return "UnsortedInput";
    case ErrorCode::UnknownCluster: return "UnknownCluster";
    case ErrorCode::UnknownSpeaker: return "UnknownSpeaker";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::UnenrolledOwner: return "UnenrolledOwner";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::UnknownMarker: return "UnknownMarker";
    case ErrorCode::InvalidEvent: return "InvalidEvent";
    case ErrorCode::EmptyQuestion: return "EmptyQuestion";
    case ErrorCode::PermissionDenied: return "PermissionDenied";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::NoSuchMetric: return "NoSuchMetric";
    case ErrorCode::AnchorNotFound: return "AnchorNotFound";
    case ErrorCode::NoReadingInWindow: return "NoReadingInWindow";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::InvalidFeature: return "InvalidFeature";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::UnsortedHistory: return "UnsortedHistory";
    case ErrorCode::InvalidRule: return "InvalidRule";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::ClientFailure: return "ClientFailure";
    case ErrorCode::OutOfOrderTurn: return "OutOfOrderTurn";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnorderedScenario: return "UnorderedScenario";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

using std::chrono::day;
using std::chrono::days;
using std::chrono::month;
using std::chrono::sys_days;
using std::chrono::year;
using std::chrono::year_month_day;

[[noreturn]] void bad_time(std::string_view text) {
  throw Error(ErrorCode::ParseError, "invalid time value '" + std::string(text) + "'");
}

bool parse_uint(std::string_view s, int& out) {
  if (s.empty()) return false;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::int64_t day_index(Timestamp t) {
  return static_cast<std::int64_t>(std::floor(t / kSecondsPerDay));
}

Timestamp day_start(std::int64_t d) { return static_cast<double>(d) * kSecondsPerDay; }

double seconds_of_day(Timestamp t) { return t - day_start(day_index(t)); }

std::string format_date(std::int64_t d) {
  const year_month_day ymd{sys_days{days{d}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::int64_t parse_date(std::string_view text) {
  int y = 0, m = 0, dd = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
      !parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(5, 2), m) ||
      !parse_uint(text.substr(8, 2), dd)) {
    bad_time(text);
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                           day{static_cast<unsigned>(dd)}};
  if (!ymd.ok()) bad_time(text);
  return sys_days{ymd}.time_since_epoch().count();
}

std::string format_timestamp(Timestamp t) {
  // Round to milliseconds once so date and clock fields stay consistent.
  const auto total_ms = static_cast<std::int64_t>(std::llround(t * 1000.0));
  std::int64_t d = total_ms / 86400000;
  std::int64_t ms_of_day = total_ms % 86400000;
  if (ms_of_day < 0) {
    ms_of_day += 86400000;
    --d;
  }
  const auto secs = ms_of_day / 1000;
  const auto ms = ms_of_day % 1000;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lld", format_date(d).c_str(),
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60));
  std::string out = buf;
  if (ms != 0) {
    std::snprintf(buf, sizeof buf, ".%03lld", static_cast<long long>(ms));
    out += buf;
  }
  return out;
}

Timestamp parse_timestamp(std::string_view text) {
  if (text.empty()) bad_time(text);
  if (text.size() >= 11 && text[4] == '-' && text[10] == 'T') {
    std::string_view rest = text.substr(11);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    const auto d = parse_date(text.substr(0, 10));
    return day_start(d) + parse_time_of_day(rest);
  }
  try {
    std::size_t used = 0;
    const std::string s(text);
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) bad_time(text);
    return v;
  } catch (const std::logic_error&) {
    bad_time(text);
  }
}

double parse_time_of_day(std::string_view text) {
  int h = 0, m = 0;
  double s = 0.0;
  if (text.size() < 5 || text[2] != ':' || !parse_uint(text.substr(0, 2), h) ||
      !parse_uint(text.substr(3, 2), m)) {
    bad_time(text);
  }
  if (text.size() > 5) {
    if (text[5] != ':' || text.size() < 8) bad_time(text);
    int whole = 0;
    if (!parse_uint(text.substr(6, 2), whole)) bad_time(text);
    s = whole;
    if (text.size() > 8) {
      if (text[8] != '.' || text.size() == 9) bad_time(text);
      int frac = 0;
      const auto digits = text.substr(9);
      if (!parse_uint(digits, frac)) bad_time(text);
      s += frac / std::pow(10.0, static_cast<double>(digits.size()));
    }
  }
  if (h > 23 || m > 59 || s >= 60.0) bad_time(text);
  return h * 3600.0 + m * 60.0 + s;
}

std::string format_time_of_day(double seconds) {
  const auto total = static_cast<long long>(std::llround(seconds));
  char buf[48];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld", total / 3600, (total / 60) % 60);
  return buf;
}

}  // namespace keepsake
