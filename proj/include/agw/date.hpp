#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace agw {

/// Calendar date stored as days since 1970-01-01.
using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
  return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

inline std::int32_t days_since_epoch(Date d) {
  return static_cast<std::int32_t>(d.time_since_epoch().count());
}

inline Date date_from_days(std::int32_t days) { return Date{std::chrono::days{days}}; }

inline std::chrono::year_month_day ymd(Date d) { return std::chrono::year_month_day{d}; }

inline int year_of(Date d) { return static_cast<int>(ymd(d).year()); }

/// Parses YYYY-MM-DD; throws Error(InvalidConfig) on malformed input.
Date parse_date(std::string_view text);

std::string format_date(Date d);

}  // namespace agw
