#include "agw/date.hpp"

#include <charconv>
#include <cstdio>

#include "agw/error.hpp"

namespace agw {

Date parse_date(std::string_view text) {
  auto fail = [&] { throw Error(ErrorCode::InvalidConfig, "bad date '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') fail();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::string_view part, auto& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc{} || ptr != part.data() + part.size()) fail();
  };
  parse(text.substr(0, 4), y);
  parse(text.substr(5, 2), m);
  parse(text.substr(8, 2), d);
  const std::chrono::year_month_day ymd{std::chrono::year{y} / std::chrono::month{m} /
                                        std::chrono::day{d}};
  if (!ymd.ok()) fail();
  return Date{ymd};
}

std::string format_date(Date d) {
  const auto v = ymd(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(v.year()),
                static_cast<unsigned>(v.month()), static_cast<unsigned>(v.day()));
  return buf;
}

}  // namespace agw
