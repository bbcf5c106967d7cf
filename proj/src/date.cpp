#include "gridcast/date.hpp"

#include <cstdio>

#include "gridcast/error.hpp"

namespace gridcast {

Date Date::parse(std::string_view text) {
  auto fail = [&] { return ParseError("invalid date '" + std::string(text) + "', expected YYYY-MM-DD"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw fail();
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i == 4 || i == 7) continue;
    if (text[i] < '0' || text[i] > '9') throw fail();
  }
  auto digits = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (text[i] - '0');
    return v;
  };
  std::chrono::year_month_day ymd{std::chrono::year{digits(0, 4)},
                                  std::chrono::month{static_cast<unsigned>(digits(5, 2))},
                                  std::chrono::day{static_cast<unsigned>(digits(8, 2))}};
  if (!ymd.ok()) throw fail();
  return Date{std::chrono::sys_days{ymd}};
}

std::string Date::iso() const {
  auto d = ymd();
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

int Date::weekday_index() const {
  return static_cast<int>(std::chrono::weekday{days_}.iso_encoding()) - 1;
}

}  // namespace gridcast
