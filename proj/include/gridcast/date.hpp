#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace gridcast {

/// Civil calendar date. Thin value wrapper over std::chrono::sys_days.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
  constexpr Date(int year, unsigned month, unsigned day)
      : days_(std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                          std::chrono::day{day}}) {}

  /// Parses "YYYY-MM-DD"; throws ParseError on anything else.
  static Date parse(std::string_view text);

  std::string iso() const;
  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  std::chrono::sys_days sys_days() const { return days_; }
  std::int64_t serial() const { return days_.time_since_epoch().count(); }

  /// Monday=0 .. Sunday=6.
  int weekday_index() const;

  constexpr Date plus_days(int n) const { return Date{days_ + std::chrono::days{n}}; }
  friend constexpr int days_between(Date from, Date to) {
    return static_cast<int>((to.days_ - from.days_).count());
  }

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace gridcast
