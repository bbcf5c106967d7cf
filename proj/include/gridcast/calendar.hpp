#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "gridcast/container.hpp"
#include "gridcast/date.hpp"

namespace gridcast {

struct TimeOfDayEncoding {
  double cos_component = 1.0;
  double sin_component = 0.0;
};

/// Frame index -> point on the unit circle at angle 2*pi*t/frames_per_day.
/// Quarter-day indices land exactly on the axes. DomainError if t is out of range.
TimeOfDayEncoding encode_time(int t, int frames_per_day = 288);

/// Monday=0 .. Sunday=6.
std::array<std::uint8_t, 7> weekday_onehot(Date date);

class HolidayCalendar {
 public:
  HolidayCalendar(std::string city_id, Date coverage_start, Date coverage_end, std::set<Date> holidays,
                  std::string source);

  const std::string& city_id() const { return city_id_; }
  Date coverage_start() const { return coverage_start_; }
  Date coverage_end() const { return coverage_end_; }
  const std::set<Date>& holidays() const { return holidays_; }
  const std::string& source() const { return source_; }

  bool covers(Date date) const { return coverage_start_ <= date && date <= coverage_end_; }
  /// CoverageError outside [coverage_start, coverage_end].
  bool is_holiday(Date date) const;
  /// CoverageError unless [first, last] lies inside the coverage.
  void require_coverage(Date first, Date last) const;

  ordered_json to_json() const;

  friend bool operator==(const HolidayCalendar&, const HolidayCalendar&) = default;

 private:
  std::string city_id_;
  Date coverage_start_;
  Date coverage_end_;
  std::set<Date> holidays_;
  std::string source_;
};

/// ParseError on malformed JSON, bad dates, duplicates, or holidays outside coverage.
HolidayCalendar parse_calendar(const ordered_json& doc, std::string source);
HolidayCalendar load_calendar(const std::filesystem::path& path);
void store_calendar(const HolidayCalendar& calendar, const std::filesystem::path& path);

/// Source of calendar documents for fetch_calendar.
class CalendarProvider {
 public:
  virtual ~CalendarProvider() = default;
  virtual std::string name() const = 0;
  /// Returns a document in the calendar JSON format; ProviderError on failure.
  virtual ordered_json fetch(const std::string& city, int year) const = 0;
};

/// Serves `<dir>/<city>.json`, trimmed to the requested year.
class FileCalendarProvider final : public CalendarProvider {
 public:
  explicit FileCalendarProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string name() const override { return "file:" + dir_.string(); }
  ordered_json fetch(const std::string& city, int year) const override;

 private:
  std::filesystem::path dir_;
};

/// Writes the provider's document to `<cache_dir>/<city>-<year>.json` and loads it back.
HolidayCalendar fetch_calendar(const CalendarProvider& provider, const std::string& city, int year,
                               const std::filesystem::path& cache_dir);

/// Calendars shipped with the project.
std::filesystem::path shipped_calendar_dir();

}  // namespace gridcast
