#include "gridcast/calendar.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gridcast/error.hpp"

namespace gridcast {
namespace fs = std::filesystem;

TimeOfDayEncoding encode_time(int t, int frames_per_day) {
  if (frames_per_day <= 0) throw DomainError("frames_per_day must be positive");
  if (t < 0 || t >= frames_per_day) {
    throw DomainError("time index " + std::to_string(t) + " outside [0, " + std::to_string(frames_per_day - 1) + "]");
  }
  // 4t = q*F + r: quadrant q, angle (pi/2)*r/F inside it. Rotating by whole
  // quadrants is exact, so the axis points come out exactly.
  const long four_t = 4L * t;
  const long q = four_t / frames_per_day;
  const long r = four_t % frames_per_day;
  const double phi = (std::numbers::pi / 2.0) * static_cast<double>(r) / frames_per_day;
  const double c = r == 0 ? 1.0 : std::cos(phi);
  const double s = r == 0 ? 0.0 : std::sin(phi);
  switch (q) {
    case 0:
      return {c, s};
    case 1:
      return {-s, c};
    case 2:
      return {-c, -s};
    default:
      return {s, -c};
  }
}

std::array<std::uint8_t, 7> weekday_onehot(Date date) {
  std::array<std::uint8_t, 7> v{};
  v[static_cast<std::size_t>(date.weekday_index())] = 1;
  return v;
}

HolidayCalendar::HolidayCalendar(std::string city_id, Date coverage_start, Date coverage_end, std::set<Date> holidays,
                                 std::string source)
    : city_id_(std::move(city_id)),
      coverage_start_(coverage_start),
      coverage_end_(coverage_end),
      holidays_(std::move(holidays)),
      source_(std::move(source)) {
  if (coverage_end_ < coverage_start_) throw ParseError("calendar coverage_end precedes coverage_start");
  for (const auto& d : holidays_) {
    if (!covers(d)) throw ParseError("holiday " + d.iso() + " lies outside the declared coverage");
  }
}

bool HolidayCalendar::is_holiday(Date date) const {
  if (!covers(date)) {
    throw CoverageError("date " + date.iso() + " outside calendar coverage " + coverage_start_.iso() + ".." +
                        coverage_end_.iso() + " for " + city_id_);
  }
  return holidays_.contains(date);
}

void HolidayCalendar::require_coverage(Date first, Date last) const {
  if (!covers(first) || !covers(last)) {
    throw CoverageError("calendar for " + city_id_ + " covers " + coverage_start_.iso() + ".." + coverage_end_.iso() +
                        " but data period is " + first.iso() + ".." + last.iso());
  }
}

ordered_json HolidayCalendar::to_json() const {
  ordered_json doc;
  doc["city"] = city_id_;
  doc["coverage_start"] = coverage_start_.iso();
  doc["coverage_end"] = coverage_end_.iso();
  auto list = ordered_json::array();
  for (const auto& d : holidays_) list.push_back(d.iso());
  doc["holidays"] = list;
  return doc;
}

HolidayCalendar parse_calendar(const ordered_json& doc, std::string source) {
  auto fail = [&](const std::string& why) { return ParseError(source + ": " + why); };
  if (!doc.is_object()) throw fail("calendar must be a JSON object");
  for (const char* key : {"city", "coverage_start", "coverage_end"}) {
    if (!doc.contains(key) || !doc[key].is_string()) throw fail(std::string("missing string field '") + key + "'");
  }
  if (!doc.contains("holidays") || !doc["holidays"].is_array()) throw fail("missing array field 'holidays'");
  std::set<Date> holidays;
  for (const auto& item : doc["holidays"]) {
    if (!item.is_string()) throw fail("holiday entries must be date strings");
    const auto d = Date::parse(item.get<std::string>());
    if (!holidays.insert(d).second) throw fail("duplicate holiday " + d.iso());
  }
  try {
    return HolidayCalendar(doc["city"].get<std::string>(), Date::parse(doc["coverage_start"].get<std::string>()),
                           Date::parse(doc["coverage_end"].get<std::string>()), std::move(holidays), source);
  } catch (const ParseError& e) {
    throw fail(e.what());
  }
}

HolidayCalendar load_calendar(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calendar " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_calendar(doc, path.string());
}

void store_calendar(const HolidayCalendar& calendar, const fs::path& path) {
  write_text_atomic(path, calendar.to_json().dump(2) + "\n");
}

ordered_json FileCalendarProvider::fetch(const std::string& city, int year) const {
  const auto path = dir_ / (city + ".json");
  if (!fs::exists(path)) throw ProviderError(name() + ": no calendar for city '" + city + "'");
  HolidayCalendar cal = [&] {
    try {
      return load_calendar(path);
    } catch (const Error& e) {
      throw ProviderError(name() + ": " + e.what());
    }
  }();
  const Date first(year, 1, 1);
  const Date last(year, 12, 31);
  const Date start = std::max(first, cal.coverage_start());
  const Date end = std::min(last, cal.coverage_end());
  if (end < start) throw ProviderError(name() + ": calendar for '" + city + "' does not cover " + std::to_string(year));
  std::set<Date> days;
  for (const auto& d : cal.holidays()) {
    if (start <= d && d <= end) days.insert(d);
  }
  return HolidayCalendar(city, start, end, std::move(days), name()).to_json();
}

HolidayCalendar fetch_calendar(const CalendarProvider& provider, const std::string& city, int year,
                               const fs::path& cache_dir) {
  const auto doc = provider.fetch(city, year);
  const auto path = cache_dir / (city + "-" + std::to_string(year) + ".json");
  write_text_atomic(path, doc.dump(2) + "\n");
  return load_calendar(path);
}

fs::path shipped_calendar_dir() { return fs::path(GRIDCAST_DATA_DIR) / "calendars"; }

}  // namespace gridcast
