#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "gridcast/calendar.hpp"
#include "gridcast/error.hpp"

using namespace gridcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gridcast_test_cal_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("time encoding axis points and unit circle") {
  CHECK(encode_time(0).cos_component == 1.0);
  CHECK(encode_time(0).sin_component == 0.0);
  CHECK(encode_time(72).cos_component == 0.0);
  CHECK(encode_time(72).sin_component == 1.0);
  CHECK(encode_time(144).cos_component == -1.0);
  CHECK(encode_time(144).sin_component == 0.0);
  CHECK(encode_time(216).cos_component == 0.0);
  CHECK(encode_time(216).sin_component == -1.0);
  for (int t = 0; t < 288; ++t) {
    const auto e = encode_time(t);
    CHECK(std::abs(e.cos_component * e.cos_component + e.sin_component * e.sin_component - 1.0) <= 1e-9);
    const double theta = 2.0 * std::numbers::pi * t / 288.0;
    CHECK(e.cos_component == doctest::Approx(std::cos(theta)).epsilon(1e-12));
    CHECK(e.sin_component == doctest::Approx(std::sin(theta)).epsilon(1e-12));
  }
}

TEST_CASE("time encoding is injective") {
  for (int frames : {4, 24, 288, 1440}) {
    std::set<std::pair<double, double>> seen;
    for (int t = 0; t < frames; ++t) {
      const auto e = encode_time(t, frames);
      seen.insert({e.cos_component, e.sin_component});
    }
    CHECK(seen.size() == static_cast<std::size_t>(frames));
  }
}

TEST_CASE("time encoding rejects out-of-range frames") {
  CHECK_THROWS_AS(encode_time(-1), DomainError);
  CHECK_THROWS_AS(encode_time(288), DomainError);
  CHECK_THROWS_AS(encode_time(0, 0), DomainError);
}

TEST_CASE("weekday one-hot") {
  const std::array<std::uint8_t, 7> monday{1, 0, 0, 0, 0, 0, 0};
  const std::array<std::uint8_t, 7> sunday{0, 0, 0, 0, 0, 0, 1};
  CHECK(weekday_onehot(Date::parse("2019-01-07")) == monday);
  CHECK(weekday_onehot(Date::parse("2019-01-13")) == sunday);
  Date d = Date::parse("2018-11-20");
  for (int i = 0; i < 800; ++i, d = d.plus_days(1)) {
    const auto v = weekday_onehot(d);
    int sum = 0;
    for (auto x : v) sum += x;
    CHECK(sum == 1);
    CHECK(weekday_onehot(d.plus_days(7)) == v);
  }
}

TEST_CASE("shipped calendars") {
  const auto berlin = load_calendar(shipped_calendar_dir() / "berlin.json");
  CHECK(berlin.city_id() == "berlin");
  CHECK(berlin.is_holiday(Date::parse("2019-10-03")));
  CHECK_FALSE(berlin.is_holiday(Date::parse("2019-10-04")));
  CHECK_FALSE(berlin.is_holiday(Date::parse("2019-10-02")));
  CHECK(berlin.is_holiday(Date::parse("2019-12-25")));
  CHECK_THROWS_AS(berlin.is_holiday(Date::parse("2018-12-31")), CoverageError);
  CHECK_THROWS_AS(berlin.is_holiday(Date::parse("2020-01-01")), CoverageError);
  for (const char* city : {"istanbul", "moscow"}) {
    const auto c = load_calendar(shipped_calendar_dir() / (std::string(city) + ".json"));
    CHECK(c.city_id() == city);
    CHECK(c.is_holiday(Date::parse("2019-01-01")));
    CHECK(c.covers(Date::parse("2019-06-15")));
  }
}

TEST_CASE("calendar store/load round trip") {
  const auto dir = scratch("roundtrip");
  const auto berlin = load_calendar(shipped_calendar_dir() / "berlin.json");
  store_calendar(berlin, dir / "b.json");
  const auto back = load_calendar(dir / "b.json");
  CHECK(back.holidays() == berlin.holidays());
  CHECK(back.coverage_start() == berlin.coverage_start());
  CHECK(back.coverage_end() == berlin.coverage_end());
}

TEST_CASE("calendar parse errors") {
  auto doc = ordered_json{{"city", "x"}, {"coverage_start", "2019-01-01"}, {"coverage_end", "2019-12-31"},
                          {"holidays", {"2019-05-01", "2019-05-01"}}};
  CHECK_THROWS_AS(parse_calendar(doc, "test"), ParseError);
  doc["holidays"] = {"2020-05-01"};
  CHECK_THROWS_AS(parse_calendar(doc, "test"), ParseError);
  doc["holidays"] = {"2019-02-30"};
  CHECK_THROWS_AS(parse_calendar(doc, "test"), ParseError);
  doc.erase("coverage_end");
  CHECK_THROWS_AS(parse_calendar(doc, "test"), ParseError);

  const auto dir = scratch("errors");
  std::ofstream(dir / "bad.json") << "{ nope";
  CHECK_THROWS_AS(load_calendar(dir / "bad.json"), ParseError);
}

TEST_CASE("empty holiday list is a valid calendar") {
  const auto doc = ordered_json{{"city", "nowhere"}, {"coverage_start", "2019-01-01"}, {"coverage_end", "2019-03-31"},
                                {"holidays", ordered_json::array()}};
  const auto c = parse_calendar(doc, "test");
  for (Date d = Date::parse("2019-01-01"); d <= Date::parse("2019-03-31"); d = d.plus_days(1)) {
    CHECK_FALSE(c.is_holiday(d));
  }
  CHECK_NOTHROW(c.require_coverage(Date::parse("2019-01-05"), Date::parse("2019-03-01")));
  CHECK_THROWS_AS(c.require_coverage(Date::parse("2019-01-05"), Date::parse("2019-04-01")), CoverageError);
}

TEST_CASE("fetch through the file provider writes then loads") {
  const auto cache = scratch("fetch");
  FileCalendarProvider provider(shipped_calendar_dir());
  const auto c = fetch_calendar(provider, "moscow", 2019, cache);
  CHECK(fs::exists(cache / "moscow-2019.json"));
  CHECK(c.holidays() == load_calendar(shipped_calendar_dir() / "moscow.json").holidays());
  CHECK_THROWS_AS(fetch_calendar(provider, "atlantis", 2019, cache), ProviderError);
  CHECK_THROWS_AS(fetch_calendar(provider, "moscow", 2031, cache), ProviderError);
}
