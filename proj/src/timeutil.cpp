#include "stlur/timeutil.hpp"

#include "stlur/common.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace stlur {

namespace {

int parse_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) throw Error("bad timestamp '" + std::string(text) + "'");
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') throw Error("bad timestamp '" + std::string(text) + "'");
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char a, char b = '\0') {
  if (pos >= text.size() || (text[pos] != a && (b == '\0' || text[pos] != b))) {
    throw Error("bad timestamp '" + std::string(text) + "'");
  }
}

std::int64_t offset_seconds(double utc_offset_hours) {
  return static_cast<std::int64_t>(std::llround(utc_offset_hours * 3600.0));
}

}  // namespace

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Timestamp parse_iso8601(std::string_view text) {
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  const int year = parse_digits(text, 0, 4);
  expect_char(text, 4, '-');
  const int month = parse_digits(text, 5, 2);
  expect_char(text, 7, '-');
  const int day = parse_digits(text, 8, 2);
  expect_char(text, 10, 'T', ' ');
  const int hour = parse_digits(text, 11, 2);
  expect_char(text, 13, ':');
  const int minute = parse_digits(text, 14, 2);
  expect_char(text, 16, ':');
  const int second = parse_digits(text, 17, 2);
  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  }
  std::int64_t tz = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z') {
      ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
      const int sign = text[pos] == '+' ? 1 : -1;
      const int oh = parse_digits(text, pos + 1, 2);
      expect_char(text, pos + 3, ':');
      const int om = parse_digits(text, pos + 4, 2);
      tz = sign * (oh * 3600 + om * 60);
      pos += 6;
    }
  }
  if (pos != text.size()) throw Error("bad timestamp '" + std::string(text) + "'");

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) {
    throw Error("bad timestamp '" + std::string(text) + "'");
  }
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return days * kSecondsPerDay + hour * 3600 + minute * 60 + second - tz;
}

std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  const std::int64_t days = floor_div(t, kSecondsPerDay);
  const std::int64_t rem = t - days * kSecondsPerDay;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60));
  return buf;
}

std::int64_t local_seconds_of_day(Timestamp t, double utc_offset_hours) {
  const std::int64_t local = t + offset_seconds(utc_offset_hours);
  return local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
}

double local_hour_of_day(Timestamp t, double utc_offset_hours) {
  return static_cast<double>(local_seconds_of_day(t, utc_offset_hours)) / 3600.0;
}

std::int64_t local_day_index(Timestamp t, double utc_offset_hours) {
  return floor_div(t + offset_seconds(utc_offset_hours), kSecondsPerDay);
}

}  // namespace stlur
