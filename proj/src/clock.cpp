#include "cmda/clock.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <ctime>

namespace cmda {

namespace {

bool parse_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  auto first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, out);
  return ec == std::errc{} && ptr == first + len;
}

}  // namespace

std::string format_rfc3339(Timestamp ts) {
  using namespace std::chrono;
  const auto day = floor<days>(ts);
  const year_month_day ymd{day};
  const hh_mm_ss hms{ts - day};
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%06lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()),
                static_cast<long long>(hms.subseconds().count()));
  return buf;
}

std::optional<Timestamp> parse_rfc3339(std::string_view text) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (text.size() < 20) return std::nullopt;
  if (!parse_int(text, 0, 4, y) || text[4] != '-' || !parse_int(text, 5, 2, mo) || text[7] != '-' ||
      !parse_int(text, 8, 2, d) || (text[10] != 'T' && text[10] != 't' && text[10] != ' ') ||
      !parse_int(text, 11, 2, h) || text[13] != ':' || !parse_int(text, 14, 2, mi) || text[16] != ':' ||
      !parse_int(text, 17, 2, s)) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;

  std::size_t pos = 19;
  long long micros = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (digits < 6) micros = micros * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 6; ++i) micros *= 10;
  }
  if (pos >= text.size()) return std::nullopt;
  int offset_minutes = 0;
  if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    int oh = 0, om = 0;
    if (!parse_int(text, pos + 1, 2, oh) || pos + 3 >= text.size() || text[pos + 3] != ':' ||
        !parse_int(text, pos + 4, 2, om)) {
      return std::nullopt;
    }
    offset_minutes = (oh * 60 + om) * (text[pos] == '-' ? -1 : 1);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != text.size()) return std::nullopt;

  Timestamp ts = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} + microseconds{micros};
  return ts - minutes{offset_minutes};
}

Timestamp SystemClock::now() {
  auto t = std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
  std::lock_guard lock(mu_);
  // strictly increasing so created_at never ties within one process
  if (t <= last_) t = last_ + std::chrono::microseconds(1);
  last_ = t;
  return t;
}

Timestamp ManualClock::now() {
  std::lock_guard lock(mu_);
  current_ += step_;
  return current_;
}

void ManualClock::set(Timestamp ts) {
  std::lock_guard lock(mu_);
  current_ = ts;
}

void ManualClock::advance(std::chrono::microseconds delta) {
  std::lock_guard lock(mu_);
  current_ += delta;
}

}  // namespace cmda
