#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace cmda {

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;

// RFC 3339, UTC, microsecond precision: 2025-03-01T12:00:00.000000Z
std::string format_rfc3339(Timestamp ts);
// Accepts an optional fractional part and either `Z` or a numeric offset.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() override;

 private:
  std::mutex mu_;
  Timestamp last_{};
};

// Deterministic clock: every call returns the previous value plus `step`.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start, std::chrono::microseconds step = std::chrono::milliseconds(1))
      : current_(start), step_(step) {}

  Timestamp now() override;
  void set(Timestamp ts);
  void advance(std::chrono::microseconds delta);

 private:
  std::mutex mu_;
  Timestamp current_;
  std::chrono::microseconds step_;
};

}  // namespace cmda
