#pragma once

#include <chrono>
#include <mutex>
#include <string>

namespace slr {

using TimePoint = std::chrono::system_clock::time_point;
using Millis = std::chrono::milliseconds;

/// Time source shared by everything that waits or timestamps: rate limiting,
/// retry backoff, run and event timestamps. Tests substitute VirtualClock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimePoint now() const = 0;
  virtual void sleep_until(TimePoint deadline) = 0;

  void sleep_for(Millis duration) { sleep_until(now() + duration); }
};

class SystemClock final : public Clock {
 public:
  TimePoint now() const override { return std::chrono::system_clock::now(); }
  void sleep_until(TimePoint deadline) override;
};

/// Never blocks: sleeping moves the clock forward to the deadline.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(TimePoint start = TimePoint{std::chrono::seconds{1'700'000'000}})
      : now_(start) {}

  TimePoint now() const override;
  void sleep_until(TimePoint deadline) override;
  void advance(Millis step);

 private:
  mutable std::mutex mutex_;
  TimePoint now_;
};

/// ISO-8601 UTC with millisecond precision, e.g. 2026-10-16T09:30:00.123Z.
std::string format_timestamp(TimePoint tp);
TimePoint parse_timestamp(const std::string& text);

}  // namespace slr
