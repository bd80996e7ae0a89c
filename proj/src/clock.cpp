#include "slr/clock.hpp"

#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include "slr/errors.hpp"

namespace slr {

void SystemClock::sleep_until(TimePoint deadline) { std::this_thread::sleep_until(deadline); }

TimePoint VirtualClock::now() const {
  std::lock_guard lock(mutex_);
  return now_;
}

void VirtualClock::sleep_until(TimePoint deadline) {
  std::lock_guard lock(mutex_);
  if (deadline > now_) now_ = deadline;
}

void VirtualClock::advance(Millis step) {
  std::lock_guard lock(mutex_);
  now_ += step;
}

std::string format_timestamp(TimePoint tp) {
  const auto ms = std::chrono::duration_cast<Millis>(tp.time_since_epoch());
  const std::time_t secs = static_cast<std::time_t>(ms.count() / 1000);
  auto frac = ms.count() % 1000;
  if (frac < 0) frac += 1000;
  std::tm utc{};
  gmtime_r(&secs, &utc);
  std::ostringstream out;
  out << std::put_time(&utc, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0')
      << frac << 'Z';
  return out.str();
}

TimePoint parse_timestamp(const std::string& text) {
  std::tm utc{};
  std::istringstream in(text);
  in >> std::get_time(&utc, "%Y-%m-%dT%H:%M:%S");
  if (in.fail()) throw Error(ErrorCode::parse_error, "bad timestamp: " + text);
  int millis = 0;
  if (in.peek() == '.') {
    in.get();
    in >> millis;
  }
  const auto secs = timegm(&utc);
  return TimePoint{std::chrono::seconds{secs}} + Millis{millis};
}

}  // namespace slr
