#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hydrostat {

using Clock = std::chrono::system_clock;
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;
using Seconds = std::chrono::duration<double>;

struct TimeParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// `2022-05-23T16:19:00Z`; a fractional part is emitted only when the
/// instant has sub-second precision.
std::string format_rfc3339(Instant t);

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM)`.
Instant parse_rfc3339(std::string_view text);

/// Fixture date/time columns: `MM-DD-YYYY` and `HH:MM`, read as UTC.
Instant parse_fixture_timestamp(std::string_view date, std::string_view time);

std::string format_fixture_date(Instant t);
std::string format_fixture_time(Instant t);

/// `90s`, `15m`, `48h`, `2d`, or a bare number of seconds.
std::chrono::milliseconds parse_duration(std::string_view text);

inline double seconds_between(Instant from, Instant to)
{
    return std::chrono::duration_cast<Seconds>(to - from).count();
}

inline Instant add_seconds(Instant t, double s)
{
    return t + std::chrono::duration_cast<std::chrono::milliseconds>(Seconds(s));
}

} // namespace hydrostat
