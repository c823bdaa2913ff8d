#include "hydrostat/time.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

namespace hydrostat {

namespace {

using namespace std::chrono;

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole)
{
    if (pos + len > text.size())
        throw TimeParseError(fmt::format("truncated timestamp '{}'", whole));
    int value = 0;
    auto sub = text.substr(pos, len);
    auto [ptr, ec] = std::from_chars(sub.data(), sub.data() + sub.size(), value);
    if (ec != std::errc{} || ptr != sub.data() + sub.size())
        throw TimeParseError(fmt::format("malformed timestamp '{}'", whole));
    return value;
}

void expect_char(std::string_view text, std::size_t pos, char c, std::string_view whole)
{
    if (pos >= text.size() || text[pos] != c)
        throw TimeParseError(fmt::format("malformed timestamp '{}'", whole));
}

Instant make_instant(int y, int mo, int d, int h, int mi, int s, std::string_view whole)
{
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60)
        throw TimeParseError(fmt::format("out-of-range field in timestamp '{}'", whole));
    return time_point_cast<milliseconds>(sys_days{ymd} + hours{h} + minutes{mi} + std::chrono::seconds{s});
}

struct Civil {
    year_month_day ymd;
    hh_mm_ss<milliseconds> hms;
};

Civil split(Instant t)
{
    auto day_start = floor<days>(t);
    return {year_month_day{day_start}, hh_mm_ss<milliseconds>{t - day_start}};
}

} // namespace

std::string format_rfc3339(Instant t)
{
    auto [ymd, hms] = split(t);
    auto out = fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}", static_cast<int>(ymd.year()),
                           static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                           hms.hours().count(), hms.minutes().count(), hms.seconds().count());
    if (auto ms = hms.subseconds().count(); ms != 0)
        out += fmt::format(".{:03}", ms);
    out += 'Z';
    return out;
}

Instant parse_rfc3339(std::string_view text)
{
    int y = read_int(text, 0, 4, text);
    expect_char(text, 4, '-', text);
    int mo = read_int(text, 5, 2, text);
    expect_char(text, 7, '-', text);
    int d = read_int(text, 8, 2, text);
    if (text.size() < 11 || (text[10] != 'T' && text[10] != 't' && text[10] != ' '))
        throw TimeParseError(fmt::format("malformed timestamp '{}'", text));
    int h = read_int(text, 11, 2, text);
    expect_char(text, 13, ':', text);
    int mi = read_int(text, 14, 2, text);
    expect_char(text, 16, ':', text);
    int s = read_int(text, 17, 2, text);
    Instant t = make_instant(y, mo, d, h, mi, s, text);

    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        std::size_t start = ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9')
            ++pos;
        if (pos == start)
            throw TimeParseError(fmt::format("malformed fraction in '{}'", text));
        // Millisecond precision; extra digits are truncated.
        auto digits = text.substr(start, std::min<std::size_t>(3, pos - start));
        int ms = read_int(digits, 0, digits.size(), text);
        for (auto n = digits.size(); n < 3; ++n)
            ms *= 10;
        t += milliseconds{ms};
    }
    if (pos >= text.size())
        throw TimeParseError(fmt::format("missing zone designator in '{}'", text));
    char z = text[pos];
    if ((z == 'Z' || z == 'z') && pos + 1 == text.size())
        return t;
    if ((z == '+' || z == '-') && pos + 6 == text.size()) {
        int oh = read_int(text, pos + 1, 2, text);
        expect_char(text, pos + 3, ':', text);
        int om = read_int(text, pos + 4, 2, text);
        auto offset = hours{oh} + minutes{om};
        return z == '+' ? t - offset : t + offset;
    }
    throw TimeParseError(fmt::format("malformed zone designator in '{}'", text));
}

Instant parse_fixture_timestamp(std::string_view date, std::string_view time)
{
    if (date.size() != 10 || time.size() != 5)
        throw TimeParseError(fmt::format("expected MM-DD-YYYY and HH:MM, got '{} {}'", date, time));
    int mo = read_int(date, 0, 2, date);
    expect_char(date, 2, '-', date);
    int d = read_int(date, 3, 2, date);
    expect_char(date, 5, '-', date);
    int y = read_int(date, 6, 4, date);
    int h = read_int(time, 0, 2, time);
    expect_char(time, 2, ':', time);
    int mi = read_int(time, 3, 2, time);
    return make_instant(y, mo, d, h, mi, 0, date);
}

std::string format_fixture_date(Instant t)
{
    auto ymd = split(t).ymd;
    return fmt::format("{:02}-{:02}-{:04}", static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()), static_cast<int>(ymd.year()));
}

std::string format_fixture_time(Instant t)
{
    auto hms = split(t).hms;
    return fmt::format("{:02}:{:02}", hms.hours().count(), hms.minutes().count());
}

std::chrono::milliseconds parse_duration(std::string_view text)
{
    if (text.empty())
        throw TimeParseError("empty duration");
    double scale = 1.0;
    switch (text.back()) {
    case 's': scale = 1.0; text.remove_suffix(1); break;
    case 'm': scale = 60.0; text.remove_suffix(1); break;
    case 'h': scale = 3600.0; text.remove_suffix(1); break;
    case 'd': scale = 86400.0; text.remove_suffix(1); break;
    default: break;
    }
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value) || value < 0)
        throw TimeParseError(fmt::format("malformed duration '{}'", text));
    return duration_cast<milliseconds>(Seconds(value * scale));
}

} // namespace hydrostat
