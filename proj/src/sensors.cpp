#include "hydrostat/sensors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "strings.hpp"

namespace hydrostat {

std::string_view to_string(SensorKind kind)
{
    switch (kind) {
    case SensorKind::GreenhouseTemperature: return "GreenhouseTemperature";
    case SensorKind::Humidity: return "Humidity";
    case SensorKind::WaterTemperature: return "WaterTemperature";
    case SensorKind::PhLevel: return "PhLevel";
    case SensorKind::Light: return "Light";
    }
    return "?";
}

std::optional<SensorKind> sensor_kind_from_string(std::string_view name)
{
    for (auto kind : kAllSensorKinds)
        if (to_string(kind) == name)
            return kind;
    return std::nullopt;
}

std::string_view to_string(Validity v)
{
    return v == Validity::Valid ? "Valid" : "OutOfRange";
}

SensorReading validate_reading(SensorKind kind, double value, Instant timestamp)
{
    if (!std::isfinite(value))
        throw InvalidInput(fmt::format("{} reading is not a finite number", to_string(kind)));
    auto validity = standard_range(kind).contains(value) ? Validity::Valid : Validity::OutOfRange;
    return {kind, value, timestamp, validity};
}

CalibrationCurve::CalibrationCurve(double slope, double offset)
    : slope_(slope), offset_(offset)
{
    if (!std::isfinite(slope) || !std::isfinite(offset))
        throw InvalidInput("calibration coefficients must be finite");
    if (slope == 0.0)
        throw InvalidInput("calibration slope must be non-zero");
}

CalibrationCurve fit_ph_calibration(CalibrationPoint a, CalibrationPoint b)
{
    if (!std::isfinite(a.raw) || !std::isfinite(b.raw) || !std::isfinite(a.ph) || !std::isfinite(b.ph))
        throw InvalidInput("calibration points must be finite");
    if (a.raw == b.raw)
        throw DegenerateCalibration(fmt::format("both calibration points have raw value {}", a.raw));
    if (a.ph == b.ph)
        throw DegenerateCalibration("calibration points must reference different buffers");
    double slope = (b.ph - a.ph) / (b.raw - a.raw);
    // Anchor the offset on whichever point sits nearer zero to limit cancellation.
    double offset = std::abs(a.raw) <= std::abs(b.raw) ? a.ph - slope * a.raw : b.ph - slope * b.raw;
    return {slope, offset};
}

std::vector<SensorReading> read_fixture(std::istream& in, std::string_view source_name)
{
    std::vector<SensorReading> out;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = detail::trim(line);
        if (text.empty() || text.front() == '#')
            continue;
        auto where = [&] { return fmt::format("{}:{}", source_name, line_no); };
        auto cols = detail::split(text, ',');
        if (!saw_header) {
            if (cols.size() != 4 || cols[0] != "date" || cols[1] != "time" || cols[2] != "kind" || cols[3] != "value")
                throw FixtureFormatError(fmt::format("{}: expected header 'date,time,kind,value'", where()));
            saw_header = true;
            continue;
        }
        if (cols.size() != 4)
            throw FixtureFormatError(fmt::format("{}: expected 4 columns, got {}", where(), cols.size()));
        auto kind = sensor_kind_from_string(cols[2]);
        if (!kind)
            throw FixtureFormatError(fmt::format("{}: unknown sensor kind '{}'", where(), cols[2]));
        auto value = detail::parse_double(cols[3]);
        if (!value)
            throw FixtureFormatError(fmt::format("{}: malformed value '{}'", where(), cols[3]));
        Instant ts;
        try {
            ts = parse_fixture_timestamp(cols[0], cols[1]);
        } catch (const TimeParseError& e) {
            throw FixtureFormatError(fmt::format("{}: {}", where(), e.what()));
        }
        out.push_back(validate_reading(*kind, *value, ts));
    }
    if (!saw_header)
        throw FixtureFormatError(fmt::format("{}: missing header 'date,time,kind,value'", source_name));
    return out;
}

std::vector<SensorReading> read_fixture(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FixtureFormatError(fmt::format("cannot open fixture '{}'", path.string()));
    return read_fixture(in, path.string());
}

void write_fixture(std::ostream& out, const std::vector<SensorReading>& readings)
{
    out << "date,time,kind,value\n";
    for (const auto& r : readings)
        out << format_fixture_date(r.timestamp) << ',' << format_fixture_time(r.timestamp) << ','
            << to_string(r.kind) << ',' << detail::format_double(r.value) << '\n';
}

} // namespace hydrostat
