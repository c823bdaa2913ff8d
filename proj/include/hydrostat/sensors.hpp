#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydrostat/time.hpp"

namespace hydrostat {

enum class SensorKind {
    GreenhouseTemperature,
    Humidity,
    WaterTemperature,
    PhLevel,
    Light,
};

inline constexpr std::array<SensorKind, 5> kAllSensorKinds = {
    SensorKind::GreenhouseTemperature, SensorKind::Humidity, SensorKind::WaterTemperature,
    SensorKind::PhLevel, SensorKind::Light,
};

inline constexpr std::size_t kSensorKindCount = kAllSensorKinds.size();

constexpr std::size_t index_of(SensorKind kind) { return static_cast<std::size_t>(kind); }

std::string_view to_string(SensorKind kind);
std::optional<SensorKind> sensor_kind_from_string(std::string_view name);

enum class Validity { Valid, OutOfRange };

std::string_view to_string(Validity v);

struct ValueRange {
    double low;
    double high;

    constexpr bool contains(double v) const { return low <= v && v <= high; }
};

/// Physically reportable range of each sensor, inclusive at both ends:
/// DHT11 temperature and humidity, PH4502C, DS18B20 and the LDR module.
constexpr ValueRange standard_range(SensorKind kind)
{
    switch (kind) {
    case SensorKind::GreenhouseTemperature: return {0.0, 50.0};
    case SensorKind::Humidity: return {20.0, 90.0};
    case SensorKind::WaterTemperature: return {-55.0, 125.0};
    case SensorKind::PhLevel: return {0.0, 14.0};
    case SensorKind::Light: return {0.0, 1023.0};
    }
    return {0.0, 0.0};
}

struct SensorReading {
    SensorKind kind;
    double value;
    Instant timestamp;
    Validity validity;

    bool valid() const { return validity == Validity::Valid; }
    friend bool operator==(const SensorReading&, const SensorReading&) = default;
};

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Throws InvalidInput for NaN or infinite values.
SensorReading validate_reading(SensorKind kind, double value, Instant timestamp);

/// Affine map from raw probe output (ADC counts or millivolts) to pH units.
class CalibrationCurve {
public:
    static CalibrationCurve identity() { return {1.0, 0.0}; }

    /// Throws InvalidInput when slope is zero or either coefficient is non-finite.
    CalibrationCurve(double slope, double offset);

    double slope() const { return slope_; }
    double offset() const { return offset_; }

    double operator()(double raw) const { return slope_ * raw + offset_; }
    double inverse(double ph) const { return (ph - offset_) / slope_; }

    friend bool operator==(const CalibrationCurve&, const CalibrationCurve&) = default;

private:
    double slope_;
    double offset_;
};

struct CalibrationPoint {
    double raw;
    double ph;
};

struct DegenerateCalibration : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Two-point buffer calibration. The returned curve reproduces both
/// reference points.
CalibrationCurve fit_ph_calibration(CalibrationPoint a, CalibrationPoint b);

inline double apply_calibration(const CalibrationCurve& curve, double raw) { return curve(raw); }

// Fixture files: `date,time,kind,value` with MM-DD-YYYY dates, HH:MM times.
// Lines starting with '#' are comments.

struct FixtureFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parsed in file order; every reading is validated.
std::vector<SensorReading> read_fixture(std::istream& in, std::string_view source_name = "<stream>");
std::vector<SensorReading> read_fixture(const std::filesystem::path& path);

void write_fixture(std::ostream& out, const std::vector<SensorReading>& readings);

} // namespace hydrostat
