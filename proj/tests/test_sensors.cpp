#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "hydrostat/sensors.hpp"
#include "support.hpp"

using namespace hydrostat;

namespace {
const Instant t0 = test::at("2022-05-23T16:19:00Z");
}

TEST_CASE("standard ranges")
{
    CHECK(standard_range(SensorKind::PhLevel).low == 0);
    CHECK(standard_range(SensorKind::PhLevel).high == 14);
    CHECK(standard_range(SensorKind::Light).low == 0);
    CHECK(standard_range(SensorKind::Light).high == 1023);
    CHECK(standard_range(SensorKind::WaterTemperature).low == -55);
    CHECK(standard_range(SensorKind::WaterTemperature).high == 125);
    CHECK(standard_range(SensorKind::GreenhouseTemperature).low == 0);
    CHECK(standard_range(SensorKind::GreenhouseTemperature).high == 50);
    CHECK(standard_range(SensorKind::Humidity).low == 20);
    CHECK(standard_range(SensorKind::Humidity).high == 90);
}

TEST_CASE("kind names round trip")
{
    for (auto k : kAllSensorKinds)
        CHECK(sensor_kind_from_string(to_string(k)) == k);
    CHECK_FALSE(sensor_kind_from_string("Temperature"));
    CHECK_FALSE(sensor_kind_from_string(""));
}

TEST_CASE("validate_reading examples")
{
    CHECK(validate_reading(SensorKind::PhLevel, -4.09, t0).validity == Validity::OutOfRange);
    CHECK(validate_reading(SensorKind::GreenhouseTemperature, 34, t0).validity == Validity::Valid);
    CHECK(validate_reading(SensorKind::Light, 1013, t0).validity == Validity::Valid);
    CHECK(validate_reading(SensorKind::WaterTemperature, 126, t0).validity == Validity::OutOfRange);

    auto r = validate_reading(SensorKind::PhLevel, -4.09, t0);
    CHECK(r.value == -4.09);
    CHECK(r.timestamp == t0);
}

TEST_CASE("non-finite values are rejected")
{
    for (double v : {std::nan(""), std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()})
        for (auto k : kAllSensorKinds)
            CHECK_THROWS_AS(validate_reading(k, v, t0), InvalidInput);
}

TEST_CASE("validity is exactly inclusive range membership (fuzzed around the bounds)")
{
    std::mt19937_64 rng(42);
    for (auto k : kAllSensorKinds) {
        auto r = standard_range(k);
        for (double edge : {r.low, r.high}) {
            CHECK(validate_reading(k, edge, t0).valid());
            CHECK_FALSE(validate_reading(k, std::nextafter(edge, edge == r.low ? -1e9 : 1e9), t0).valid());
            CHECK(validate_reading(k, std::nextafter(edge, edge == r.low ? 1e9 : -1e9), t0).valid());
            std::uniform_real_distribution<double> near(edge - 1.0, edge + 1.0);
            for (int i = 0; i < 2000; ++i) {
                double v = near(rng);
                auto reading = validate_reading(k, v, t0);
                CHECK(reading.valid() == (r.low <= v && v <= r.high));
                // Idempotent: re-validating the stored value gives the same flag.
                CHECK(validate_reading(k, reading.value, t0).validity == reading.validity);
            }
        }
    }
}

TEST_CASE("calibration curve construction")
{
    CHECK_THROWS_AS(CalibrationCurve(0.0, 1.0), InvalidInput);
    CHECK_THROWS_AS(CalibrationCurve(std::nan(""), 1.0), InvalidInput);
    CHECK_THROWS_AS(CalibrationCurve(1.0, std::numeric_limits<double>::infinity()), InvalidInput);
    CHECK(apply_calibration(CalibrationCurve::identity(), 7.77) == 7.77);
}

TEST_CASE("two-point fit examples")
{
    auto c = fit_ph_calibration({512, 7.0}, {614, 4.0});
    CHECK(c(512) == 7.0);
    CHECK(c(614) == 4.0);
    CHECK(apply_calibration(c, 563) == doctest::Approx(5.5).epsilon(1e-12));

    auto full = fit_ph_calibration({0, 0}, {1023, 14});
    CHECK(full.slope() == doctest::Approx(14.0 / 1023.0).epsilon(1e-15));
    CHECK(full.offset() == 0.0);

    CHECK_THROWS_AS(fit_ph_calibration({100, 7.0}, {100, 4.0}), DegenerateCalibration);
    CHECK_THROWS_AS(fit_ph_calibration({100, 7.0}, {200, 7.0}), DegenerateCalibration);
    CHECK_THROWS(fit_ph_calibration({100, std::nan("")}, {200, 4.0}));
}

TEST_CASE("a wrong curve yields negative pH, flagged downstream")
{
    CalibrationCurve wrong(-0.02, 6.0);
    double ph = apply_calibration(wrong, 520);
    CHECK(ph == doctest::Approx(-4.4).epsilon(1e-12));
    CHECK(validate_reading(SensorKind::PhLevel, ph, t0).validity == Validity::OutOfRange);
}

TEST_CASE("fitted curves reproduce their knots (property)")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> raw(-2000, 2000), ph(0, 14);
    for (int i = 0; i < 5000; ++i) {
        CalibrationPoint a{raw(rng), ph(rng)}, b{raw(rng), ph(rng)};
        if (a.raw == b.raw || a.ph == b.ph)
            continue;
        auto c = fit_ph_calibration(a, b);
        for (auto p : {a, b}) {
            double scale = std::max({std::abs(p.ph), std::abs(c.slope() * p.raw), std::abs(c.offset())});
            CHECK(std::abs(apply_calibration(c, p.raw) - p.ph) <= 4 * std::numeric_limits<double>::epsilon() * scale);
        }
    }
}

TEST_CASE("pH fixture: 6 valid, 3 out of range")
{
    auto readings = read_fixture(test::fixture("table4_ph_level.csv"));
    REQUIRE(readings.size() == 9);
    int valid = 0, invalid = 0;
    for (const auto& r : readings) {
        CHECK(r.kind == SensorKind::PhLevel);
        (r.valid() ? valid : invalid) += 1;
        CHECK(r.valid() == (r.value >= 0));
    }
    CHECK(valid == 6);
    CHECK(invalid == 3);
}

TEST_CASE("every bundled sensor fixture parses to nine readings of one kind")
{
    const std::pair<const char*, SensorKind> tables[] = {
        {"table2_greenhouse_temperature.csv", SensorKind::GreenhouseTemperature},
        {"table3_humidity.csv", SensorKind::Humidity},
        {"table4_ph_level.csv", SensorKind::PhLevel},
        {"table5_light.csv", SensorKind::Light},
        {"table6_water_temperature.csv", SensorKind::WaterTemperature},
    };
    for (const auto& [name, kind] : tables) {
        auto readings = read_fixture(test::fixture(name));
        CHECK(readings.size() == 9);
        for (const auto& r : readings)
            CHECK(r.kind == kind);
    }
}

TEST_CASE("fixture parse errors carry the line")
{
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return read_fixture(in, "t.csv");
    };
    CHECK(parse("date,time,kind,value\n").empty());
    CHECK(parse("# comment\ndate,time,kind,value\n05-23-2022,16:19,PhLevel,2.96\n").size() == 1);
    CHECK_THROWS_AS(parse(""), FixtureFormatError);
    CHECK_THROWS_AS(parse("time,date,kind,value\n"), FixtureFormatError);
    try {
        parse("date,time,kind,value\n05-23-2022,16:19,PhLevel,2.96\n05-23-2022,16:26,Acidity,3\n");
        FAIL("expected an error");
    } catch (const FixtureFormatError& e) {
        CHECK(std::string(e.what()).find("t.csv:3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse("date,time,kind,value\n05-23-2022,16:19,PhLevel,abc\n"), FixtureFormatError);
    CHECK_THROWS_AS(parse("date,time,kind,value\n05-23-2022,16:19,PhLevel\n"), FixtureFormatError);
    CHECK_THROWS_AS(parse("date,time,kind,value\n05-23-2022,16:19,PhLevel,nan\n"), FixtureFormatError);
    CHECK_THROWS_AS(read_fixture(test::fixture("does_not_exist.csv")), FixtureFormatError);
}

TEST_CASE("fixture write/read round trip")
{
    auto readings = read_fixture(test::fixture("table6_water_temperature.csv"));
    std::ostringstream out;
    write_fixture(out, readings);
    std::istringstream in(out.str());
    CHECK(read_fixture(in) == readings);
}
