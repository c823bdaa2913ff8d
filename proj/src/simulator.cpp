#include "hydrostat/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace hydrostat {

namespace {

constexpr double kDay = 86400.0;

double relax(double x, double target, double dt, double tau)
{
    return x + (target - x) * (1.0 - std::exp(-dt / tau));
}

/// Moves x toward target by at most `step` without passing it.
double pull_toward(double x, double target, double step)
{
    if (x > target)
        return std::max(target, x - step);
    return std::min(target, x + step);
}

} // namespace

void validate(const SimConfig& c)
{
    auto require = [](bool ok, std::string_view what) {
        if (!ok)
            throw std::invalid_argument(std::string(what));
    };
    require(std::isfinite(c.dt) && c.dt > 0, "dt must be positive");
    require(std::isfinite(c.tau_air) && c.tau_air > 0, "tau_air must be positive");
    require(std::isfinite(c.tau_water) && c.tau_water > 0, "tau_water must be positive");
    require(c.cooling_rate >= 0 && c.dosing_rate >= 0 && c.ventilation_rate >= 0, "rates must be non-negative");
    require(c.ph_drift_sd >= 0 && c.air_noise_sd >= 0 && c.humidity_noise_sd >= 0 && c.light_noise_sd >= 0,
            "noise deviations must be non-negative");
    require(c.air_min <= c.air_max, "air_min must not exceed air_max");
    require(c.humidity_min <= c.humidity_max, "humidity_min must not exceed humidity_max");
    require(c.sunrise_hour < c.sunset_hour, "sunrise_hour must precede sunset_hour");
}

DiurnalBases diurnal_profile(const SimConfig& c, double sim_time)
{
    double tod = std::fmod(sim_time, kDay);
    if (tod < 0)
        tod += kDay;
    double phase = std::cos(2.0 * std::numbers::pi * (tod - c.air_peak_hour * 3600.0) / kDay);

    double air_mid = 0.5 * (c.air_max + c.air_min);
    double air_amp = 0.5 * (c.air_max - c.air_min);
    double hum_mid = 0.5 * (c.humidity_max + c.humidity_min);
    double hum_amp = 0.5 * (c.humidity_max - c.humidity_min);

    double rise = c.sunrise_hour * 3600.0;
    double set = c.sunset_hour * 3600.0;
    double daylight = 0.0;
    if (tod > rise && tod < set)
        daylight = std::sin(std::numbers::pi * (tod - rise) / (set - rise));

    return {
        .air_temp = air_mid + air_amp * phase,
        .light = c.light_night + (c.light_day - c.light_night) * daylight,
        .humidity = hum_mid - hum_amp * phase,
    };
}

EnvState env_step(const EnvState& s, const ActuatorState& commands, const SimConfig& c, Rng& rng)
{
    EnvState n = s;
    n.sim_time = s.sim_time + c.dt;
    auto base = diurnal_profile(c, n.sim_time);

    n.air_temp = relax(s.air_temp, base.air_temp, c.dt, c.tau_air) + rng.normal(c.air_noise_sd);
    if (commands[Actuator::Ventilation] == Switch::On)
        n.air_temp = pull_toward(n.air_temp, c.air_min, c.ventilation_rate * c.dt);
    n.humidity = relax(s.humidity, base.humidity, c.dt, c.tau_air) + rng.normal(c.humidity_noise_sd);
    n.light = relax(s.light, base.light, c.dt, c.tau_air) + rng.normal(c.light_noise_sd);

    n.water_temp = relax(s.water_temp, n.air_temp, c.dt, c.tau_water);
    if (commands[Actuator::CoolingPump] == Switch::On)
        n.water_temp = pull_toward(n.water_temp, c.reservoir_ambient, c.cooling_rate * c.dt);

    n.ph = s.ph + rng.normal(c.ph_drift_sd);
    if (commands[Actuator::DosingPump] == Switch::On)
        n.ph = pull_toward(n.ph, 7.0, c.dosing_rate * c.dt);

    n.humidity = std::clamp(n.humidity, 0.0, 100.0);
    n.light = std::clamp(n.light, 0.0, 1023.0);
    n.ph = std::clamp(n.ph, 0.0, 14.0);
    return n;
}

PhProbe PhProbe::miscalibrated()
{
    return {fit_ph_calibration({512.0, 7.0}, {614.0, 4.0}), CalibrationCurve(-0.02, 6.0)};
}

std::array<SensorReading, kSensorKindCount> sample_sensors(const EnvState& state, const SensorNoise& noise,
                                                           const PhProbe& probe, Rng& rng, Instant timestamp)
{
    auto read = [&](SensorKind kind, double value) { return validate_reading(kind, value, timestamp); };
    double ph_true = state.ph + rng.normal(noise.ph_sd);
    double ph_reported = apply_calibration(probe.calibration, probe.probe.inverse(ph_true));
    std::array<SensorReading, kSensorKindCount> out{
        read(SensorKind::GreenhouseTemperature, state.air_temp + rng.normal(noise.temperature_sd)),
        read(SensorKind::Humidity, state.humidity + rng.normal(noise.humidity_sd)),
        read(SensorKind::WaterTemperature, state.water_temp + rng.normal(noise.temperature_sd)),
        read(SensorKind::PhLevel, ph_reported),
        // 10-bit ADC: saturates rather than reporting past its rails.
        read(SensorKind::Light, std::clamp(state.light + rng.normal(noise.light_sd), 0.0, 1023.0)),
    };
    return out;
}

std::vector<SensorReading> replay_fixture(const std::filesystem::path& path)
{
    auto readings = read_fixture(path);
    std::stable_sort(readings.begin(), readings.end(),
                     [](const SensorReading& a, const SensorReading& b) { return a.timestamp < b.timestamp; });
    return readings;
}

std::vector<ReplayTick> group_into_ticks(std::vector<SensorReading> readings)
{
    std::stable_sort(readings.begin(), readings.end(),
                     [](const SensorReading& a, const SensorReading& b) { return a.timestamp < b.timestamp; });
    std::vector<ReplayTick> ticks;
    for (auto& r : readings) {
        if (ticks.empty() || ticks.back().at != r.timestamp)
            ticks.push_back({r.timestamp, {}});
        ticks.back().readings.push_back(r);
    }
    return ticks;
}

Greenhouse::Greenhouse(SimConfig config, Instant start, SensorNoise noise, PhProbe probe)
    : config_(config), start_(start), noise_(noise), probe_(probe), state_(config.initial),
      process_rng_(config.rng_seed), sensor_rng_(config.rng_seed ^ 0x9e3779b97f4a7c15ULL)
{
    validate(config_);
}

Instant Greenhouse::now() const { return add_seconds(start_, state_.sim_time); }

void Greenhouse::advance(const ActuatorState& commands)
{
    state_ = env_step(state_, commands, config_, process_rng_);
}

std::array<SensorReading, kSensorKindCount> Greenhouse::sample()
{
    return sample_sensors(state_, noise_, probe_, sensor_rng_, now());
}

} // namespace hydrostat
