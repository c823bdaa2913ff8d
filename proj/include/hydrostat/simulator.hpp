#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "hydrostat/control.hpp"
#include "hydrostat/sensors.hpp"
#include "hydrostat/time.hpp"

namespace hydrostat {

struct EnvState {
    double air_temp = 27.0;
    double humidity = 80.0;
    double light = 1013.0;
    double water_temp = 28.5;
    double ph = 7.0;
    double sim_time = 0.0; ///< seconds since the start of the run; 0 is midnight

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Defaults are read off the logged May data: air 26-34 °C, humidity
/// 46-84 %RH, LDR around 83 counts by day and 1013 after dark.
struct SimConfig {
    std::uint64_t rng_seed = 1;
    double dt = 15.0;

    double air_min = 26.0;
    double air_max = 34.0;
    double air_peak_hour = 13.0;
    double humidity_min = 46.0;
    double humidity_max = 84.0;
    double light_day = 83.0;
    double light_night = 1013.0;
    double sunrise_hour = 6.0;
    double sunset_hour = 18.0;

    double tau_air = 900.0;   ///< relaxation of air, humidity and light toward their bases (s)
    double tau_water = 3600.0;
    double reservoir_ambient = 27.0;
    double cooling_rate = 0.005;     ///< °C/s
    double ventilation_rate = 0.003; ///< °C/s toward air_min
    double dosing_rate = 0.002;      ///< pH/s toward 7.0
    double ph_drift_sd = 0.005;      ///< per step

    double air_noise_sd = 0.02;
    double humidity_noise_sd = 0.1;
    double light_noise_sd = 1.0;

    EnvState initial{};
};

void validate(const SimConfig& c);

struct DiurnalBases {
    double air_temp;
    double light;
    double humidity;
};

/// Air is a 24 h cosine peaking at air_peak_hour, humidity runs in
/// anti-phase, light follows a half-sine day between sunrise and sunset.
DiurnalBases diurnal_profile(const SimConfig& config, double sim_time);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double normal(double sd)
    {
        if (sd <= 0.0)
            return 0.0;
        return std::normal_distribution<double>(0.0, sd)(engine_);
    }

private:
    std::mt19937_64 engine_;
};

/// Advances one dt. Actuator effects: cooling pulls water toward the
/// reservoir ambient, dosing pulls pH toward 7.0, ventilation pulls air toward
/// air_min; none of them overshoot their target. Clamps are applied last.
EnvState env_step(const EnvState& state, const ActuatorState& commands, const SimConfig& config, Rng& rng);

struct SensorNoise {
    double temperature_sd = 0.2;
    double humidity_sd = 1.0;
    double light_sd = 5.0;
    double ph_sd = 0.05;

    static SensorNoise none() { return {0.0, 0.0, 0.0, 0.0}; }
};

/// How the pH probe is read. The probe maps true pH to a raw signal via
/// `probe.inverse`; the controller then sees `calibration(raw)`. Two identity
/// curves report pH unchanged; a wrong calibration reproduces the negative
/// logs of an unadjusted PH4502C.
struct PhProbe {
    CalibrationCurve probe = CalibrationCurve::identity();
    CalibrationCurve calibration = CalibrationCurve::identity();

    /// Raw ADC counts 512 at pH 7 and 614 at pH 4, read with a curve that was
    /// never fitted to them.
    static PhProbe miscalibrated();
};

std::array<SensorReading, kSensorKindCount> sample_sensors(const EnvState& state, const SensorNoise& noise,
                                                           const PhProbe& probe, Rng& rng, Instant timestamp);

/// Readings of a fixture CSV in timestamp order (stable for equal instants).
std::vector<SensorReading> replay_fixture(const std::filesystem::path& path);

/// Merges several fixtures and groups the readings into ticks by timestamp.
struct ReplayTick {
    Instant at;
    std::vector<SensorReading> readings;
};
std::vector<ReplayTick> group_into_ticks(std::vector<SensorReading> readings);

/// Owns state and RNG for a live simulation run.
class Greenhouse {
public:
    Greenhouse(SimConfig config, Instant start, SensorNoise noise = {}, PhProbe probe = {});

    const EnvState& state() const { return state_; }
    const SimConfig& config() const { return config_; }
    Instant now() const;

    void advance(const ActuatorState& commands);
    std::array<SensorReading, kSensorKindCount> sample();

private:
    SimConfig config_;
    Instant start_;
    SensorNoise noise_;
    PhProbe probe_;
    EnvState state_;
    Rng process_rng_;
    Rng sensor_rng_;
};

} // namespace hydrostat
