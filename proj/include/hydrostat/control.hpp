#pragma once

#include <array>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydrostat/sensors.hpp"
#include "hydrostat/time.hpp"

namespace hydrostat {

/// Ideal bands; inside them no actuation is needed.
struct Thresholds {
    double ph_low = 6.5;
    double ph_high = 8.0;
    double water_low = 28.0;
    double water_high = 31.0;
    double air_low = 26.0;
    double air_high = 29.0;
    double humidity_min = 70.0;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

inline constexpr std::array<std::string_view, 7> kThresholdKeys = {
    "ph_low", "ph_high", "water_low", "water_high", "air_low", "air_high", "humidity_min",
};

/// Names the offending setpoint so callers can point at it.
struct ThresholdError : std::invalid_argument {
    ThresholdError(std::string field, const std::string& message)
        : std::invalid_argument(message), field(std::move(field)) {}
    std::string field;
};

/// Overlays `raw` onto `base` and validates the result. Unknown keys,
/// non-finite values, inverted bands and a humidity floor outside (0, 100)
/// are rejected; `base` is never modified.
Thresholds apply_config(const std::map<std::string, double>& raw, const Thresholds& base = {});

void validate(const Thresholds& t);
double get(const Thresholds& t, std::string_view key);
/// Unvalidated assignment; pair with validate().
void set(Thresholds& t, std::string_view key, double value);

enum class Switch { Off, On };
std::string_view to_string(Switch s);

enum class Actuator { CoolingPump, DosingPump, Ventilation };
inline constexpr std::array<Actuator, 3> kAllActuators = {Actuator::CoolingPump, Actuator::DosingPump, Actuator::Ventilation};
constexpr std::size_t index_of(Actuator a) { return static_cast<std::size_t>(a); }

/// `cooling_pump`, `dosing_pump`, `ventilation`.
std::string_view to_string(Actuator a);
std::optional<Actuator> actuator_from_string(std::string_view name);

enum class InvalidReadingPolicy { Hold, Off };

struct ControlSettings {
    double temp_hysteresis = 0.5;
    double ph_hysteresis = 0.2;
    double dwell_seconds = 60.0;
    double tick_seconds = 15.0;
    InvalidReadingPolicy invalid_policy = InvalidReadingPolicy::Hold;
    bool ventilation_enabled = false;
};

void validate(const ControlSettings& s);

struct ActuatorChannel {
    Switch state = Switch::Off;
    std::optional<Instant> last_transition;

    friend bool operator==(const ActuatorChannel&, const ActuatorChannel&) = default;
};

struct ActuatorState {
    std::array<ActuatorChannel, 3> channels{};

    Switch operator[](Actuator a) const { return channels[index_of(a)].state; }
    ActuatorChannel& at(Actuator a) { return channels[index_of(a)]; }
    const ActuatorChannel& at(Actuator a) const { return channels[index_of(a)]; }

    friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

enum class AlertReason { OutOfIdealRange, InvalidReading, HumidityLow, StaleData };
std::string_view to_string(AlertReason r);

struct Alert {
    SensorKind parameter;
    AlertReason reason;

    friend bool operator==(const Alert&, const Alert&) = default;
};

using LatestReadings = std::array<std::optional<SensorReading>, kSensorKindCount>;

/// Keeps the newest reading of each kind.
LatestReadings latest_per_kind(const std::vector<SensorReading>& readings);

struct ControlDecision {
    std::array<Switch, 3> commands{};
    std::vector<Alert> alerts;
    /// Actuators whose command differed from their state but were held by dwell.
    std::vector<Actuator> suppressed;

    Switch command(Actuator a) const { return commands[index_of(a)]; }
    bool has_alert(SensorKind k, AlertReason r) const;

    friend bool operator==(const ControlDecision&, const ControlDecision&) = default;
};

/// One sense/decide pass. Pure: the same inputs always give the same decision.
///
/// Cooling turns on above water_high and off at or below water_high minus the
/// temperature hysteresis. Dosing turns on outside [ph_low, ph_high] and off
/// once pH is back inside the band shrunk by the pH hysteresis on both sides.
/// Ventilation, when enabled, mirrors cooling against air_high. Between the
/// on and off edges the previous state is held. A parameter whose reading is
/// missing (StaleData) or OutOfRange (InvalidReading) never drives its
/// actuator; it holds, or switches off under InvalidReadingPolicy::Off.
ControlDecision evaluate(const LatestReadings& readings, const Thresholds& thresholds,
                         const ControlSettings& settings, const ActuatorState& state);

enum class Override { Auto, ForceOn, ForceOff };
std::string_view to_string(Override o);
std::optional<Override> override_from_string(std::string_view text);

struct Transition {
    Actuator actuator;
    Switch to;
    Instant at;
    bool manual;
};

struct StepResult {
    ActuatorState state;
    ControlDecision decision;
    std::vector<Transition> transitions;
};

struct ClockRegression : std::logic_error {
    using std::logic_error::logic_error;
};

/// Single-actor control loop: evaluate, then enforce dwell and manual overrides.
class Controller {
public:
    explicit Controller(Thresholds thresholds = {}, ControlSettings settings = {}, ActuatorState initial = {});

    /// Throws ClockRegression (leaving the controller untouched) if `now`
    /// precedes the previous tick.
    StepResult step(const LatestReadings& readings, Instant now);

    const Thresholds& thresholds() const { return thresholds_; }
    const ControlSettings& settings() const { return settings_; }
    const ActuatorState& state() const { return state_; }
    std::optional<Instant> last_tick() const { return last_tick_; }

    /// Validated before it replaces the active thresholds.
    void set_thresholds(const Thresholds& t);

    /// Overrides bypass dwell and take effect on the next tick. Forcing
    /// ventilation on while it is disabled throws std::invalid_argument.
    void set_override(Actuator a, Override mode);
    Override override_of(Actuator a) const { return overrides_[index_of(a)]; }

private:
    Thresholds thresholds_;
    ControlSettings settings_;
    ActuatorState state_;
    std::array<Override, 3> overrides_{};
    std::optional<Instant> last_tick_;
};

struct AlertRecord {
    Instant at;
    Alert alert;
};

/// Thread-safe owner of a Controller. Ticks and operator messages
/// (setpoints, overrides) are serialized, so updates land between ticks.
class ControlHost {
public:
    explicit ControlHost(Controller controller, std::size_t alert_history = 64);

    StepResult tick(const LatestReadings& readings, Instant now);

    Thresholds thresholds() const;
    /// Returns the now-active thresholds; throws ThresholdError and keeps the
    /// current ones on rejection.
    Thresholds update_thresholds(const std::map<std::string, double>& raw);

    void set_override(Actuator a, Override mode);

    struct Snapshot {
        ActuatorState state;
        std::array<Override, 3> overrides;
        bool ventilation_enabled;
        std::optional<Instant> last_tick;
        std::vector<AlertRecord> recent_alerts;
    };
    Snapshot snapshot() const;

private:
    mutable std::mutex mutex_;
    Controller controller_;
    std::size_t alert_history_;
    std::deque<AlertRecord> alerts_;
};

} // namespace hydrostat
