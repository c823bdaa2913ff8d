#include "hydrostat/control.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace hydrostat {

namespace {

template <class T>
auto& field(T& t, std::string_view key)
{
    if (key == "ph_low") return t.ph_low;
    if (key == "ph_high") return t.ph_high;
    if (key == "water_low") return t.water_low;
    if (key == "water_high") return t.water_high;
    if (key == "air_low") return t.air_low;
    if (key == "air_high") return t.air_high;
    if (key == "humidity_min") return t.humidity_min;
    throw ThresholdError(std::string(key), fmt::format("unknown setpoint '{}'", key));
}

void check_band(double low, double high, std::string_view low_name, std::string_view high_name)
{
    if (low >= high)
        throw ThresholdError(std::string(low_name), fmt::format("{} ≥ {}", low_name, high_name));
}

} // namespace

double get(const Thresholds& t, std::string_view key)
{
    return field(t, key);
}

void set(Thresholds& t, std::string_view key, double value)
{
    field(t, key) = value;
}

void validate(const Thresholds& t)
{
    for (auto key : kThresholdKeys)
        if (!std::isfinite(get(t, key)))
            throw ThresholdError(std::string(key), fmt::format("{} must be a finite number", key));
    check_band(t.ph_low, t.ph_high, "ph_low", "ph_high");
    check_band(t.water_low, t.water_high, "water_low", "water_high");
    check_band(t.air_low, t.air_high, "air_low", "air_high");
    if (!(t.humidity_min > 0.0 && t.humidity_min < 100.0))
        throw ThresholdError("humidity_min", "humidity_min must lie strictly between 0 and 100");
}

Thresholds apply_config(const std::map<std::string, double>& raw, const Thresholds& base)
{
    Thresholds next = base;
    for (const auto& [key, value] : raw)
        field(next, key) = value;
    validate(next);
    return next;
}

void validate(const ControlSettings& s)
{
    auto nonneg = [](double v, std::string_view name) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument(fmt::format("{} must be a finite, non-negative number", name));
    };
    nonneg(s.temp_hysteresis, "temp_hysteresis");
    nonneg(s.ph_hysteresis, "ph_hysteresis");
    nonneg(s.dwell_seconds, "dwell_seconds");
    if (!std::isfinite(s.tick_seconds) || s.tick_seconds <= 0.0)
        throw std::invalid_argument("tick_seconds must be positive");
}

std::string_view to_string(Switch s) { return s == Switch::On ? "on" : "off"; }

std::string_view to_string(Actuator a)
{
    switch (a) {
    case Actuator::CoolingPump: return "cooling_pump";
    case Actuator::DosingPump: return "dosing_pump";
    case Actuator::Ventilation: return "ventilation";
    }
    return "?";
}

std::optional<Actuator> actuator_from_string(std::string_view name)
{
    for (auto a : kAllActuators)
        if (to_string(a) == name)
            return a;
    return std::nullopt;
}

std::string_view to_string(AlertReason r)
{
    switch (r) {
    case AlertReason::OutOfIdealRange: return "OutOfIdealRange";
    case AlertReason::InvalidReading: return "InvalidReading";
    case AlertReason::HumidityLow: return "HumidityLow";
    case AlertReason::StaleData: return "StaleData";
    }
    return "?";
}

std::string_view to_string(Override o)
{
    switch (o) {
    case Override::Auto: return "auto";
    case Override::ForceOn: return "on";
    case Override::ForceOff: return "off";
    }
    return "?";
}

std::optional<Override> override_from_string(std::string_view text)
{
    if (text == "auto") return Override::Auto;
    if (text == "on") return Override::ForceOn;
    if (text == "off") return Override::ForceOff;
    return std::nullopt;
}

LatestReadings latest_per_kind(const std::vector<SensorReading>& readings)
{
    LatestReadings out;
    for (const auto& r : readings) {
        auto& slot = out[index_of(r.kind)];
        if (!slot || slot->timestamp <= r.timestamp)
            slot = r;
    }
    return out;
}

bool ControlDecision::has_alert(SensorKind k, AlertReason r) const
{
    return std::find(alerts.begin(), alerts.end(), Alert{k, r}) != alerts.end();
}

ControlDecision evaluate(const LatestReadings& readings, const Thresholds& thresholds,
                         const ControlSettings& settings, const ActuatorState& state)
{
    ControlDecision d;
    for (auto a : kAllActuators)
        d.commands[index_of(a)] = state[a];

    // Returns the reading only when it may drive actuation.
    auto usable = [&](SensorKind kind, std::optional<Actuator> driven) -> const SensorReading* {
        const auto& r = readings[index_of(kind)];
        if (!r) {
            d.alerts.push_back({kind, AlertReason::StaleData});
            return nullptr;
        }
        if (!r->valid()) {
            d.alerts.push_back({kind, AlertReason::InvalidReading});
            if (driven && settings.invalid_policy == InvalidReadingPolicy::Off)
                d.commands[index_of(*driven)] = Switch::Off;
            return nullptr;
        }
        return &*r;
    };
    auto upper_edge = [&](Actuator a, double v, double high, double hysteresis) {
        if (v > high)
            d.commands[index_of(a)] = Switch::On;
        else if (v <= high - hysteresis)
            d.commands[index_of(a)] = Switch::Off;
    };

    if (auto* r = usable(SensorKind::GreenhouseTemperature,
                         settings.ventilation_enabled ? std::optional{Actuator::Ventilation} : std::nullopt)) {
        if (r->value > thresholds.air_high || r->value < thresholds.air_low)
            d.alerts.push_back({r->kind, AlertReason::OutOfIdealRange});
        if (settings.ventilation_enabled)
            upper_edge(Actuator::Ventilation, r->value, thresholds.air_high, settings.temp_hysteresis);
    }

    if (auto* r = usable(SensorKind::Humidity, std::nullopt)) {
        if (r->value < thresholds.humidity_min)
            d.alerts.push_back({r->kind, AlertReason::HumidityLow});
    }

    if (auto* r = usable(SensorKind::WaterTemperature, Actuator::CoolingPump)) {
        if (r->value > thresholds.water_high)
            d.alerts.push_back({r->kind, AlertReason::OutOfIdealRange});
        upper_edge(Actuator::CoolingPump, r->value, thresholds.water_high, settings.temp_hysteresis);
    }

    if (auto* r = usable(SensorKind::PhLevel, Actuator::DosingPump)) {
        auto& cmd = d.commands[index_of(Actuator::DosingPump)];
        double mid = 0.5 * (thresholds.ph_low + thresholds.ph_high);
        double off_low = std::min(thresholds.ph_low + settings.ph_hysteresis, mid);
        double off_high = std::max(thresholds.ph_high - settings.ph_hysteresis, mid);
        if (r->value < thresholds.ph_low || r->value > thresholds.ph_high) {
            d.alerts.push_back({r->kind, AlertReason::OutOfIdealRange});
            cmd = Switch::On;
        } else if (off_low <= r->value && r->value <= off_high) {
            cmd = Switch::Off;
        }
    }

    usable(SensorKind::Light, std::nullopt);

    if (!settings.ventilation_enabled)
        d.commands[index_of(Actuator::Ventilation)] = Switch::Off;
    return d;
}

Controller::Controller(Thresholds thresholds, ControlSettings settings, ActuatorState initial)
    : thresholds_(thresholds), settings_(settings), state_(initial)
{
    validate(thresholds_);
    validate(settings_);
    if (!settings_.ventilation_enabled)
        state_.at(Actuator::Ventilation).state = Switch::Off;
}

StepResult Controller::step(const LatestReadings& readings, Instant now)
{
    if (last_tick_ && now < *last_tick_)
        throw ClockRegression(fmt::format("tick at {} precedes previous tick at {}", format_rfc3339(now),
                                          format_rfc3339(*last_tick_)));

    StepResult result;
    result.decision = evaluate(readings, thresholds_, settings_, state_);
    ActuatorState next = state_;
    for (auto a : kAllActuators) {
        auto& channel = next.at(a);
        Switch wanted = result.decision.command(a);
        bool manual = false;
        switch (overrides_[index_of(a)]) {
        case Override::ForceOn: wanted = Switch::On; manual = true; break;
        case Override::ForceOff: wanted = Switch::Off; manual = true; break;
        case Override::Auto: break;
        }
        if (wanted == channel.state)
            continue;
        if (!manual && channel.last_transition && seconds_between(*channel.last_transition, now) < settings_.dwell_seconds) {
            result.decision.suppressed.push_back(a);
            continue;
        }
        channel.state = wanted;
        channel.last_transition = now;
        result.transitions.push_back({a, wanted, now, manual});
    }
    state_ = next;
    last_tick_ = now;
    result.state = state_;
    return result;
}

void Controller::set_thresholds(const Thresholds& t)
{
    validate(t);
    thresholds_ = t;
}

void Controller::set_override(Actuator a, Override mode)
{
    if (a == Actuator::Ventilation && !settings_.ventilation_enabled && mode == Override::ForceOn)
        throw std::invalid_argument("ventilation is disabled in the controller configuration");
    overrides_[index_of(a)] = mode;
}

ControlHost::ControlHost(Controller controller, std::size_t alert_history)
    : controller_(std::move(controller)), alert_history_(alert_history)
{
}

StepResult ControlHost::tick(const LatestReadings& readings, Instant now)
{
    std::lock_guard lock(mutex_);
    auto result = controller_.step(readings, now);
    for (const auto& a : result.decision.alerts) {
        alerts_.push_back({now, a});
        if (alerts_.size() > alert_history_)
            alerts_.pop_front();
    }
    return result;
}

Thresholds ControlHost::thresholds() const
{
    std::lock_guard lock(mutex_);
    return controller_.thresholds();
}

Thresholds ControlHost::update_thresholds(const std::map<std::string, double>& raw)
{
    std::lock_guard lock(mutex_);
    auto next = apply_config(raw, controller_.thresholds());
    controller_.set_thresholds(next);
    return next;
}

void ControlHost::set_override(Actuator a, Override mode)
{
    std::lock_guard lock(mutex_);
    controller_.set_override(a, mode);
}

ControlHost::Snapshot ControlHost::snapshot() const
{
    std::lock_guard lock(mutex_);
    Snapshot s;
    s.state = controller_.state();
    for (auto a : kAllActuators)
        s.overrides[index_of(a)] = controller_.override_of(a);
    s.ventilation_enabled = controller_.settings().ventilation_enabled;
    s.last_tick = controller_.last_tick();
    s.recent_alerts.assign(alerts_.begin(), alerts_.end());
    return s;
}

} // namespace hydrostat
