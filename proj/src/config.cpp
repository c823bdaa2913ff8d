#include "hydrostat/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "strings.hpp"

namespace hydrostat {

namespace {

namespace pt = boost::property_tree;

using Setter = std::function<void(RunConfig&, const std::string&)>;
using SectionTable = std::map<std::string, Setter, std::less<>>;

double to_number(const std::string& text)
{
    auto v = detail::parse_double(text);
    if (!v)
        throw std::invalid_argument(fmt::format("'{}' is not a number", text));
    return *v;
}

bool to_bool(const std::string& text)
{
    if (text == "true" || text == "yes" || text == "on" || text == "1")
        return true;
    if (text == "false" || text == "no" || text == "off" || text == "0")
        return false;
    throw std::invalid_argument(fmt::format("'{}' is not a boolean", text));
}

template <class Member>
Setter num(Member member)
{
    return [member](RunConfig& c, const std::string& v) { std::invoke(member, c) = to_number(v); };
}

SectionTable controller_keys()
{
    SectionTable t;
    for (auto key : kThresholdKeys)
        t.emplace(std::string(key), [key](RunConfig& c, const std::string& v) {
            set(c.thresholds, key, to_number(v));
        });
    t.emplace("temp_hysteresis", num([](RunConfig& c) -> double& { return c.control.temp_hysteresis; }));
    t.emplace("ph_hysteresis", num([](RunConfig& c) -> double& { return c.control.ph_hysteresis; }));
    t.emplace("dwell_seconds", num([](RunConfig& c) -> double& { return c.control.dwell_seconds; }));
    t.emplace("tick_seconds", num([](RunConfig& c) -> double& { return c.control.tick_seconds; }));
    t.emplace("invalid_reading_policy", [](RunConfig& c, const std::string& v) {
        if (v == "hold")
            c.control.invalid_policy = InvalidReadingPolicy::Hold;
        else if (v == "off")
            c.control.invalid_policy = InvalidReadingPolicy::Off;
        else
            throw std::invalid_argument(fmt::format("'{}' is neither hold nor off", v));
    });
    t.emplace("ventilation_enabled", [](RunConfig& c, const std::string& v) { c.control.ventilation_enabled = to_bool(v); });
    return t;
}

SectionTable scenario_keys()
{
    SectionTable t;
    t.emplace("mode", [](RunConfig& c, const std::string& v) {
        if (v == "live")
            c.mode = ScenarioMode::Live;
        else if (v == "replay")
            c.mode = ScenarioMode::Replay;
        else
            throw std::invalid_argument(fmt::format("'{}' is neither live nor replay", v));
    });
    t.emplace("fixtures", [](RunConfig& c, const std::string& v) {
        c.fixtures.clear();
        for (auto part : detail::split(v, ','))
            if (!part.empty())
                c.fixtures.emplace_back(std::string(part));
    });
    t.emplace("seed", [](RunConfig& c, const std::string& v) { c.sim.rng_seed = std::stoull(v); });
    t.emplace("start", [](RunConfig& c, const std::string& v) { c.start = parse_rfc3339(v); });
    t.emplace("duration", [](RunConfig& c, const std::string& v) { c.duration = parse_duration(v); });
    t.emplace("speed", num([](RunConfig& c) -> double& { return c.speed; }));
    t.emplace("miscalibration", [](RunConfig& c, const std::string& v) {
        c.probe = to_bool(v) ? PhProbe::miscalibrated() : PhProbe{};
    });

    auto sim = [&t](const char* key, double SimConfig::*m) {
        t.emplace(key, [m](RunConfig& c, const std::string& v) { c.sim.*m = to_number(v); });
    };
    sim("dt", &SimConfig::dt);
    sim("air_min", &SimConfig::air_min);
    sim("air_max", &SimConfig::air_max);
    sim("air_peak_hour", &SimConfig::air_peak_hour);
    sim("humidity_min", &SimConfig::humidity_min);
    sim("humidity_max", &SimConfig::humidity_max);
    sim("light_day", &SimConfig::light_day);
    sim("light_night", &SimConfig::light_night);
    sim("sunrise_hour", &SimConfig::sunrise_hour);
    sim("sunset_hour", &SimConfig::sunset_hour);
    sim("tau_air", &SimConfig::tau_air);
    sim("tau_water", &SimConfig::tau_water);
    sim("reservoir_ambient", &SimConfig::reservoir_ambient);
    sim("cooling_rate", &SimConfig::cooling_rate);
    sim("ventilation_rate", &SimConfig::ventilation_rate);
    sim("dosing_rate", &SimConfig::dosing_rate);
    sim("ph_drift_sd", &SimConfig::ph_drift_sd);
    sim("air_noise_sd", &SimConfig::air_noise_sd);
    sim("humidity_noise_sd", &SimConfig::humidity_noise_sd);
    sim("light_noise_sd", &SimConfig::light_noise_sd);

    auto init = [&t](const char* key, double EnvState::*m) {
        t.emplace(key, [m](RunConfig& c, const std::string& v) { c.sim.initial.*m = to_number(v); });
    };
    init("initial_air_temp", &EnvState::air_temp);
    init("initial_humidity", &EnvState::humidity);
    init("initial_light", &EnvState::light);
    init("initial_water_temp", &EnvState::water_temp);
    init("initial_ph", &EnvState::ph);

    auto noise = [&t](const char* key, double SensorNoise::*m) {
        t.emplace(key, [m](RunConfig& c, const std::string& v) { c.noise.*m = to_number(v); });
    };
    noise("sensor_noise_temperature", &SensorNoise::temperature_sd);
    noise("sensor_noise_humidity", &SensorNoise::humidity_sd);
    noise("sensor_noise_light", &SensorNoise::light_sd);
    noise("sensor_noise_ph", &SensorNoise::ph_sd);
    return t;
}

SectionTable calibration_keys()
{
    // The probe's true response is fixed by two buffer readings; the applied
    // curve is slope/offset. Keys are applied in file order.
    SectionTable t;
    t.emplace("slope", [](RunConfig& c, const std::string& v) {
        c.probe.calibration = CalibrationCurve(to_number(v), c.probe.calibration.offset());
    });
    t.emplace("offset", [](RunConfig& c, const std::string& v) {
        c.probe.calibration = CalibrationCurve(c.probe.calibration.slope(), to_number(v));
    });
    t.emplace("probe_slope", [](RunConfig& c, const std::string& v) {
        c.probe.probe = CalibrationCurve(to_number(v), c.probe.probe.offset());
    });
    t.emplace("probe_offset", [](RunConfig& c, const std::string& v) {
        c.probe.probe = CalibrationCurve(c.probe.probe.slope(), to_number(v));
    });
    return t;
}

SectionTable channel_keys()
{
    SectionTable t;
    t.emplace("id", [](RunConfig& c, const std::string& v) { c.channel.id = std::stoll(v); });
    t.emplace("name", [](RunConfig& c, const std::string& v) { c.channel.name = v; });
    t.emplace("write_key", [](RunConfig& c, const std::string& v) { c.channel.write_key = v; });
    t.emplace("read_key", [](RunConfig& c, const std::string& v) { c.channel.read_key = v; });
    t.emplace("public_read", [](RunConfig& c, const std::string& v) { c.channel.public_read = to_bool(v); });
    t.emplace("min_update_interval", num([](RunConfig& c) -> double& { return c.channel.min_update_interval; }));
    t.emplace("fsync", [](RunConfig& c, const std::string& v) { c.channel.fsync = to_bool(v); });
    t.emplace("data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; });
    for (std::size_t i = 0; i < telemetry::kFieldCount; ++i)
        t.emplace(fmt::format("field{}", i + 1), [i](RunConfig& c, const std::string& v) {
            if (!v.empty() && !sensor_kind_from_string(v))
                throw std::invalid_argument(fmt::format("'{}' is not a sensor kind", v));
            c.channel.field_names[i] = v;
        });
    return t;
}

SectionTable server_keys()
{
    SectionTable t;
    t.emplace("host", [](RunConfig& c, const std::string& v) { c.host = v; });
    t.emplace("port", [](RunConfig& c, const std::string& v) { c.port = std::stoi(v); });
    return t;
}

const std::map<std::string, SectionTable, std::less<>>& sections()
{
    static const std::map<std::string, SectionTable, std::less<>> table = {
        {"controller", controller_keys()}, {"scenario", scenario_keys()}, {"calibration", calibration_keys()},
        {"channel", channel_keys()},       {"server", server_keys()},
    };
    return table;
}

} // namespace

RunConfig default_run_config()
{
    RunConfig c;
    c.channel.write_key = "DEVWRITEKEY00001";
    c.channel.read_key = "DEVREADKEY000001";
    return c;
}

void validate(const RunConfig& c)
{
    try {
        validate(c.thresholds);
        validate(c.control);
        validate(c.sim);
        telemetry::validate(c.channel);
    } catch (const ThresholdError& e) {
        throw ConfigError(fmt::format("[controller] {}: {}", e.field, e.what()));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    double ratio = c.control.tick_seconds / c.sim.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1)
        throw ConfigError(fmt::format("[controller] tick_seconds ({}) must be a whole multiple of [scenario] dt ({})",
                                      c.control.tick_seconds, c.sim.dt));
    if (!(c.speed > 0))
        throw ConfigError("[scenario] speed must be positive");
    if (c.port < 0 || c.port > 65535)
        throw ConfigError(fmt::format("[server] port {} is out of range", c.port));
    if (c.mode == ScenarioMode::Replay && c.fixtures.empty())
        throw ConfigError("[scenario] mode = replay needs fixtures");
}

RunConfig parse_run_config(std::istream& in, const std::string& source, RunConfig base)
{
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
    }
    const auto& table = sections();
    for (const auto& [section, body] : tree) {
        auto sec = table.find(section);
        if (sec == table.end() || body.empty())
            throw ConfigError(fmt::format("{}: unknown section [{}]", source, section));
        for (const auto& [key, node] : body) {
            auto setter = sec->second.find(key);
            if (setter == sec->second.end())
                throw ConfigError(fmt::format("{}: unknown key '{}' in [{}]", source, key, section));
            auto value = std::string(detail::trim(node.get_value<std::string>()));
            try {
                setter->second(base, value);
            } catch (const ThresholdError& e) {
                throw ConfigError(fmt::format("{}: [{}] {}: {}", source, section, key, e.what()));
            } catch (const std::exception& e) {
                throw ConfigError(fmt::format("{}: [{}] {}: {}", source, section, key, e.what()));
            }
        }
    }
    validate(base);
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
    return parse_run_config(in, path.string(), std::move(base));
}

} // namespace hydrostat
