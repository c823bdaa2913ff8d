#include "hydrostat/commands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "strings.hpp"

namespace hydrostat {

using json = nlohmann::json;

void ParameterStats::add(double v)
{
    if (count == 0) {
        min = max = v;
    } else {
        min = std::min(min, v);
        max = std::max(max, v);
    }
    ++count;
    sum_ += v;
    mean = sum_ / static_cast<double>(count);
}

namespace {

std::map<std::size_t, std::string> to_fields(const telemetry::ChannelConfig& channel,
                                             const std::vector<SensorReading>& readings)
{
    std::map<std::size_t, std::string> fields;
    for (const auto& r : readings)
        if (auto f = telemetry::field_for(channel, r.kind))
            fields[*f] = fmt::format("{:.2f}", r.value);
    return fields;
}

json stats_json(const ParameterStats& s)
{
    if (s.count == 0)
        return {{"count", 0}, {"min", nullptr}, {"max", nullptr}, {"mean", nullptr}};
    return {{"count", s.count}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}};
}

json trial_report_json(const eval::TrialReport& report)
{
    json cells = json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"parameter", std::string(to_string(c.row.parameter))},
                         {"trial", c.row.trial},
                         {"prototype", c.row.prototype},
                         {"commercial", c.row.commercial},
                         {"percent_difference", c.percent},
                         {"displayed", c.displayed},
                         {"prototype_in_ideal_range",
                          c.prototype_in_ideal_range ? json(*c.prototype_in_ideal_range) : json(nullptr)}});
    return cells;
}

} // namespace

RunSummary run_closed_loop(const RunConfig& config, telemetry::TelemetryService& service, ControlHost& host,
                           const StepObserver& observer, const std::atomic<bool>* stop,
                           const std::function<void(Instant)>& pace)
{
    const auto& channel = service.channel(config.channel.id);
    service.clear_channel(channel.id, channel.write_key);

    Greenhouse greenhouse(config.sim, config.start, config.noise, config.probe);
    const auto steps_per_tick = static_cast<std::size_t>(std::llround(config.control.tick_seconds / config.sim.dt));
    const auto total_seconds = std::chrono::duration<double>(config.duration).count();
    const auto ticks = static_cast<std::size_t>(std::floor(total_seconds / config.control.tick_seconds + 1e-9));

    RunSummary s;
    std::array<std::optional<Instant>, 3> last_transition{};
    std::size_t scored = 0, in_band = 0;
    const double band_low = host.thresholds().water_low - 2.0;
    const double band_high = host.thresholds().water_high + 2.0;

    for (std::size_t t = 0; t < ticks; ++t) {
        if (stop && stop->load())
            break;
        Instant now = greenhouse.now();
        if (pace)
            pace(now);

        auto sampled = greenhouse.sample();
        std::vector<SensorReading> readings(sampled.begin(), sampled.end());
        for (const auto& r : readings) {
            if (r.valid())
                s.readings[index_of(r.kind)].add(r.value);
            else
                ++s.invalid_readings;
        }

        auto step = host.tick(latest_per_kind(readings), now);
        for (const auto& tr : step.transitions) {
            auto i = index_of(tr.actuator);
            ++s.transitions[i];
            if (last_transition[i]) {
                double gap = seconds_between(*last_transition[i], tr.at);
                s.min_transition_gap[i] = std::min(s.min_transition_gap[i].value_or(gap), gap);
            }
            last_transition[i] = tr.at;
        }

        try {
            service.ingest_update(channel.id, channel.write_key, to_fields(channel, readings), now);
        } catch (const telemetry::TelemetryError& e) {
            if (e.code != telemetry::ErrorCode::Throttled)
                throw;
            ++s.throttled;
        }

        const auto& env = greenhouse.state();
        s.water_state.add(env.water_temp);
        if (env.sim_time >= 3600.0) {
            ++scored;
            if (env.water_temp >= band_low && env.water_temp <= band_high)
                ++in_band;
        }
        if (observer)
            observer(env, step);
        ++s.ticks;

        for (std::size_t k = 0; k < steps_per_tick; ++k)
            greenhouse.advance(step.state);
    }
    s.entries = service.last_entry_id(channel.id);
    s.water_in_band_fraction = scored ? static_cast<double>(in_band) / static_cast<double>(scored) : 1.0;
    return s;
}

void write_summary_text(std::ostream& out, const RunSummary& s)
{
    out << fmt::format("ticks              {}\n", s.ticks);
    out << fmt::format("channel entries    {}\n", s.entries);
    if (s.throttled)
        out << fmt::format("throttled writes   {}\n", s.throttled);
    out << fmt::format("invalid readings   {}\n\n", s.invalid_readings);
    out << fmt::format("{:<24}{:>8}{:>10}{:>10}{:>10}\n", "parameter", "count", "min", "max", "mean");
    for (auto kind : kAllSensorKinds) {
        const auto& st = s.readings[index_of(kind)];
        if (st.count == 0)
            out << fmt::format("{:<24}{:>8}\n", to_string(kind), 0);
        else
            out << fmt::format("{:<24}{:>8}{:>10.2f}{:>10.2f}{:>10.2f}\n", to_string(kind), st.count, st.min, st.max,
                               st.mean);
    }
    if (s.water_state.count > 0)
        out << fmt::format("{:<24}{:>8}{:>10.2f}{:>10.2f}{:>10.2f}\n", "water_temp (true)", s.water_state.count,
                           s.water_state.min, s.water_state.max, s.water_state.mean);
    out << fmt::format("\nwater in band after hour 1: {:.2f}%\n\n", 100.0 * s.water_in_band_fraction);
    for (auto a : kAllActuators) {
        auto i = index_of(a);
        out << fmt::format("{:<14} transitions {:>5}", to_string(a), s.transitions[i]);
        if (s.min_transition_gap[i])
            out << fmt::format("   min gap {:.0f} s", *s.min_transition_gap[i]);
        out << '\n';
    }
}

std::string summary_json(const RunSummary& s)
{
    json readings = json::object();
    for (auto kind : kAllSensorKinds)
        readings[std::string(to_string(kind))] = stats_json(s.readings[index_of(kind)]);
    json acts = json::object();
    for (auto a : kAllActuators) {
        auto i = index_of(a);
        acts[std::string(to_string(a))] = {
            {"transitions", s.transitions[i]},
            {"min_gap_seconds", s.min_transition_gap[i] ? json(*s.min_transition_gap[i]) : json(nullptr)},
        };
    }
    return json{{"ticks", s.ticks},
                {"entries", s.entries},
                {"throttled", s.throttled},
                {"invalid_readings", s.invalid_readings},
                {"readings", std::move(readings)},
                {"water_temp_true", stats_json(s.water_state)},
                {"water_in_band_fraction", s.water_in_band_fraction},
                {"actuators", std::move(acts)}}
        .dump(2);
}

std::string decision_json(const DecisionLogRow& row)
{
    json commands = json::object();
    for (auto a : kAllActuators)
        commands[std::string(to_string(a))] = std::string(to_string(row.step.decision.command(a)));
    json state = json::object();
    for (auto a : kAllActuators)
        state[std::string(to_string(a))] = std::string(to_string(row.step.state[a]));
    json alerts = json::array();
    for (const auto& al : row.step.decision.alerts)
        alerts.push_back({{"parameter", std::string(to_string(al.parameter))}, {"reason", std::string(to_string(al.reason))}});
    json suppressed = json::array();
    for (auto a : row.step.decision.suppressed)
        suppressed.push_back(std::string(to_string(a)));
    json transitions = json::array();
    for (const auto& t : row.step.transitions)
        transitions.push_back({{"actuator", std::string(to_string(t.actuator))}, {"to", std::string(to_string(t.to))}, {"manual", t.manual}});
    return json{{"at", format_rfc3339(row.at)},
                {"commands", std::move(commands)},
                {"state", std::move(state)},
                {"alerts", std::move(alerts)},
                {"suppressed", std::move(suppressed)},
                {"transitions", std::move(transitions)}}
        .dump();
}

ReplayResult run_replay(const std::vector<std::filesystem::path>& fixtures, telemetry::TelemetryService& service,
                        const telemetry::ChannelConfig& channel, ControlHost* host)
{
    std::vector<SensorReading> all;
    for (const auto& path : fixtures) {
        auto readings = replay_fixture(path);
        all.insert(all.end(), readings.begin(), readings.end());
    }
    service.clear_channel(channel.id, channel.write_key);

    ReplayResult result;
    result.readings = all.size();
    result.out_of_range = static_cast<std::size_t>(
        std::count_if(all.begin(), all.end(), [](const SensorReading& r) { return !r.valid(); }));
    for (const auto& tick : group_into_ticks(std::move(all))) {
        auto fields = to_fields(channel, tick.readings);
        // Fixture values are replayed verbatim, not reformatted.
        for (const auto& r : tick.readings)
            if (auto f = telemetry::field_for(channel, r.kind))
                fields[*f] = detail::format_double(r.value);
        result.field_values += fields.size();
        service.ingest_update(channel.id, channel.write_key, fields, tick.at);
        if (host)
            result.decisions.push_back({tick.at, host->tick(latest_per_kind(tick.readings), tick.at)});
    }
    result.entries = service.last_entry_id(channel.id);
    return result;
}

void run_sim(const RunConfig& config, std::ostream& csv)
{
    Greenhouse greenhouse(config.sim, config.start, config.noise, config.probe);
    const auto steps_per_tick = static_cast<std::size_t>(std::llround(config.control.tick_seconds / config.sim.dt));
    const auto total_seconds = std::chrono::duration<double>(config.duration).count();
    const auto ticks = static_cast<std::size_t>(std::floor(total_seconds / config.control.tick_seconds + 1e-9));
    const ActuatorState idle{};

    csv << "created_at,sim_time,air_temp,humidity,light,water_temp,ph";
    for (auto kind : kAllSensorKinds)
        csv << ',' << to_string(kind);
    csv << '\n';
    for (std::size_t t = 0; t < ticks; ++t) {
        const auto& s = greenhouse.state();
        auto now = greenhouse.now();
        auto readings = greenhouse.sample();
        csv << fmt::format("{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f}", format_rfc3339(now), s.sim_time, s.air_temp,
                           s.humidity, s.light, s.water_temp, s.ph);
        for (const auto& r : readings)
            csv << fmt::format(",{:.2f}", r.value);
        csv << '\n';
        for (std::size_t k = 0; k < steps_per_tick; ++k)
            greenhouse.advance(idle);
    }
}

void run_analyze(const AnalyzeInputs& inputs, bool as_json, std::ostream& out)
{
    json doc = json::object();
    bool first = true;
    auto section = [&](std::string_view title) {
        if (!first)
            out << '\n';
        first = false;
        out << title << '\n' << std::string(title.size(), '=') << '\n';
    };

    if (inputs.trials) {
        auto report = eval::compare_trials(eval::read_trials(*inputs.trials), inputs.thresholds);
        if (as_json) {
            doc["trials"] = trial_report_json(report);
        } else {
            section("Prototype vs commercialized device");
            eval::render_trial_table(out, report);
        }
    }
    if (inputs.item_means) {
        auto summaries = eval::summarize_item_means(eval::read_item_means(*inputs.item_means));
        if (as_json) {
            json arr = json::array();
            for (const auto& s : summaries)
                arr.push_back({{"criterion", s.criterion},
                               {"items", s.item_means.size()},
                               {"grand_mean", s.grand.mean},
                               {"displayed", fmt::format("{:.2f}", s.grand.displayed)},
                               {"interpretation", s.grand.band->agreement},
                               {"verbal_equivalent", s.grand.band->quality}});
            doc["grand_means"] = std::move(arr);
        } else {
            section("Grand means");
            eval::render_grand_means(out, summaries);
        }
    }
    if (inputs.survey) {
        auto summary = eval::summarize_survey(eval::read_survey(*inputs.survey));
        if (as_json) {
            json items = json::array();
            for (std::size_t i = 0; i < summary.items.size(); ++i)
                items.push_back({{"label", summary.labels[i]},
                                 {"mean", summary.items[i].mean},
                                 {"std_dev", summary.items[i].std_dev},
                                 {"interpretation", summary.items[i].band->agreement}});
            json s = {{"items", std::move(items)},
                      {"grand_mean", summary.grand.mean},
                      {"interpretation", summary.grand.band->agreement},
                      {"verbal_equivalent", summary.grand.band->quality}};
            if (summary.alpha)
                s["cronbach_alpha"] = {{"raw", summary.alpha->raw},
                                       {"standardized", summary.alpha->standardized},
                                       {"n_items", summary.items.size()}};
            else
                s["cronbach_alpha"] = {{"error", summary.alpha_error}};
            doc["survey"] = std::move(s);
        } else {
            section("Survey");
            eval::render_survey(out, summary);
        }
    }
    if (as_json)
        out << doc.dump(2) << '\n';
}

} // namespace hydrostat
