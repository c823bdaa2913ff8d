#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hydrostat/config.hpp"
#include "hydrostat/control.hpp"
#include "hydrostat/evaluation.hpp"
#include "hydrostat/simulator.hpp"
#include "hydrostat/telemetry.hpp"

namespace hydrostat {

struct ParameterStats {
    std::size_t count = 0;
    double min = 0;
    double max = 0;
    double mean = 0;

    void add(double v);

private:
    double sum_ = 0;
};

struct RunSummary {
    std::size_t ticks = 0;
    std::uint64_t entries = 0;
    std::size_t throttled = 0;
    std::array<ParameterStats, kSensorKindCount> readings{}; ///< valid readings only
    std::size_t invalid_readings = 0;
    ParameterStats water_state{}; ///< true water temperature at each tick
    /// Share of ticks after the first simulated hour with the true water
    /// temperature inside [water_low - 2, water_high + 2].
    double water_in_band_fraction = 1.0;
    std::array<std::size_t, 3> transitions{};
    std::array<std::optional<double>, 3> min_transition_gap{}; ///< seconds
};

using StepObserver = std::function<void(const EnvState&, const StepResult&)>;

/// Simulator -> sensors -> controller -> telemetry, for config.duration of
/// simulated time. Clears the channel first so reruns are reproducible.
/// `stop` (when given) ends the run early; `pace` runs before every tick.
RunSummary run_closed_loop(const RunConfig& config, telemetry::TelemetryService& service, ControlHost& host,
                           const StepObserver& observer = {}, const std::atomic<bool>* stop = nullptr,
                           const std::function<void(Instant)>& pace = {});

void write_summary_text(std::ostream& out, const RunSummary& s);
std::string summary_json(const RunSummary& s);

struct DecisionLogRow {
    Instant at;
    StepResult step;
};

std::string decision_json(const DecisionLogRow& row);

struct ReplayResult {
    std::size_t readings = 0;
    std::size_t out_of_range = 0;
    std::uint64_t entries = 0;
    std::size_t field_values = 0;
    std::vector<DecisionLogRow> decisions;
};

/// Groups fixture readings by timestamp, ingests one entry per timestamp with
/// the fixture time as the client timestamp, and optionally feeds each tick to
/// `host`. Clears the channel first.
ReplayResult run_replay(const std::vector<std::filesystem::path>& fixtures, telemetry::TelemetryService& service,
                        const telemetry::ChannelConfig& channel, ControlHost* host);

/// Open-loop simulation trajectory, one CSV row per tick.
void run_sim(const RunConfig& config, std::ostream& csv);

struct AnalyzeInputs {
    std::optional<std::filesystem::path> trials;
    std::optional<std::filesystem::path> survey;
    std::optional<std::filesystem::path> item_means;
    Thresholds thresholds{};
};

/// Prints the reports as text, or one JSON document when `as_json`.
void run_analyze(const AnalyzeInputs& inputs, bool as_json, std::ostream& out);

} // namespace hydrostat
