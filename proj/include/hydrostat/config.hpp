#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydrostat/control.hpp"
#include "hydrostat/simulator.hpp"
#include "hydrostat/telemetry.hpp"

namespace hydrostat {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ScenarioMode { Live, Replay };

/// Everything a run needs, assembled from defaults, then the config file,
/// then command-line flags.
///
/// The file is INI-style: `[controller]`, `[scenario]`, `[calibration]`,
/// `[channel]` and `[server]` sections of `key = value` lines, `;` comments.
struct RunConfig {
    Thresholds thresholds{};
    ControlSettings control{};

    ScenarioMode mode = ScenarioMode::Live;
    std::vector<std::filesystem::path> fixtures;
    SimConfig sim{};
    SensorNoise noise{};
    PhProbe probe{};
    Instant start = std::chrono::time_point_cast<std::chrono::milliseconds>(
        std::chrono::sys_days{std::chrono::year{2022} / 5 / 23});
    std::chrono::milliseconds duration = std::chrono::hours{48};
    double speed = 1.0; ///< simulated seconds per wall second in serve mode

    telemetry::ChannelConfig channel{};
    std::filesystem::path data_dir = "data";

    std::string host = "127.0.0.1";
    int port = 3000;
};

/// Defaults suitable for a local run: a private channel with development keys.
RunConfig default_run_config();

/// Throws ConfigError naming the section/key (and line, when known).
RunConfig parse_run_config(std::istream& in, const std::string& source, RunConfig base = default_run_config());
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = default_run_config());

/// Cross-field checks; parse_run_config runs them too.
void validate(const RunConfig& c);

} // namespace hydrostat
