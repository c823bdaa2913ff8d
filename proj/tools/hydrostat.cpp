// hydrostat: one binary, one subcommand per mode.
//
//   hydrostat sim          open-loop trajectory CSV
//   hydrostat closed-loop  simulator -> controller -> channel log + summary
//   hydrostat replay       ingest fixture logs, optionally through the controller
//   hydrostat serve        HTTP telemetry API next to a running control loop
//   hydrostat analyze      trial comparison, grand means, survey reliability
//
// Exit codes: 0 success, 2 usage or input error, 1 runtime failure.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hydrostat/commands.hpp"

namespace fs = std::filesystem;
using namespace hydrostat;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string duration;
    std::optional<int> port;
    bool json = false;
    std::vector<std::string> fixtures;
    std::string out = "out";
    bool out_given = false;
    bool control = false;
    std::string trials, survey, item_means;
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

RunConfig build_config(const Options& o)
{
    RunConfig c = o.config.empty() ? default_run_config() : load_run_config(o.config);
    if (o.seed)
        c.sim.rng_seed = *o.seed;
    if (!o.duration.empty()) {
        try {
            c.duration = parse_duration(o.duration);
        } catch (const std::exception& e) {
            throw UsageError(fmt::format("--duration: {}", e.what()));
        }
    }
    if (o.port)
        c.port = *o.port;
    if (!o.fixtures.empty()) {
        c.fixtures.assign(o.fixtures.begin(), o.fixtures.end());
        c.mode = ScenarioMode::Replay;
    }
    validate(c);
    return c;
}

void require_files(const std::vector<fs::path>& paths)
{
    for (const auto& p : paths)
        if (!fs::is_regular_file(p))
            throw UsageError(fmt::format("fixture '{}' does not exist", p.string()));
}

std::shared_ptr<ControlHost> make_host(const RunConfig& c)
{
    return std::make_shared<ControlHost>(Controller(c.thresholds, c.control));
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out)
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

int cmd_sim(const Options& o)
{
    auto c = build_config(o);
    fs::create_directories(o.out);
    auto path = fs::path(o.out) / "trajectory.csv";
    std::ofstream csv(path, std::ios::binary | std::ios::trunc);
    run_sim(c, csv);
    if (!csv)
        throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    std::cout << path.string() << '\n';
    return 0;
}

/// Runs the HTTP server on a background thread for the lifetime of the object.
class ServerThread {
public:
    ServerThread(telemetry::TelemetryService& service, const std::string& host, int port) : server_(service)
    {
        bound_ = server_.bind(host, port);
        if (bound_ < 0)
            throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~ServerThread()
    {
        server_.stop();
        if (thread_.joinable())
            thread_.join();
    }
    int port() const { return bound_; }

private:
    telemetry::HttpServer server_;
    std::thread thread_;
    int bound_ = -1;
};

int cmd_closed_loop(const Options& o)
{
    auto c = build_config(o);
    fs::create_directories(o.out);
    c.data_dir = o.out;
    telemetry::TelemetryService service({c.channel}, c.data_dir);
    auto host = make_host(c);
    service.attach_controller(c.channel.id, host);

    std::optional<ServerThread> server;
    if (o.port) {
        server.emplace(service, c.host, c.port);
        std::cerr << fmt::format("serving on http://{}:{}\n", c.host, server->port());
    }
    auto summary = run_closed_loop(c, service, *host);
    auto json = summary_json(summary);
    write_file(fs::path(o.out) / "summary.json", json + "\n");
    if (o.json)
        std::cout << json << '\n';
    else
        write_summary_text(std::cout, summary);
    return 0;
}

int cmd_replay(const Options& o)
{
    auto c = build_config(o);
    if (c.fixtures.empty())
        throw UsageError("replay needs at least one --fixture");
    require_files(c.fixtures);
    // Parse everything before touching the output directory.
    for (const auto& f : c.fixtures)
        replay_fixture(f);

    fs::create_directories(o.out);
    telemetry::TelemetryService service({c.channel}, o.out);
    auto host = o.control ? make_host(c) : nullptr;
    auto result = run_replay(c.fixtures, service, c.channel, host.get());

    std::size_t invalid_alerts = 0;
    if (host) {
        std::string log;
        for (const auto& row : result.decisions) {
            log += decision_json(row);
            log += '\n';
            for (const auto& a : row.step.decision.alerts)
                invalid_alerts += a.reason == AlertReason::InvalidReading;
        }
        write_file(fs::path(o.out) / "decisions.jsonl", log);
        if (o.json)
            std::cout << log;
    }
    if (!o.json) {
        std::cout << fmt::format("readings        {}\n", result.readings);
        std::cout << fmt::format("out of range    {}\n", result.out_of_range);
        std::cout << fmt::format("entries         {}\n", result.entries);
        std::cout << fmt::format("field values    {}\n", result.field_values);
        if (host)
            std::cout << fmt::format("invalid alerts  {}\n", invalid_alerts);
    }
    return 0;
}

int cmd_serve(const Options& o)
{
    auto c = build_config(o);
    if (c.mode == ScenarioMode::Replay)
        require_files(c.fixtures);
    if (o.out_given)
        c.data_dir = o.out;
    fs::create_directories(c.data_dir);
    telemetry::TelemetryService service({c.channel}, c.data_dir);
    auto host = make_host(c);
    service.attach_controller(c.channel.id, host);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    ServerThread server(service, c.host, c.port);
    std::cerr << fmt::format("serving channel {} on http://{}:{}\n", c.channel.id, c.host, server.port());

    if (c.mode == ScenarioMode::Replay) {
        auto r = run_replay(c.fixtures, service, c.channel, host.get());
        std::cerr << fmt::format("replayed {} entries\n", r.entries);
    } else {
        const auto wall_start = std::chrono::steady_clock::now();
        auto pace = [&](Instant sim_now) {
            auto elapsed = std::chrono::duration<double>(sim_now - c.start).count() / c.speed;
            auto due = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>(elapsed));
            while (!g_stop.load() && std::chrono::steady_clock::now() < due)
                std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
                    due - std::chrono::steady_clock::now(), std::chrono::milliseconds(100)));
        };
        auto summary = run_closed_loop(c, service, *host, {}, &g_stop, pace);
        std::cerr << fmt::format("control loop finished after {} ticks\n", summary.ticks);
    }
    while (!g_stop.load())
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return 0;
}

int cmd_analyze(const Options& o)
{
    AnalyzeInputs in;
    if (!o.config.empty())
        in.thresholds = load_run_config(o.config).thresholds;
    auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
        if (s.empty())
            return std::nullopt;
        if (!fs::is_regular_file(s))
            throw UsageError(fmt::format("input '{}' does not exist", s));
        return fs::path(s);
    };
    in.trials = opt_path(o.trials);
    in.survey = opt_path(o.survey);
    in.item_means = opt_path(o.item_means);
    if (!in.trials && !in.survey && !in.item_means)
        throw UsageError("analyze needs --trials, --survey or --item-means");
    // Render to a buffer so a late input error prints nothing partial.
    std::ostringstream buf;
    run_analyze(in, o.json, buf);
    std::cout << buf.str();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Greenhouse hydroponics monitor: simulate, control, record and evaluate."};
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("--config", o.config, "INI run configuration");
    app.add_option("--seed", o.seed, "simulator seed");
    app.add_option("--duration", o.duration, "simulated duration, e.g. 48h, 90m, 0");
    app.add_option("--port", o.port, "HTTP port (closed-loop: also serve the API)");
    app.add_flag("--json", o.json, "machine-readable output");
    app.add_option("--fixture", o.fixtures, "fixture log (repeatable)");
    auto* out = app.add_option("--out", o.out, "output directory (serve: defaults to [channel] data_dir)")
                    ->capture_default_str();

    auto* sim = app.add_subcommand("sim", "open-loop environment trajectory");
    auto* closed = app.add_subcommand("closed-loop", "run the full pipeline on simulated time");
    auto* replay = app.add_subcommand("replay", "ingest fixture logs");
    replay->add_flag("--control", o.control, "feed every tick to the controller and write decisions.jsonl");
    auto* serve = app.add_subcommand("serve", "serve the telemetry API next to the control loop");
    auto* analyze = app.add_subcommand("analyze", "evaluation reports");
    analyze->add_option("--trials", o.trials, "parameter,trial,prototype,commercial CSV");
    analyze->add_option("--survey", o.survey, "respondent x item Likert CSV");
    analyze->add_option("--item-means", o.item_means, "criterion,item,mean CSV");

    try {
        app.parse(argc, argv);
        o.out_given = out->count() > 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed())
            return cmd_sim(o);
        if (closed->parsed())
            return cmd_closed_loop(o);
        if (replay->parsed())
            return cmd_replay(o);
        if (serve->parsed())
            return cmd_serve(o);
        if (analyze->parsed())
            return cmd_analyze(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const FixtureFormatError& e) {
        std::cerr << "fixture error: " << e.what() << '\n';
        return 2;
    } catch (const eval::InputFormatError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
