#include <charconv>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hydrostat/telemetry.hpp"
#include "strings.hpp"

namespace hydrostat::telemetry {

using json = nlohmann::json;

namespace {

json entry_json(const ChannelEntry& e)
{
    json j = {{"created_at", format_rfc3339(e.created_at)}, {"entry_id", e.entry_id}};
    json invalid = json::array();
    for (std::size_t i = 0; i < kFieldCount; ++i) {
        auto key = fmt::format("field{}", i + 1);
        if (e.fields[i]) {
            j[key] = e.fields[i]->text;
            if (e.fields[i]->validity == Validity::OutOfRange)
                invalid.push_back(key);
        } else {
            j[key] = nullptr;
        }
    }
    j["invalid"] = std::move(invalid);
    return j;
}

json instant_or_null(const std::optional<Instant>& t)
{
    if (!t)
        return nullptr;
    return format_rfc3339(*t);
}

int status_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::Throttled: return 429;
    case ErrorCode::Invalid: return 400;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::Storage: return 500;
    }
    return 500;
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {})
{
    json j = {{"error", message}};
    if (!field.empty())
        j["field"] = field;
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

std::string api_key(const httplib::Request& req)
{
    if (req.has_param("api_key"))
        return req.get_param_value("api_key");
    return req.get_header_value("X-THINGSPEAKAPIKEY");
}

std::int64_t channel_id(const httplib::Request& req)
{
    const auto& m = req.matches[1];
    std::int64_t id = 0;
    auto s = m.str();
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw TelemetryError(ErrorCode::NotFound, fmt::format("channel '{}' not found", s));
    return id;
}

/// Runs a handler, translating domain errors to HTTP statuses.
template <class Fn>
httplib::Server::Handler guarded(Fn fn)
{
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const TelemetryError& e) {
            send_error(res, status_for(e.code), e.what());
        } catch (const ThresholdError& e) {
            send_error(res, 400, e.what(), e.field);
        } catch (const TimeParseError& e) {
            send_error(res, 400, e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, fmt::format("malformed JSON: {}", e.what()));
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    };
}

FeedFilter parse_filter(const httplib::Request& req)
{
    FeedFilter f;
    if (req.has_param("results")) {
        auto v = detail::parse_double(req.get_param_value("results"));
        if (!v || *v < 0 || *v != static_cast<double>(static_cast<std::size_t>(*v)))
            throw TelemetryError(ErrorCode::Invalid, "results must be a non-negative integer");
        f.last_n = static_cast<std::size_t>(*v);
    }
    if (req.has_param("start"))
        f.start = parse_rfc3339(req.get_param_value("start"));
    if (req.has_param("end"))
        f.end = parse_rfc3339(req.get_param_value("end"));
    return f;
}

} // namespace

std::string feeds_json(const ChannelConfig& channel, const std::vector<ChannelEntry>& entries,
                       std::uint64_t last_entry_id)
{
    json ch = {{"id", channel.id}, {"name", channel.name}, {"last_entry_id", last_entry_id}};
    for (std::size_t i = 0; i < kFieldCount; ++i)
        if (!channel.field_names[i].empty())
            ch[fmt::format("field{}", i + 1)] = channel.field_names[i];
    json feeds = json::array();
    for (const auto& e : entries)
        feeds.push_back(entry_json(e));
    return json{{"channel", std::move(ch)}, {"feeds", std::move(feeds)}}.dump();
}

std::string thresholds_json(const Thresholds& t)
{
    json j = json::object();
    for (auto key : kThresholdKeys)
        j[std::string(key)] = get(t, key);
    return j.dump();
}

std::string actuators_json(const ControlHost::Snapshot& s)
{
    json acts = json::object();
    for (auto a : kAllActuators) {
        const auto& ch = s.state.at(a);
        acts[std::string(to_string(a))] = {
            {"state", std::string(to_string(ch.state))},
            {"mode", std::string(s.overrides[index_of(a)] == Override::Auto ? "auto" : "manual")},
            {"override", std::string(to_string(s.overrides[index_of(a)]))},
            {"last_transition", instant_or_null(ch.last_transition)},
        };
    }
    json alerts = json::array();
    for (const auto& r : s.recent_alerts)
        alerts.push_back({{"at", format_rfc3339(r.at)},
                          {"parameter", std::string(to_string(r.alert.parameter))},
                          {"reason", std::string(to_string(r.alert.reason))}});
    return json{{"actuators", std::move(acts)},
                {"ventilation_enabled", s.ventilation_enabled},
                {"last_tick", instant_or_null(s.last_tick)},
                {"alerts", std::move(alerts)}}
        .dump();
}

struct HttpServer::Impl {
    explicit Impl(TelemetryService& svc) : service(svc) { routes(); }

    void routes()
    {
        // The operator dashboard is served from another origin.
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type, X-THINGSPEAKAPIKEY");
            res.status = 204;
        });

        auto update = guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto key = api_key(req);
            auto id = service.channel_for_write_key(key);
            std::map<std::size_t, std::string> fields;
            for (std::size_t i = 1; i <= kFieldCount; ++i)
                if (auto name = fmt::format("field{}", i); req.has_param(name))
                    fields[i] = req.get_param_value(name);
            std::optional<Instant> created;
            if (req.has_param("created_at"))
                created = parse_rfc3339(req.get_param_value("created_at"));
            auto entry_id = service.ingest_update(id, key, fields, created);
            res.set_content(std::to_string(entry_id), "text/plain");
        });
        server.Post("/update", update);
        server.Get("/update", update);

        server.Get(R"(/channels/(\d+)/feeds\.json)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto id = channel_id(req);
            auto entries = service.query_feeds(id, api_key(req), parse_filter(req));
            res.set_content(feeds_json(service.channel(id), entries, service.last_entry_id(id)), "application/json");
        }));

        server.Get(R"(/channels/(\d+)/feeds\.csv)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            res.set_content(service.export_csv(channel_id(req), api_key(req)), "text/csv");
        }));

        server.Delete(R"(/channels/(\d+)/feeds)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            service.clear_channel(channel_id(req), api_key(req));
            res.status = 204;
        }));

        server.Get(R"(/channels/(\d+)/thresholds)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            res.set_content(thresholds_json(service.get_thresholds(channel_id(req), api_key(req))), "application/json");
        }));

        server.Put(R"(/channels/(\d+)/thresholds)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto id = channel_id(req);
            auto key = api_key(req);
            // Authorize before parsing so bad keys never learn about payload errors.
            service.get_thresholds(id, key);
            auto body = json::parse(req.body);
            if (!body.is_object())
                throw TelemetryError(ErrorCode::Invalid, "setpoint payload must be a JSON object");
            std::map<std::string, double> setpoints;
            for (const auto& [k, v] : body.items()) {
                if (!v.is_number())
                    throw ThresholdError(k, fmt::format("{} must be a number", k));
                setpoints[k] = v.get<double>();
            }
            res.set_content(thresholds_json(service.set_thresholds(id, key, setpoints)), "application/json");
        }));

        server.Get(R"(/channels/(\d+)/actuators)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            res.set_content(actuators_json(service.actuators(channel_id(req), api_key(req))), "application/json");
        }));

        server.Put(R"(/channels/(\d+)/actuators/([A-Za-z_]+)/override)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto id = channel_id(req);
                       service.override_actuator(id, api_key(req), req.matches[2].str(), req.body);
                       res.set_content(actuators_json(service.actuators(id, api_key(req))), "application/json");
                   }));
    }

    TelemetryService& service;
    httplib::Server server;
};

HttpServer::HttpServer(TelemetryService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port)
{
    if (port == 0)
        return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop()
{
    if (impl_->server.is_running())
        impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

} // namespace hydrostat::telemetry
