#include <doctest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

#include "hydrostat/control.hpp"
#include "hydrostat/telemetry.hpp"
#include "support.hpp"

using namespace hydrostat;
using namespace hydrostat::telemetry;
using json = nlohmann::json;

namespace {

constexpr const char* kWrite = "WRITEKEY00000001";
constexpr const char* kRead = "READKEY000000001";

ChannelConfig channel()
{
    ChannelConfig c;
    c.write_key = kWrite;
    c.read_key = kRead;
    c.fsync = false;
    return c;
}

/// Service plus a live server on an ephemeral port.
struct Fixture {
    test::TempDir dir;
    ChannelConfig cfg = channel();
    TelemetryService service{{cfg}, dir.path()};
    std::shared_ptr<ControlHost> host = std::make_shared<ControlHost>(Controller{});
    HttpServer server{service};
    std::thread thread;
    int port = -1;

    Fixture()
    {
        service.attach_controller(cfg.id, host);
        port = server.bind("127.0.0.1", 0);
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Fixture()
    {
        server.stop();
        thread.join();
    }

    httplib::Client client() const
    {
        httplib::Client c("127.0.0.1", port);
        c.set_connection_timeout(5);
        c.set_read_timeout(5);
        return c;
    }
    std::string base() const { return "/channels/" + std::to_string(cfg.id); }
};

httplib::Result update(httplib::Client& c, const std::string& key, const std::string& created,
                       std::initializer_list<std::pair<std::string, std::string>> fields)
{
    httplib::Params p{{"api_key", key}, {"created_at", created}};
    for (const auto& [k, v] : fields)
        p.emplace(k, v);
    return c.Post("/update", p);
}

} // namespace

TEST_CASE("update assigns ids and enforces keys, fields and the rate limit")
{
    Fixture f;
    auto c = f.client();

    auto r = update(c, kWrite, "2022-05-23T08:00:00Z", {{"field1", "27"}, {"field5", "29.5"}});
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "1");

    r = update(c, "WRONGKEY", "2022-05-23T08:01:00Z", {{"field1", "27"}});
    CHECK(r->status == 401);
    r = update(c, kRead, "2022-05-23T08:01:00Z", {{"field1", "27"}});
    CHECK(r->status == 401);

    r = update(c, kWrite, "2022-05-23T08:00:05Z", {{"field1", "27"}});
    CHECK(r->status == 429);

    r = update(c, kWrite, "2022-05-23T08:02:00Z", {});
    CHECK(r->status == 400);
    r = update(c, kWrite, "2022-05-23T08:02:00Z", {{"field2", "humid"}});
    CHECK(r->status == 400);
    r = update(c, kWrite, "2022-05-23T07:00:00Z", {{"field2", "70"}});
    CHECK(r->status == 400);

    httplib::Headers h{{"X-THINGSPEAKAPIKEY", kWrite}};
    r = c.Post("/update", h, httplib::Params{{"field3", "7.1"}, {"created_at", "2022-05-23T08:03:00Z"}});
    CHECK(r->status == 200);
    CHECK(r->body == "2");
    CHECK(f.service.last_entry_id(f.cfg.id) == 2);
}

TEST_CASE("feeds.json filters and flags out-of-range fields")
{
    Fixture f;
    auto c = f.client();
    REQUIRE(update(c, kWrite, "2022-05-23T08:00:00Z", {{"field1", "27"}, {"field3", "6.8"}})->status == 200);
    REQUIRE(update(c, kWrite, "2022-05-24T08:00:00Z", {{"field1", "28"}, {"field3", "-9.53"}})->status == 200);
    REQUIRE(update(c, kWrite, "2022-05-25T08:00:00Z", {{"field1", "29"}})->status == 200);

    auto r = c.Get(f.base() + "/feeds.json?api_key=" + kRead);
    REQUIRE(r->status == 200);
    auto j = json::parse(r->body);
    CHECK(j["channel"]["id"] == f.cfg.id);
    CHECK(j["channel"]["last_entry_id"] == 3);
    REQUIRE(j["feeds"].size() == 3);
    CHECK(j["feeds"][0]["field1"] == "27");
    CHECK(j["feeds"][0]["field3"] == "6.8");
    CHECK(j["feeds"][2]["field3"].is_null());
    CHECK(j["feeds"][0]["invalid"].empty());
    CHECK(j["feeds"][1]["invalid"] == json::array({"field3"}));
    CHECK(j["feeds"][1]["created_at"] == "2022-05-24T08:00:00Z");

    j = json::parse(c.Get(f.base() + "/feeds.json?results=1&api_key=" + kRead)->body);
    REQUIRE(j["feeds"].size() == 1);
    CHECK(j["feeds"][0]["entry_id"] == 3);

    j = json::parse(c.Get(f.base() + "/feeds.json?start=2022-05-24T00:00:00Z&end=2022-05-24T23:59:59Z&api_key=" +
                          kRead)
                        ->body);
    REQUIRE(j["feeds"].size() == 1);
    CHECK(j["feeds"][0]["field1"] == "28");

    CHECK(c.Get(f.base() + "/feeds.json")->status == 401);
    CHECK(c.Get(f.base() + "/feeds.json?api_key=" + kWrite)->status == 200);
    CHECK(c.Get("/channels/999/feeds.json?api_key=" + std::string(kRead))->status == 404);
    CHECK(c.Get(f.base() + "/feeds.json?results=abc&api_key=" + kRead)->status == 400);
}

TEST_CASE("feeds.csv matches the service export and DELETE clears the channel")
{
    Fixture f;
    auto c = f.client();
    REQUIRE(update(c, kWrite, "2022-05-23T08:00:00Z", {{"field2", "77"}})->status == 200);
    REQUIRE(update(c, kWrite, "2022-05-23T09:00:00Z", {{"field2", "84"}})->status == 200);

    auto r = c.Get(f.base() + "/feeds.csv?api_key=" + kRead);
    REQUIRE(r->status == 200);
    CHECK(r->body == f.service.export_csv(f.cfg.id, kRead));
    CHECK(r->body.rfind("created_at,entry_id,field1", 0) == 0);

    CHECK(c.Delete(f.base() + "/feeds?api_key=" + kRead)->status == 401);
    CHECK(c.Delete(f.base() + "/feeds?api_key=" + kWrite)->status == 204);
    auto j = json::parse(c.Get(f.base() + "/feeds.json?api_key=" + kRead)->body);
    CHECK(j["feeds"].empty());
    CHECK(update(c, kWrite, "2022-05-23T08:00:00Z", {{"field2", "77"}})->body == "1");
}

TEST_CASE("thresholds can be read and changed; invalid bands are rejected whole")
{
    Fixture f;
    auto c = f.client();
    auto r = c.Get(f.base() + "/thresholds?api_key=" + kRead);
    REQUIRE(r->status == 200);
    auto j = json::parse(r->body);
    CHECK(j["water_high"] == 31.0);
    CHECK(j["ph_low"] == 6.5);

    httplib::Headers w{{"X-THINGSPEAKAPIKEY", kWrite}};
    r = c.Put(f.base() + "/thresholds", w, R"({"ph_low": 9.0, "water_high": 30})", "application/json");
    CHECK(r->status == 400);
    CHECK(json::parse(r->body)["field"] == "ph_low");
    CHECK(f.host->thresholds() == Thresholds{});

    r = c.Put(f.base() + "/thresholds", w, R"({"water_high": "hot"})", "application/json");
    CHECK(r->status == 400);
    r = c.Put(f.base() + "/thresholds", w, "{not json", "application/json");
    CHECK(r->status == 400);
    r = c.Put(f.base() + "/thresholds?api_key=" + std::string(kRead), R"({"water_high": 30})", "application/json");
    CHECK(r->status == 401);

    r = c.Put(f.base() + "/thresholds", w, R"({"water_high": 30})", "application/json");
    REQUIRE(r->status == 200);
    CHECK(json::parse(r->body)["water_high"] == 30.0);
    CHECK(f.host->thresholds().water_high == 30.0);

    // The next tick uses the new band: 30.5 was inside the old one.
    auto now = test::at("2022-05-23T12:00:00Z");
    auto step = f.host->tick(latest_per_kind({validate_reading(SensorKind::WaterTemperature, 30.5, now)}), now);
    CHECK(step.state.at(Actuator::CoolingPump).state == Switch::On);
}

TEST_CASE("actuator snapshot and overrides")
{
    Fixture f;
    auto c = f.client();
    auto r = c.Get(f.base() + "/actuators?api_key=" + kRead);
    REQUIRE(r->status == 200);
    auto j = json::parse(r->body);
    CHECK(j["actuators"]["cooling_pump"]["state"] == "off");
    CHECK(j["actuators"]["cooling_pump"]["mode"] == "auto");
    CHECK(j["ventilation_enabled"] == false);
    CHECK(j["last_tick"].is_null());

    httplib::Headers w{{"X-THINGSPEAKAPIKEY", kWrite}};
    r = c.Put(f.base() + "/actuators/dosing_pump/override", w, "on", "text/plain");
    REQUIRE(r->status == 200);
    j = json::parse(r->body);
    CHECK(j["actuators"]["dosing_pump"]["override"] == "on");

    auto now = test::at("2022-05-23T12:00:00Z");
    auto step = f.host->tick(latest_per_kind({validate_reading(SensorKind::PhLevel, 7.0, now)}), now);
    CHECK(step.state.at(Actuator::DosingPump).state == Switch::On);

    r = c.Put(f.base() + "/actuators/dosing_pump/override", w, "auto\n", "text/plain");
    CHECK(r->status == 200);
    CHECK(json::parse(r->body)["actuators"]["dosing_pump"]["override"] == "auto");

    CHECK(c.Put(f.base() + "/actuators/heater/override", w, "on", "text/plain")->status == 404);
    CHECK(c.Put(f.base() + "/actuators/cooling_pump/override", w, "maybe", "text/plain")->status == 400);
    CHECK(c.Put(f.base() + "/actuators/ventilation/override", w, "on", "text/plain")->status == 409);
    CHECK(c.Put(f.base() + "/actuators/cooling_pump/override?api_key=" + std::string(kRead), "on", "text/plain")
              ->status == 401);
}

TEST_CASE("cross-origin preflight is answered")
{
    Fixture f;
    auto c = f.client();
    auto r = c.Options(f.base() + "/thresholds");
    REQUIRE(r);
    CHECK(r->status == 204);
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(c.Get(f.base() + "/thresholds?api_key=" + kRead)->get_header_value("Access-Control-Allow-Origin") == "*");
}
