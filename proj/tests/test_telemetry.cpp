#include <doctest.h>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "hydrostat/simulator.hpp"
#include "hydrostat/telemetry.hpp"
#include "support.hpp"

using namespace hydrostat;
using namespace hydrostat::telemetry;

namespace {

constexpr const char* kWrite = "WRITEKEY00000001";
constexpr const char* kRead = "READKEY000000001";

ChannelConfig channel(double interval = 15.0, bool fsync = false)
{
    ChannelConfig c;
    c.write_key = kWrite;
    c.read_key = kRead;
    c.min_update_interval = interval;
    c.fsync = fsync;
    return c;
}

/// Strictly increasing fake clock, one second per call.
TelemetryService::ClockFn ticking_clock(Instant from = test::at("2022-05-23T00:00:00Z"))
{
    auto n = std::make_shared<std::atomic<long>>(0);
    return [n, from] { return add_seconds(from, static_cast<double>(n->fetch_add(1))); };
}

std::uint64_t replay_into(TelemetryService& svc, const ChannelConfig& c, const char* fixture)
{
    std::uint64_t last = 0;
    for (const auto& r : replay_fixture(test::fixture(fixture))) {
        auto f = field_for(c, r.kind);
        REQUIRE(f);
        std::ostringstream text;
        text << r.value;
        last = svc.ingest_update(c.id, kWrite, {{*f, text.str()}}, r.timestamp);
    }
    return last;
}

} // namespace

TEST_CASE("channel config validation")
{
    CHECK_NOTHROW(validate(channel()));
    auto c = channel();
    c.write_key = "";
    CHECK_THROWS(validate(c));
    c = channel();
    c.read_key = c.write_key;
    CHECK_THROWS(validate(c));
    c = channel();
    c.id = 0;
    CHECK_THROWS(validate(c));
    c = channel();
    c.min_update_interval = -1;
    CHECK_THROWS(validate(c));
    CHECK(field_for(channel(), SensorKind::GreenhouseTemperature) == 1u);
    CHECK(field_for(channel(), SensorKind::WaterTemperature) == 5u);
    CHECK_THROWS(TelemetryService({channel(), channel()}, test::TempDir().path()));
}

TEST_CASE("record encoding round trip")
{
    ChannelEntry e;
    e.entry_id = 7;
    e.created_at = test::at("2022-05-25T10:38:00Z");
    e.fields[0] = FieldValue{"26", 26, Validity::Valid};
    e.fields[2] = FieldValue{"-4.09", -4.09, Validity::OutOfRange};
    e.fields[6] = FieldValue{"1e3", 1000, std::nullopt};
    auto line = encode_record(e);
    CHECK(line.find('\n') == std::string::npos);
    // Validity is derived from the channel's field names on load, not stored.
    auto expected = e;
    for (auto& f : expected.fields)
        if (f)
            f->validity.reset();
    CHECK(decode_record(line) == expected);
    CHECK_THROWS(decode_record("{\"id\":1"));
    CHECK_THROWS(decode_record("not json"));
}

TEST_CASE("ingest round trip and read-your-writes")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path(), ticking_clock());
    auto id = svc.ingest_update(1, kWrite, {{1, "26"}});
    CHECK(id == 1);
    auto feeds = svc.query_feeds(1, kRead);
    REQUIRE(feeds.size() == 1);
    CHECK(feeds[0].entry_id == 1);
    CHECK(feeds[0].fields[0]->text == "26");
    CHECK(feeds[0].fields[0]->value == 26);
    CHECK(feeds[0].fields[0]->validity == Validity::Valid);
    CHECK_FALSE(feeds[0].fields[1].has_value());
}

TEST_CASE("decimal text is stored exactly as received")
{
    test::TempDir dir;
    TelemetryService svc({channel(0)}, dir.path(), ticking_clock());
    for (const char* text : {"7.770", "0.1", "-3.89", "1013", "28.875000000000004"})
        svc.ingest_update(1, kWrite, {{3, text}});
    auto feeds = svc.query_feeds(1, kRead);
    CHECK(feeds[0].fields[2]->text == "7.770");
    CHECK(feeds[2].fields[2]->validity == Validity::OutOfRange);
    CHECK(feeds[4].fields[2]->text == "28.875000000000004");
}

TEST_CASE("authorization and validation errors leave the store unchanged")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path(), ticking_clock());
    auto expect = [&](auto fn, ErrorCode code) {
        try {
            fn();
            FAIL("expected TelemetryError");
        } catch (const TelemetryError& e) {
            CHECK(e.code == code);
        }
    };
    expect([&] { svc.ingest_update(1, "WRONG", {{1, "26"}}); }, ErrorCode::Unauthorized);
    expect([&] { svc.ingest_update(1, kRead, {{1, "26"}}); }, ErrorCode::Unauthorized);
    expect([&] { svc.ingest_update(1, kWrite, {}); }, ErrorCode::Invalid);
    expect([&] { svc.ingest_update(1, kWrite, {{9, "1"}}); }, ErrorCode::Invalid);
    expect([&] { svc.ingest_update(1, kWrite, {{1, "warm"}}); }, ErrorCode::Invalid);
    expect([&] { svc.ingest_update(1, kWrite, {{1, "nan"}}); }, ErrorCode::Invalid);
    expect([&] { svc.ingest_update(2, kWrite, {{1, "26"}}); }, ErrorCode::NotFound);
    expect([&] { svc.query_feeds(1, "WRONG"); }, ErrorCode::Unauthorized);
    expect([&] { svc.query_feeds(1, ""); }, ErrorCode::Unauthorized);
    CHECK(svc.last_entry_id(1) == 0);
    CHECK(svc.query_feeds(1, kWrite).empty()); // the write key also reads
}

TEST_CASE("public channels read without a key")
{
    test::TempDir dir;
    auto c = channel();
    c.public_read = true;
    TelemetryService svc({c}, dir.path(), ticking_clock());
    svc.ingest_update(1, kWrite, {{1, "26"}});
    CHECK(svc.query_feeds(1, "").size() == 1);
}

TEST_CASE("rate limit")
{
    test::TempDir dir;
    TelemetryService svc({channel(15)}, dir.path());
    auto t = test::at("2022-05-23T16:19:00Z");
    CHECK(svc.ingest_update(1, kWrite, {{1, "26"}}, t) == 1);
    try {
        svc.ingest_update(1, kWrite, {{1, "27"}}, add_seconds(t, 5));
        FAIL("expected throttling");
    } catch (const TelemetryError& e) {
        CHECK(e.code == ErrorCode::Throttled);
    }
    CHECK_THROWS(svc.ingest_update(1, kWrite, {{1, "27"}}, add_seconds(t, 14.999)));
    CHECK(svc.ingest_update(1, kWrite, {{1, "27"}}, add_seconds(t, 15)) == 2);
    CHECK(svc.last_entry_id(1) == 2);
    // A client timestamp older than the newest entry is rejected outright.
    try {
        svc.ingest_update(1, kWrite, {{1, "28"}}, add_seconds(t, -60));
        FAIL("expected rejection");
    } catch (const TelemetryError& e) {
        CHECK(e.code == ErrorCode::Invalid);
    }
}

TEST_CASE("property: accepted timestamps are at least the interval apart")
{
    test::TempDir dir;
    TelemetryService svc({channel(15)}, dir.path());
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> gap_ms(0, 30000);
    Instant t = test::at("2022-05-23T00:00:00Z");
    for (int i = 0; i < 3000; ++i) {
        t += std::chrono::milliseconds(gap_ms(rng));
        try {
            svc.ingest_update(1, kWrite, {{1, "1"}}, t);
        } catch (const TelemetryError& e) {
            CHECK(e.code == ErrorCode::Throttled);
        }
    }
    auto feeds = svc.query_feeds(1, kRead);
    CHECK(feeds.size() > 100);
    for (std::size_t i = 1; i < feeds.size(); ++i) {
        CHECK(feeds[i].entry_id == feeds[i - 1].entry_id + 1);
        CHECK(seconds_between(feeds[i - 1].created_at, feeds[i].created_at) >= 15.0);
    }
}

TEST_CASE("replaying the air temperature fixture into field1")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path());
    CHECK(replay_into(svc, channel(), "table2_greenhouse_temperature.csv") == 9);
    auto feeds = svc.query_feeds(1, kRead);
    REQUIRE(feeds.size() == 9);
    CHECK(feeds.back().fields[0]->value == 33);
    auto newest = svc.query_feeds(1, kRead, {.last_n = 1});
    REQUIRE(newest.size() == 1);
    CHECK(newest[0].entry_id == 9);
    CHECK(svc.query_feeds(1, kRead, {.last_n = 0}).empty());
    CHECK(svc.query_feeds(1, kRead, {.last_n = 100}).size() == 9);
}

TEST_CASE("time range covering 05-24 of the humidity fixture")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path());
    replay_into(svc, channel(), "table3_humidity.csv");
    FeedFilter day{.start = test::at("2022-05-24T00:00:00Z"), .end = test::at("2022-05-24T23:59:59Z")};
    auto feeds = svc.query_feeds(1, kRead, day);
    REQUIRE(feeds.size() == 3);
    CHECK(feeds[0].fields[1]->text == "77");
    CHECK(feeds[1].fields[1]->text == "84");
    CHECK(feeds[2].fields[1]->text == "73");

    // Inclusive bounds; a window between entries is empty.
    auto exact = svc.query_feeds(1, kRead, {.start = test::at("2022-05-24T17:48:00Z"), .end = test::at("2022-05-24T17:48:00Z")});
    CHECK(exact.size() == 1);
    CHECK(svc.query_feeds(1, kRead, {.start = test::at("2022-05-24T18:00:00Z"), .end = test::at("2022-05-24T18:05:00Z")})
              .empty());
    CHECK(svc.query_feeds(1, kRead, {.start = test::at("2022-05-25T00:00:00Z"), .end = test::at("2022-05-24T00:00:00Z")})
              .empty());
    auto last_of_day = svc.query_feeds(1, kRead, {.last_n = 1, .start = day.start, .end = day.end});
    REQUIRE(last_of_day.size() == 1);
    CHECK(last_of_day[0].fields[1]->text == "73");
}

TEST_CASE("csv export")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path());
    svc.ingest_update(1, kWrite, {{1, "26"}}, test::at("2022-05-23T16:19:00Z"));
    CHECK(svc.export_csv(1, kRead) ==
          "created_at,entry_id,field1,field2,field3,field4,field5,field6,field7,field8\n"
          "2022-05-23T16:19:00Z,1,26,,,,,,,\n");
}

TEST_CASE("water temperature export has nine rows peaking at 32.69")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path());
    replay_into(svc, channel(), "table6_water_temperature.csv");
    auto rows = parse_export_csv(svc.export_csv(1, kRead));
    REQUIRE(rows.size() == 9);
    double hi = -1e9;
    for (const auto& r : rows)
        hi = std::max(hi, std::stod(r.fields.at(5)));
    CHECK(hi == 32.69);
}

TEST_CASE("export, wipe, re-ingest, export is byte-identical")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path());
    for (auto name : {"table2_greenhouse_temperature.csv"})
        replay_into(svc, channel(), name);
    auto first = svc.export_csv(1, kRead);
    svc.clear_channel(1, kWrite);
    CHECK(svc.last_entry_id(1) == 0);
    CHECK(svc.query_feeds(1, kRead).empty());
    for (const auto& row : parse_export_csv(first))
        svc.ingest_update(1, kWrite, row.fields, row.created_at);
    CHECK(svc.export_csv(1, kRead) == first);
}

TEST_CASE("entries survive a restart; a torn tail is dropped")
{
    test::TempDir dir;
    {
        TelemetryService svc({channel(0, true)}, dir.path(), ticking_clock());
        for (int i = 0; i < 5; ++i)
            svc.ingest_update(1, kWrite, {{1, std::to_string(20 + i)}});
    }
    auto log = dir / "channel-1.log";
    REQUIRE(std::filesystem::exists(log));
    {
        std::ofstream out(log, std::ios::app | std::ios::binary);
        out << R"({"id":6,"t":"2022-05-23T00:00:09Z","f":{"1":"2)"; // no newline: torn
    }
    TelemetryService svc({channel(0, true)}, dir.path(), ticking_clock(test::at("2022-05-24T00:00:00Z")));
    CHECK(svc.last_entry_id(1) == 5);
    auto feeds = svc.query_feeds(1, kRead);
    REQUIRE(feeds.size() == 5);
    CHECK(feeds[4].fields[0]->text == "24");
    CHECK(svc.ingest_update(1, kWrite, {{1, "99"}}) == 6);

    TelemetryService again({channel(0, true)}, dir.path(), ticking_clock(test::at("2022-05-25T00:00:00Z")));
    CHECK(again.last_entry_id(1) == 6);
    CHECK(again.query_feeds(1, kRead).back().fields[0]->text == "99");
}

TEST_CASE("a corrupt record in the middle of the log is an error, not silent loss")
{
    test::TempDir dir;
    std::ofstream(dir / "channel-1.log") << R"({"id":1,"t":"2022-05-23T00:00:00Z","f":{"1":"26"}})" << "\n"
                                         << "garbage\n"
                                         << R"({"id":3,"t":"2022-05-23T00:00:30Z","f":{"1":"27"}})" << "\n";
    CHECK_THROWS_AS(TelemetryService({channel()}, dir.path()), TelemetryError);
}

TEST_CASE("concurrent writers get gapless ids")
{
    test::TempDir dir;
    TelemetryService svc({channel(0)}, dir.path(), ticking_clock());
    constexpr int kThreads = 8, kPerThread = 125;
    std::vector<std::vector<std::uint64_t>> ids(kThreads);
    std::atomic<bool> go{false};
    std::vector<std::thread> threads;
    std::atomic<std::size_t> reader_max{0};
    std::thread reader([&] {
        while (!go.load()) {
        }
        std::size_t seen = 0;
        while (seen < kThreads * kPerThread) {
            auto feeds = svc.query_feeds(1, kRead);
            for (std::size_t i = 0; i < feeds.size(); ++i)
                if (feeds[i].entry_id != i + 1)
                    return;
            seen = feeds.size();
            reader_max = seen;
        }
    });
    for (int t = 0; t < kThreads; ++t)
        threads.emplace_back([&, t] {
            while (!go.load()) {
            }
            for (int i = 0; i < kPerThread; ++i)
                ids[t].push_back(svc.ingest_update(1, kWrite, {{1, std::to_string(t)}}));
        });
    go = true;
    for (auto& th : threads)
        th.join();
    reader.join();
    std::set<std::uint64_t> all;
    for (const auto& v : ids) {
        for (std::size_t i = 1; i < v.size(); ++i)
            CHECK(v[i] > v[i - 1]);
        all.insert(v.begin(), v.end());
    }
    CHECK(all.size() == kThreads * kPerThread);
    CHECK(*all.begin() == 1);
    CHECK(*all.rbegin() == kThreads * kPerThread);
    CHECK(reader_max.load() == kThreads * kPerThread);
}

TEST_CASE("SIGKILL between writes loses no acknowledged entry")
{
    test::TempDir dir;
    int fds[2];
    REQUIRE(pipe(fds) == 0);
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        close(fds[0]);
        TelemetryService svc({channel(0, true)}, dir.path(), ticking_clock());
        for (std::uint64_t i = 0;; ++i) {
            auto id = svc.ingest_update(1, kWrite, {{1, std::to_string(i)}});
            if (write(fds[1], &id, sizeof id) != sizeof id)
                _exit(1);
        }
    }
    close(fds[1]);
    std::uint64_t acked = 0, id = 0;
    while (acked < 200 && read(fds[0], &id, sizeof id) == sizeof id)
        acked = id;
    kill(pid, SIGKILL);
    while (read(fds[0], &id, sizeof id) == sizeof id)
        acked = id;
    close(fds[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    CHECK(WIFSIGNALED(status));

    TelemetryService svc({channel(0, true)}, dir.path(), ticking_clock(test::at("2030-01-01T00:00:00Z")));
    auto feeds = svc.query_feeds(1, kRead);
    CHECK(feeds.size() >= acked);
    for (std::size_t i = 0; i < feeds.size(); ++i) {
        CHECK(feeds[i].entry_id == i + 1);
        CHECK(feeds[i].fields[0]->text == std::to_string(i));
    }
    CHECK(svc.ingest_update(1, kWrite, {{1, "-1"}}) == feeds.size() + 1);
}

TEST_CASE("thresholds and actuators need an attached controller")
{
    test::TempDir dir;
    TelemetryService svc({channel()}, dir.path());
    try {
        svc.get_thresholds(1, kRead);
        FAIL("expected NotFound");
    } catch (const TelemetryError& e) {
        CHECK(e.code == ErrorCode::NotFound);
    }
    auto host = std::make_shared<ControlHost>(Controller{});
    svc.attach_controller(1, host);
    CHECK(svc.get_thresholds(1, kRead) == Thresholds{});
    CHECK_THROWS_AS(svc.set_thresholds(1, kRead, {{"water_high", 30}}), TelemetryError);
    CHECK_THROWS_AS(svc.set_thresholds(1, kWrite, {{"ph_low", 8}, {"ph_high", 6.5}}), ThresholdError);
    CHECK(svc.get_thresholds(1, kRead) == Thresholds{});
    CHECK(svc.set_thresholds(1, kWrite, {{"water_high", 30}}).water_high == 30);

    svc.override_actuator(1, kWrite, "cooling_pump", "on");
    CHECK(svc.actuators(1, kRead).overrides[index_of(Actuator::CoolingPump)] == Override::ForceOn);
    auto code_of = [&](auto fn) {
        try {
            fn();
        } catch (const TelemetryError& e) {
            return e.code;
        }
        return ErrorCode::Storage;
    };
    CHECK(code_of([&] { svc.override_actuator(1, kWrite, "heater", "on"); }) == ErrorCode::NotFound);
    CHECK(code_of([&] { svc.override_actuator(1, kWrite, "cooling_pump", "max"); }) == ErrorCode::Invalid);
    CHECK(code_of([&] { svc.override_actuator(1, kWrite, "ventilation", "on"); }) == ErrorCode::Conflict);
    CHECK(code_of([&] { svc.override_actuator(1, kRead, "cooling_pump", "off"); }) == ErrorCode::Unauthorized);
}
