#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydrostat/control.hpp"
#include "hydrostat/sensors.hpp"
#include "hydrostat/time.hpp"

namespace hydrostat::telemetry {

inline constexpr std::size_t kFieldCount = 8;

struct ChannelConfig {
    std::int64_t id = 1;
    std::string name = "greenhouse";
    std::array<std::string, kFieldCount> field_names = {
        "GreenhouseTemperature", "Humidity", "PhLevel", "Light", "WaterTemperature", "", "", "",
    };
    std::string write_key;
    std::string read_key;
    bool public_read = false;
    double min_update_interval = 15.0; ///< seconds between accepted writes
    bool fsync = true;
};

void validate(const ChannelConfig& c);

/// Field number (1-8) carrying each sensor kind under the channel's field names.
std::optional<std::size_t> field_for(const ChannelConfig& c, SensorKind kind);

struct FieldValue {
    std::string text; ///< exactly as received
    double value;
    std::optional<Validity> validity; ///< set when the field is named after a sensor kind

    friend bool operator==(const FieldValue&, const FieldValue&) = default;
};

struct ChannelEntry {
    std::uint64_t entry_id = 0;
    Instant created_at{};
    std::array<std::optional<FieldValue>, kFieldCount> fields{};

    friend bool operator==(const ChannelEntry&, const ChannelEntry&) = default;
};

enum class ErrorCode { Unauthorized, Throttled, Invalid, NotFound, Conflict, Storage };

struct TelemetryError : std::runtime_error {
    TelemetryError(ErrorCode code, const std::string& message) : std::runtime_error(message), code(code) {}
    ErrorCode code;
};

/// Append-only sequence with one writer and lock-free readers. Entries never
/// move once published, and `size()` is the committed prefix.
class EntryLog {
public:
    EntryLog();
    ~EntryLog();
    EntryLog(const EntryLog&) = delete;
    EntryLog& operator=(const EntryLog&) = delete;

    /// Single writer only.
    void push_back(ChannelEntry entry);
    std::size_t size() const { return committed_.load(std::memory_order_acquire); }
    /// `i` must be below a size() the caller has observed.
    const ChannelEntry& operator[](std::size_t i) const;

    static constexpr std::size_t kChunkSize = 1024;
    static constexpr std::size_t kMaxChunks = 16384;

private:
    struct Chunk;
    std::unique_ptr<std::atomic<Chunk*>[]> chunks_;
    std::atomic<std::size_t> committed_{0};
};

/// Durable per-channel record log: one JSON object per line, appended and
/// flushed before the write is acknowledged. A torn final line left by a crash
/// is dropped on open.
class ChannelStore {
public:
    ChannelStore(std::filesystem::path path, bool fsync);
    ~ChannelStore();
    ChannelStore(const ChannelStore&) = delete;
    ChannelStore& operator=(const ChannelStore&) = delete;

    /// Everything committed by earlier runs.
    std::vector<ChannelEntry> load();
    void append(const ChannelEntry& entry);
    void truncate();

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    bool fsync_;
    int fd_ = -1;
};

std::string encode_record(const ChannelEntry& e);
ChannelEntry decode_record(std::string_view line);

struct FeedFilter {
    std::optional<std::size_t> last_n;
    std::optional<Instant> start; ///< inclusive
    std::optional<Instant> end;   ///< inclusive
};

/// One row of a CSV export, for re-ingestion.
struct ExportRow {
    Instant created_at;
    std::uint64_t entry_id;
    std::map<std::size_t, std::string> fields; ///< 1-based field number -> text
};

std::vector<ExportRow> parse_export_csv(std::string_view csv);

/// Channels, their durable logs, and the control hosts behind the setpoint
/// and actuator endpoints.
class TelemetryService {
public:
    using ClockFn = std::function<Instant()>;

    TelemetryService(std::vector<ChannelConfig> channels, std::filesystem::path data_dir, ClockFn clock = {});
    ~TelemetryService();

    /// `fields` maps field number (1-8) to its decimal text. The entry is on
    /// disk before the id is returned. When `client_time` is absent the
    /// service clock stamps the entry. The rate limit applies to the stamped
    /// times of consecutive accepted entries.
    std::uint64_t ingest_update(std::int64_t channel_id, std::string_view api_key,
                                const std::map<std::size_t, std::string>& fields,
                                std::optional<Instant> client_time = std::nullopt);

    /// Throws Unauthorized when no channel owns the key.
    std::int64_t channel_for_write_key(std::string_view api_key) const;

    /// Ascending entry ids. `read_key` may be empty for public channels; the
    /// write key also grants read access.
    std::vector<ChannelEntry> query_feeds(std::int64_t channel_id, std::string_view read_key,
                                          const FeedFilter& filter = {}) const;

    /// Header `created_at,entry_id,field1,...,field8`, RFC 3339 timestamps,
    /// blank cells for absent fields.
    std::string export_csv(std::int64_t channel_id, std::string_view read_key) const;

    /// Drops every entry of the channel, on disk too.
    void clear_channel(std::int64_t channel_id, std::string_view write_key);

    const ChannelConfig& channel(std::int64_t channel_id) const;
    std::vector<std::int64_t> channel_ids() const;
    std::uint64_t last_entry_id(std::int64_t channel_id) const;

    void attach_controller(std::int64_t channel_id, std::shared_ptr<ControlHost> host);

    Thresholds get_thresholds(std::int64_t channel_id, std::string_view read_key) const;
    /// Forwards to the controller; a ThresholdError leaves it unchanged.
    Thresholds set_thresholds(std::int64_t channel_id, std::string_view write_key,
                              const std::map<std::string, double>& setpoints);
    ControlHost::Snapshot actuators(std::int64_t channel_id, std::string_view read_key) const;
    void override_actuator(std::int64_t channel_id, std::string_view write_key, std::string_view actuator,
                           std::string_view mode);

    Instant now() const { return clock_(); }

private:
    struct Channel;
    Channel& find(std::int64_t id);
    const Channel& find(std::int64_t id) const;
    void require_read(const Channel& c, std::string_view key) const;
    void require_write(const Channel& c, std::string_view key) const;
    ControlHost& host(const Channel& c) const;

    std::map<std::int64_t, std::unique_ptr<Channel>> channels_;
    ClockFn clock_;
};

/// HTTP surface over a TelemetryService.
///
///   POST /update                               ingest (api_key, field1..8, created_at)
///   GET  /channels/<id>/feeds.json             results=N | start=&end=
///   GET  /channels/<id>/feeds.csv
///   DELETE /channels/<id>/feeds
///   GET|PUT /channels/<id>/thresholds
///   GET  /channels/<id>/actuators
///   PUT  /channels/<id>/actuators/<name>/override   body on|off|auto
///
/// Keys come from the `api_key` parameter or the X-THINGSPEAKAPIKEY header.
class HttpServer {
public:
    explicit HttpServer(TelemetryService& service);
    ~HttpServer();

    /// Binds; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen_after_bind();
    void stop();
    bool running() const;
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string feeds_json(const ChannelConfig& channel, const std::vector<ChannelEntry>& entries,
                       std::uint64_t last_entry_id);
std::string thresholds_json(const Thresholds& t);
std::string actuators_json(const ControlHost::Snapshot& s);

} // namespace hydrostat::telemetry
