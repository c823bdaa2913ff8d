#include "hydrostat/telemetry.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "strings.hpp"

namespace hydrostat::telemetry {

using json = nlohmann::json;

void validate(const ChannelConfig& c)
{
    if (c.id <= 0)
        throw std::invalid_argument(fmt::format("channel id must be positive, got {}", c.id));
    if (c.write_key.empty() || c.read_key.empty())
        throw std::invalid_argument(fmt::format("channel {}: write_key and read_key must be set", c.id));
    if (c.write_key == c.read_key)
        throw std::invalid_argument(fmt::format("channel {}: write_key and read_key must differ", c.id));
    if (!std::isfinite(c.min_update_interval) || c.min_update_interval < 0)
        throw std::invalid_argument(fmt::format("channel {}: min_update_interval must be non-negative", c.id));
}

std::optional<std::size_t> field_for(const ChannelConfig& c, SensorKind kind)
{
    for (std::size_t i = 0; i < kFieldCount; ++i)
        if (c.field_names[i] == to_string(kind))
            return i + 1;
    return std::nullopt;
}

// EntryLog

struct EntryLog::Chunk {
    std::array<ChannelEntry, kChunkSize> entries;
};

EntryLog::EntryLog() : chunks_(new std::atomic<Chunk*>[kMaxChunks])
{
    for (std::size_t i = 0; i < kMaxChunks; ++i)
        chunks_[i].store(nullptr, std::memory_order_relaxed);
}

EntryLog::~EntryLog()
{
    for (std::size_t i = 0; i < kMaxChunks; ++i)
        delete chunks_[i].load(std::memory_order_relaxed);
}

void EntryLog::push_back(ChannelEntry entry)
{
    auto n = committed_.load(std::memory_order_relaxed);
    auto chunk_idx = n / kChunkSize;
    if (chunk_idx >= kMaxChunks)
        throw TelemetryError(ErrorCode::Storage, "channel is full");
    auto* chunk = chunks_[chunk_idx].load(std::memory_order_relaxed);
    if (!chunk) {
        chunk = new Chunk;
        chunks_[chunk_idx].store(chunk, std::memory_order_release);
    }
    chunk->entries[n % kChunkSize] = std::move(entry);
    committed_.store(n + 1, std::memory_order_release);
}

const ChannelEntry& EntryLog::operator[](std::size_t i) const
{
    return chunks_[i / kChunkSize].load(std::memory_order_acquire)->entries[i % kChunkSize];
}

// Record encoding

std::string encode_record(const ChannelEntry& e)
{
    json fields = json::object();
    for (std::size_t i = 0; i < kFieldCount; ++i)
        if (e.fields[i])
            fields[std::to_string(i + 1)] = e.fields[i]->text;
    json j = {{"id", e.entry_id}, {"t", format_rfc3339(e.created_at)}, {"f", std::move(fields)}};
    return j.dump();
}

ChannelEntry decode_record(std::string_view line)
{
    auto j = json::parse(line);
    ChannelEntry e;
    e.entry_id = j.at("id").get<std::uint64_t>();
    e.created_at = parse_rfc3339(j.at("t").get<std::string>());
    for (const auto& [key, value] : j.at("f").items()) {
        auto idx = std::stoul(key);
        if (idx < 1 || idx > kFieldCount)
            throw std::runtime_error(fmt::format("field number {} out of range", idx));
        auto text = value.get<std::string>();
        auto v = detail::parse_double(text);
        if (!v)
            throw std::runtime_error(fmt::format("field{} holds non-numeric '{}'", idx, text));
        e.fields[idx - 1] = FieldValue{text, *v, std::nullopt};
    }
    return e;
}

// ChannelStore

ChannelStore::ChannelStore(std::filesystem::path path, bool fsync) : path_(std::move(path)), fsync_(fsync)
{
    if (path_.has_parent_path())
        std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0)
        throw TelemetryError(ErrorCode::Storage,
                             fmt::format("cannot open channel log '{}': {}", path_.string(), std::strerror(errno)));
}

ChannelStore::~ChannelStore()
{
    if (fd_ >= 0)
        ::close(fd_);
}

std::vector<ChannelEntry> ChannelStore::load()
{
    std::ifstream in(path_, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<ChannelEntry> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string::npos)
            break; // torn tail
        ++line_no;
        std::string_view line(content.data() + pos, nl - pos);
        try {
            out.push_back(decode_record(line));
        } catch (const std::exception& e) {
            throw TelemetryError(ErrorCode::Storage,
                                 fmt::format("{}:{}: corrupt record: {}", path_.string(), line_no, e.what()));
        }
        if (out.back().entry_id != out.size())
            throw TelemetryError(ErrorCode::Storage, fmt::format("{}:{}: expected entry {}, found {}", path_.string(),
                                                                 line_no, out.size(), out.back().entry_id));
        pos = nl + 1;
    }
    if (pos < content.size() && ::ftruncate(fd_, static_cast<off_t>(pos)) != 0)
        throw TelemetryError(ErrorCode::Storage,
                             fmt::format("cannot drop torn record in '{}': {}", path_.string(), std::strerror(errno)));
    return out;
}

void ChannelStore::append(const ChannelEntry& entry)
{
    auto line = encode_record(entry);
    line += '\n';
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        auto n = ::write(fd_, p, left);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw TelemetryError(ErrorCode::Storage,
                                 fmt::format("write to '{}' failed: {}", path_.string(), std::strerror(errno)));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (fsync_ && ::fdatasync(fd_) != 0)
        throw TelemetryError(ErrorCode::Storage,
                             fmt::format("fdatasync on '{}' failed: {}", path_.string(), std::strerror(errno)));
}

void ChannelStore::truncate()
{
    if (::ftruncate(fd_, 0) != 0 || (fsync_ && ::fdatasync(fd_) != 0))
        throw TelemetryError(ErrorCode::Storage,
                             fmt::format("cannot truncate '{}': {}", path_.string(), std::strerror(errno)));
}

// Export parsing

std::vector<ExportRow> parse_export_csv(std::string_view csv)
{
    std::vector<ExportRow> rows;
    std::size_t line_no = 0;
    bool header = false;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        auto nl = csv.find('\n', pos);
        auto line = csv.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? csv.size() : nl + 1;
        ++line_no;
        if (detail::trim(line).empty())
            continue;
        auto cols = detail::split(line, ',');
        if (cols.size() != 2 + kFieldCount)
            throw TelemetryError(ErrorCode::Invalid,
                                 fmt::format("export line {}: expected {} columns", line_no, 2 + kFieldCount));
        if (!header) {
            if (cols[0] != "created_at" || cols[1] != "entry_id")
                throw TelemetryError(ErrorCode::Invalid, "export header must start with created_at,entry_id");
            header = true;
            continue;
        }
        ExportRow row;
        try {
            row.created_at = parse_rfc3339(cols[0]);
        } catch (const TimeParseError& e) {
            throw TelemetryError(ErrorCode::Invalid, fmt::format("export line {}: {}", line_no, e.what()));
        }
        auto id = detail::parse_double(cols[1]);
        if (!id || *id < 1)
            throw TelemetryError(ErrorCode::Invalid, fmt::format("export line {}: bad entry_id", line_no));
        row.entry_id = static_cast<std::uint64_t>(*id);
        for (std::size_t i = 0; i < kFieldCount; ++i)
            if (!cols[2 + i].empty())
                row.fields[i + 1] = std::string(cols[2 + i]);
        rows.push_back(std::move(row));
    }
    return rows;
}

// TelemetryService

struct TelemetryService::Channel {
    Channel(ChannelConfig cfg, const std::filesystem::path& dir)
        : config(std::move(cfg)), store(dir / fmt::format("channel-{}.log", config.id), config.fsync)
    {
    }

    ChannelConfig config;
    ChannelStore store;
    std::shared_ptr<EntryLog> log = std::make_shared<EntryLog>();
    std::mutex append_mutex;
    mutable std::mutex host_mutex;
    std::shared_ptr<ControlHost> host;

    void annotate(ChannelEntry& e) const
    {
        for (std::size_t i = 0; i < kFieldCount; ++i) {
            if (!e.fields[i])
                continue;
            if (auto kind = sensor_kind_from_string(config.field_names[i]))
                e.fields[i]->validity = validate_reading(*kind, e.fields[i]->value, e.created_at).validity;
        }
    }
};

TelemetryService::TelemetryService(std::vector<ChannelConfig> channels, std::filesystem::path data_dir, ClockFn clock)
    : clock_(clock ? std::move(clock) : [] { return std::chrono::time_point_cast<std::chrono::milliseconds>(Clock::now()); })
{
    for (auto& cfg : channels) {
        validate(cfg);
        if (channels_.contains(cfg.id))
            throw std::invalid_argument(fmt::format("duplicate channel id {}", cfg.id));
        for (const auto& [id, other] : channels_)
            if (other->config.write_key == cfg.write_key)
                throw std::invalid_argument(fmt::format("channels {} and {} share a write key", id, cfg.id));
        auto id = cfg.id;
        auto ch = std::make_unique<Channel>(std::move(cfg), data_dir);
        for (auto& e : ch->store.load()) {
            ch->annotate(e);
            ch->log->push_back(std::move(e));
        }
        channels_.emplace(id, std::move(ch));
    }
}

TelemetryService::~TelemetryService() = default;

TelemetryService::Channel& TelemetryService::find(std::int64_t id)
{
    auto it = channels_.find(id);
    if (it == channels_.end())
        throw TelemetryError(ErrorCode::NotFound, fmt::format("channel {} not found", id));
    return *it->second;
}

const TelemetryService::Channel& TelemetryService::find(std::int64_t id) const
{
    return const_cast<TelemetryService*>(this)->find(id);
}

void TelemetryService::require_read(const Channel& c, std::string_view key) const
{
    if (c.config.public_read || key == c.config.read_key || key == c.config.write_key)
        return;
    throw TelemetryError(ErrorCode::Unauthorized, "invalid read API key");
}

void TelemetryService::require_write(const Channel& c, std::string_view key) const
{
    if (key != c.config.write_key)
        throw TelemetryError(ErrorCode::Unauthorized, "invalid write API key");
}

std::int64_t TelemetryService::channel_for_write_key(std::string_view api_key) const
{
    for (const auto& [id, ch] : channels_)
        if (ch->config.write_key == api_key)
            return id;
    throw TelemetryError(ErrorCode::Unauthorized, "invalid write API key");
}

std::uint64_t TelemetryService::ingest_update(std::int64_t channel_id, std::string_view api_key,
                                              const std::map<std::size_t, std::string>& fields,
                                              std::optional<Instant> client_time)
{
    auto& ch = find(channel_id);
    require_write(ch, api_key);
    if (fields.empty())
        throw TelemetryError(ErrorCode::Invalid, "no field values supplied");

    ChannelEntry entry;
    for (const auto& [idx, text] : fields) {
        if (idx < 1 || idx > kFieldCount)
            throw TelemetryError(ErrorCode::Invalid, fmt::format("field{} does not exist", idx));
        auto trimmed = detail::trim(text);
        auto v = detail::parse_double(trimmed);
        if (!v)
            throw TelemetryError(ErrorCode::Invalid, fmt::format("field{}: '{}' is not a number", idx, text));
        entry.fields[idx - 1] = FieldValue{std::string(trimmed), *v, std::nullopt};
    }

    std::lock_guard lock(ch.append_mutex);
    auto& log = *ch.log; // only clear_channel replaces it, under the same mutex
    entry.created_at = client_time.value_or(clock_());
    if (auto n = log.size(); n > 0) {
        const auto& last = log[n - 1];
        if (entry.created_at < last.created_at)
            throw TelemetryError(ErrorCode::Invalid,
                                 fmt::format("created_at {} precedes the newest entry ({})",
                                             format_rfc3339(entry.created_at), format_rfc3339(last.created_at)));
        if (seconds_between(last.created_at, entry.created_at) < ch.config.min_update_interval)
            throw TelemetryError(ErrorCode::Throttled,
                                 fmt::format("updates are limited to one every {} s", ch.config.min_update_interval));
    }
    entry.entry_id = log.size() + 1;
    ch.annotate(entry);
    ch.store.append(entry);
    log.push_back(entry);
    return entry.entry_id;
}

std::vector<ChannelEntry> TelemetryService::query_feeds(std::int64_t channel_id, std::string_view read_key,
                                                        const FeedFilter& filter) const
{
    const auto& ch = find(channel_id);
    require_read(ch, read_key);
    auto snapshot = std::atomic_load(&ch.log);
    const auto& log = *snapshot;
    const std::size_t n = log.size();

    // created_at is non-decreasing, so the time window is a contiguous range.
    std::size_t lo = 0, hi = n;
    if (filter.start) {
        std::size_t a = 0, b = n;
        while (a < b) {
            auto m = (a + b) / 2;
            if (log[m].created_at < *filter.start) a = m + 1; else b = m;
        }
        lo = a;
    }
    if (filter.end) {
        std::size_t a = lo, b = n;
        while (a < b) {
            auto m = (a + b) / 2;
            if (log[m].created_at <= *filter.end) a = m + 1; else b = m;
        }
        hi = a;
    }
    if (hi < lo)
        hi = lo;
    if (filter.last_n && hi - lo > *filter.last_n)
        lo = hi - *filter.last_n;

    std::vector<ChannelEntry> out;
    out.reserve(hi - lo);
    for (auto i = lo; i < hi; ++i)
        out.push_back(log[i]);
    return out;
}

std::string TelemetryService::export_csv(std::int64_t channel_id, std::string_view read_key) const
{
    auto entries = query_feeds(channel_id, read_key);
    std::string out = "created_at,entry_id";
    for (std::size_t i = 1; i <= kFieldCount; ++i)
        out += fmt::format(",field{}", i);
    out += '\n';
    for (const auto& e : entries) {
        out += format_rfc3339(e.created_at);
        out += ',';
        out += std::to_string(e.entry_id);
        for (const auto& f : e.fields) {
            out += ',';
            if (f)
                out += f->text;
        }
        out += '\n';
    }
    return out;
}

void TelemetryService::clear_channel(std::int64_t channel_id, std::string_view write_key)
{
    auto& ch = find(channel_id);
    require_write(ch, write_key);
    std::lock_guard lock(ch.append_mutex);
    ch.store.truncate();
    // Readers holding the old log keep a consistent snapshot of it.
    std::atomic_store(&ch.log, std::make_shared<EntryLog>());
}

const ChannelConfig& TelemetryService::channel(std::int64_t channel_id) const { return find(channel_id).config; }

std::vector<std::int64_t> TelemetryService::channel_ids() const
{
    std::vector<std::int64_t> ids;
    for (const auto& [id, _] : channels_)
        ids.push_back(id);
    return ids;
}

std::uint64_t TelemetryService::last_entry_id(std::int64_t channel_id) const
{
    return std::atomic_load(&find(channel_id).log)->size();
}

void TelemetryService::attach_controller(std::int64_t channel_id, std::shared_ptr<ControlHost> host)
{
    auto& ch = find(channel_id);
    std::lock_guard lock(ch.host_mutex);
    ch.host = std::move(host);
}

ControlHost& TelemetryService::host(const Channel& c) const
{
    std::lock_guard lock(c.host_mutex);
    if (!c.host)
        throw TelemetryError(ErrorCode::NotFound, fmt::format("channel {} has no controller attached", c.config.id));
    return *c.host;
}

Thresholds TelemetryService::get_thresholds(std::int64_t channel_id, std::string_view read_key) const
{
    const auto& ch = find(channel_id);
    require_read(ch, read_key);
    return host(ch).thresholds();
}

Thresholds TelemetryService::set_thresholds(std::int64_t channel_id, std::string_view write_key,
                                            const std::map<std::string, double>& setpoints)
{
    const auto& ch = find(channel_id);
    require_write(ch, write_key);
    return host(ch).update_thresholds(setpoints);
}

ControlHost::Snapshot TelemetryService::actuators(std::int64_t channel_id, std::string_view read_key) const
{
    const auto& ch = find(channel_id);
    require_read(ch, read_key);
    return host(ch).snapshot();
}

void TelemetryService::override_actuator(std::int64_t channel_id, std::string_view write_key,
                                         std::string_view actuator, std::string_view mode)
{
    const auto& ch = find(channel_id);
    require_write(ch, write_key);
    auto a = actuator_from_string(actuator);
    if (!a)
        throw TelemetryError(ErrorCode::NotFound, fmt::format("unknown actuator '{}'", actuator));
    auto m = override_from_string(detail::trim(mode));
    if (!m)
        throw TelemetryError(ErrorCode::Invalid, fmt::format("override must be on, off or auto, got '{}'", mode));
    try {
        host(ch).set_override(*a, *m);
    } catch (const std::invalid_argument& e) {
        throw TelemetryError(ErrorCode::Conflict, e.what());
    }
}

} // namespace hydrostat::telemetry
