#include "tuhr/store.hpp"

#include <fcntl.h>
#include <sodium.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "tuhr/error.hpp"

namespace tuhr::store {

namespace fs = std::filesystem;
using alerting::AlertEvent;
using alerting::AlertKind;
using dispatch::DispatchPlan;

std::string_view to_string(EventKind k) noexcept
{
    switch (k) {
    case EventKind::ReadingAccepted: return "READING_ACCEPTED";
    case EventKind::BinEmptied: return "BIN_EMPTIED";
    case EventKind::AlertRaised: return "ALERT_RAISED";
    case EventKind::AlertResolved: return "ALERT_RESOLVED";
    case EventKind::PlanCreated: return "PLAN_CREATED";
    case EventKind::ConfigChanged: return "CONFIG_CHANGED";
    }
    return "READING_ACCEPTED";
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept
{
    for (auto k : {EventKind::ReadingAccepted, EventKind::BinEmptied, EventKind::AlertRaised,
                   EventKind::AlertResolved, EventKind::PlanCreated, EventKind::ConfigChanged}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Payload codecs

Json to_json(const AlertEvent& a)
{
    return Json{{"alert_id", a.alert_id},
                {"kind", alerting::to_string(a.kind)},
                {"bin_id", a.bin_id},
                {"raised_ts", format_iso8601(a.raised_ts)},
                {"resolved_ts", timestamp_to_json(a.resolved_ts)},
                {"detail", a.detail}};
}

AlertEvent alert_from_json(const Json& j)
{
    AlertEvent a;
    a.alert_id = j.at("alert_id").get<std::string>();
    auto kind = alerting::parse_alert_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error("INVALID", "unknown alert kind");
    a.kind = *kind;
    a.bin_id = j.at("bin_id").get<std::string>();
    a.raised_ts = required_timestamp(j, "raised_ts");
    a.resolved_ts = timestamp_from_json(j.value("resolved_ts", Json()));
    a.detail = j.value("detail", std::string{});
    return a;
}

Json to_json(const DispatchPlan& p)
{
    Json routes = Json::array();
    for (const auto& r : p.routes)
        routes.push_back(Json{{"worker_id", r.worker_id}, {"stops", r.stops}, {"length_m", r.length_m}});
    return Json{{"plan_id", p.plan_id},
                {"created_ts", format_iso8601(p.created_ts)},
                {"routes", std::move(routes)},
                {"stale", p.stale},
                {"unassigned", p.unassigned},
                {"capacity_exhausted", p.capacity_exhausted}};
}

DispatchPlan plan_from_json(const Json& j)
{
    DispatchPlan p;
    p.plan_id = j.at("plan_id").get<std::string>();
    p.created_ts = required_timestamp(j, "created_ts");
    for (const auto& r : j.at("routes")) {
        dispatch::Route route;
        route.worker_id = r.at("worker_id").get<std::string>();
        route.stops = r.at("stops").get<std::vector<std::string>>();
        route.length_m = r.at("length_m").get<double>();
        p.routes.push_back(std::move(route));
    }
    p.stale = j.value("stale", false);
    p.unassigned = j.value("unassigned", std::vector<std::string>{});
    p.capacity_exhausted = j.value("capacity_exhausted", false);
    return p;
}

namespace {

Json reading_to_json(const ReadingAccepted& r)
{
    return Json{{"bin_id", r.bin_id},
                {"v", r.reading.version},
                {"sid", r.reading.sensor_id},
                {"seq", r.reading.seq},
                {"ts", format_iso8601(r.reading.ts)},
                {"dist_cm", r.reading.distance_cm},
                {"gas_ppm", r.reading.gas_ppm},
                {"batt_pct", r.reading.battery_pct}};
}

ReadingAccepted reading_from_json(const Json& j)
{
    ReadingAccepted r;
    r.bin_id = j.at("bin_id").get<std::string>();
    r.reading.version = j.value("v", 1);
    r.reading.sensor_id = j.at("sid").get<std::string>();
    r.reading.seq = j.at("seq").get<std::uint64_t>();
    r.reading.ts = required_timestamp(j, "ts");
    r.reading.distance_cm = j.at("dist_cm").get<double>();
    r.reading.gas_ppm = j.at("gas_ppm").get<double>();
    r.reading.battery_pct = j.at("batt_pct").get<double>();
    return r;
}

struct ConfigToJson {
    Json operator()(const ZoneUpsert& c) const { return Json{{"op", "zone_upsert"}, {"zone", c.zone}}; }
    Json operator()(const ZoneDelete& c) const { return Json{{"op", "zone_delete"}, {"zone_id", c.zone_id}}; }
    Json operator()(const SensorUpsert& c) const { return Json{{"op", "sensor_upsert"}, {"sensor", c.config}}; }
    Json operator()(const SensorDelete& c) const
    {
        return Json{{"op", "sensor_delete"}, {"sensor_id", c.sensor_id}};
    }
    Json operator()(const WorkerUpsert& c) const { return Json{{"op", "worker_upsert"}, {"worker", c.worker}}; }
    Json operator()(const WorkerDelete& c) const
    {
        return Json{{"op", "worker_delete"}, {"worker_id", c.worker_id}};
    }
    Json operator()(const ThresholdsSet& c) const
    {
        return Json{{"op", "thresholds_set"}, {"thresholds", c.thresholds}};
    }
};

ConfigChange config_from_json(const Json& j)
{
    const auto op = j.at("op").get<std::string>();
    if (op == "zone_upsert") return ZoneUpsert{j.at("zone").get<Zone>()};
    if (op == "zone_delete") return ZoneDelete{j.at("zone_id").get<std::string>()};
    if (op == "sensor_upsert") return SensorUpsert{j.at("sensor").get<BinConfig>()};
    if (op == "sensor_delete") return SensorDelete{j.at("sensor_id").get<std::string>()};
    if (op == "worker_upsert") return WorkerUpsert{j.at("worker").get<WorkerProfile>()};
    if (op == "worker_delete") return WorkerDelete{j.at("worker_id").get<std::string>()};
    if (op == "thresholds_set") return ThresholdsSet{j.at("thresholds").get<Thresholds>()};
    throw Error("INVALID", "unknown config op " + op);
}

struct PayloadToJson {
    Json operator()(const ReadingAccepted& p) const { return reading_to_json(p); }
    Json operator()(const BinEmptied& p) const
    {
        return Json{{"bin_id", p.bin_id}, {"ts", format_iso8601(p.ts)}, {"by", p.by}};
    }
    Json operator()(const AlertRaised& p) const { return to_json(p.alert); }
    Json operator()(const AlertResolved& p) const
    {
        return Json{{"alert_id", p.alert_id}, {"resolved_ts", format_iso8601(p.resolved_ts)}, {"detail", p.detail}};
    }
    Json operator()(const PlanCreated& p) const { return to_json(p.plan); }
    Json operator()(const ConfigChanged& p) const { return std::visit(ConfigToJson{}, p.change); }
};

}  // namespace

Json to_json(const EventRecord& e)
{
    return Json{{"offset", e.offset},
                {"ts", format_iso8601(e.ts)},
                {"kind", to_string(e.kind())},
                {"payload", std::visit(PayloadToJson{}, e.payload)}};
}

std::string serialize_event_line(const EventRecord& e)
{
    // Field order offset, ts, kind, payload keeps the log readable.
    nlohmann::ordered_json j;
    j["offset"] = e.offset;
    j["ts"] = format_iso8601(e.ts);
    j["kind"] = to_string(e.kind());
    j["payload"] = std::visit(PayloadToJson{}, e.payload);
    auto line = j.dump();
    line.push_back('\n');
    return line;
}

EventRecord event_from_json(const Json& j)
{
    try {
        EventRecord e;
        e.offset = j.at("offset").get<std::uint64_t>();
        e.ts = required_timestamp(j, "ts");
        auto kind = parse_event_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error("INVALID", "unknown event kind");
        const auto& p = j.at("payload");
        switch (*kind) {
        case EventKind::ReadingAccepted: e.payload = reading_from_json(p); break;
        case EventKind::BinEmptied:
            e.payload = BinEmptied{p.at("bin_id").get<std::string>(), required_timestamp(p, "ts"),
                                   p.value("by", std::string{})};
            break;
        case EventKind::AlertRaised: e.payload = AlertRaised{alert_from_json(p)}; break;
        case EventKind::AlertResolved:
            e.payload = AlertResolved{p.at("alert_id").get<std::string>(), required_timestamp(p, "resolved_ts"),
                                      p.value("detail", std::string{})};
            break;
        case EventKind::PlanCreated: e.payload = PlanCreated{plan_from_json(p)}; break;
        case EventKind::ConfigChanged: e.payload = ConfigChanged{config_from_json(p)}; break;
        }
        return e;
    } catch (const Error& err) {
        throw Error("CORRUPT_LOG", err.what());
    } catch (const nlohmann::json::exception& err) {
        throw Error("CORRUPT_LOG", err.what());
    }
}

// ---------------------------------------------------------------------------
// State

void SystemState::reindex()
{
    sensor_to_bin.clear();
    for (const auto& [id, b] : bins) sensor_to_bin[b.config.sensor_id] = id;
    open_alert_ids.clear();
    for (const auto& [id, a] : alerts)
        if (a.open()) open_alert_ids[{a.bin_id, a.kind}] = id;
}

std::vector<AlertEvent> SystemState::open_alerts() const
{
    std::vector<AlertEvent> out;
    for (const auto& [key, id] : open_alert_ids) out.push_back(alerts.at(id));
    return out;
}

std::vector<AlertEvent> SystemState::open_alerts_for(const std::string& bin_id) const
{
    std::vector<AlertEvent> out;
    for (auto it = open_alert_ids.lower_bound({bin_id, AlertKind::FullBin});
         it != open_alert_ids.end() && it->first.first == bin_id; ++it)
        out.push_back(alerts.at(it->second));
    return out;
}

std::vector<BinRecord> SystemState::bin_list() const
{
    std::vector<BinRecord> out;
    out.reserve(bins.size());
    for (const auto& [id, b] : bins) out.push_back(b);
    return out;
}

std::vector<WorkerProfile> SystemState::worker_list() const
{
    std::vector<WorkerProfile> out;
    for (const auto& [id, w] : workers) out.push_back(w);
    return out;
}

const BinRecord* SystemState::bin_by_sensor(const std::string& sensor_id) const
{
    auto it = sensor_to_bin.find(sensor_id);
    if (it == sensor_to_bin.end()) return nullptr;
    auto b = bins.find(it->second);
    return b == bins.end() ? nullptr : &b->second;
}

Json bin_view(const BinRecord& b)
{
    return Json{{"bin_id", b.config.bin_id},
                {"sensor_id", b.config.sensor_id},
                {"zone_id", b.config.zone_id},
                {"location", b.config.location},
                {"depth_cm", b.config.depth_cm},
                {"full_offset_cm", b.config.full_offset_cm},
                {"fill", b.fill},
                {"state", to_string(b.state)},
                {"last_reading_ts", timestamp_to_json(b.last_reading_ts)},
                {"last_gas_ppm", b.last_gas_ppm}};
}

Json plan_view(const SystemState& s)
{
    if (!s.plan) return Json{{"plan", nullptr}, {"stale", s.plan_stale}};
    auto p = *s.plan;
    p.stale = s.plan_stale;
    return Json{{"plan", to_json(p)}, {"stale", s.plan_stale}};
}

namespace {

bool plan_contains(const std::optional<DispatchPlan>& plan, const std::string& bin_id)
{
    if (!plan) return false;
    for (const auto& r : plan->routes)
        if (std::find(r.stops.begin(), r.stops.end(), bin_id) != r.stops.end()) return true;
    return false;
}

struct Folder {
    SystemState& s;
    const EventRecord& e;
    std::vector<Notification>& out;

    void note(std::string type, Json data) { out.push_back({e.offset, std::move(type), std::move(data)}); }

    void operator()(const ReadingAccepted& p)
    {
        s.dedupe.mark(p.reading.sensor_id, p.reading.seq);
        auto it = s.bins.find(p.bin_id);
        if (it == s.bins.end()) return;
        auto after = apply_reading(it->second, p.reading.distance_cm, p.reading.gas_ppm, p.reading.ts, s.thresholds);
        if (after == it->second) return;
        it->second = std::move(after);
        note("bin_state", bin_view(it->second));
    }

    void operator()(const BinEmptied& p)
    {
        auto it = s.bins.find(p.bin_id);
        if (it == s.bins.end()) throw Error("CORRUPT_LOG", "emptied unknown bin " + p.bin_id);
        const bool was_full = it->second.state == BinState::Full;
        try {
            it->second = mark_emptied(it->second, p.ts);
        } catch (const Error& err) {
            throw Error("CORRUPT_LOG", err.what());
        }
        note("bin_state", bin_view(it->second));
        if (was_full || plan_contains(s.plan, p.bin_id)) {
            s.plan_stale = true;
            note("plan", plan_view(s));
        }
    }

    void operator()(const AlertRaised& p)
    {
        s.alerts[p.alert.alert_id] = p.alert;
        s.open_alert_ids[{p.alert.bin_id, p.alert.kind}] = p.alert.alert_id;
        note("alert", to_json(p.alert));
        if (p.alert.kind == AlertKind::FullBin) {
            s.plan_stale = true;
            note("plan", plan_view(s));
        }
    }

    void operator()(const AlertResolved& p)
    {
        auto it = s.alerts.find(p.alert_id);
        if (it == s.alerts.end()) throw Error("CORRUPT_LOG", "resolved unknown alert " + p.alert_id);
        it->second.resolved_ts = p.resolved_ts;
        s.open_alert_ids.erase({it->second.bin_id, it->second.kind});
        note("alert", to_json(it->second));
    }

    void operator()(const PlanCreated& p)
    {
        s.plan = p.plan;
        s.plan->stale = false;
        s.plan_stale = false;
        note("plan", plan_view(s));
    }

    void operator()(const ConfigChanged& p)
    {
        std::visit(*this, p.change);
        note("config", std::visit(ConfigToJson{}, p.change));
    }

    void operator()(const ZoneUpsert& c) { s.zones[c.zone.zone_id] = c.zone; }
    void operator()(const ZoneDelete& c) { s.zones.erase(c.zone_id); }
    void operator()(const SensorUpsert& c)
    {
        auto it = s.bins.find(c.config.bin_id);
        if (it == s.bins.end()) {
            s.bins.emplace(c.config.bin_id, make_bin_record(c.config));
        } else {
            s.sensor_to_bin.erase(it->second.config.sensor_id);
            it->second.config = c.config;
        }
        s.sensor_to_bin[c.config.sensor_id] = c.config.bin_id;
    }
    void operator()(const SensorDelete& c)
    {
        auto it = s.sensor_to_bin.find(c.sensor_id);
        if (it == s.sensor_to_bin.end()) return;
        s.bins.erase(it->second);
        s.sensor_to_bin.erase(it);
    }
    void operator()(const WorkerUpsert& c) { s.workers[c.worker.worker_id] = c.worker; }
    void operator()(const WorkerDelete& c) { s.workers.erase(c.worker_id); }
    void operator()(const ThresholdsSet& c) { s.thresholds = c.thresholds; }
};

}  // namespace

std::vector<Notification> apply_event(SystemState& state, const EventRecord& e)
{
    if (e.offset != state.next_offset())
        throw Error("CORRUPT_LOG", "offset " + std::to_string(e.offset) + " where " +
                                       std::to_string(state.next_offset()) + " was expected");
    std::vector<Notification> out;
    std::visit(Folder{state, e, out}, e.payload);
    state.as_of_offset = e.offset;
    return out;
}

SystemState replay(const std::vector<EventRecord>& events, SystemState base)
{
    base.reindex();
    for (const auto& e : events) apply_event(base, e);
    return base;
}

// ---------------------------------------------------------------------------
// Snapshots

Json snapshot_to_json(const SystemState& s)
{
    Json bins = Json::object();
    for (const auto& [id, b] : s.bins) bins[id] = b;
    Json zones = Json::object();
    for (const auto& [id, z] : s.zones) zones[id] = z;
    Json workers = Json::object();
    for (const auto& [id, w] : s.workers) workers[id] = w;
    Json alerts = Json::object();
    for (const auto& [id, a] : s.alerts) alerts[id] = to_json(a);
    Json dedupe = Json::object();
    for (const auto& [sid, runs] : s.dedupe.sensors()) {
        Json list = Json::array();
        for (const auto& [lo, hi] : runs.intervals()) list.push_back(Json::array({lo, hi}));
        dedupe[sid] = std::move(list);
    }
    return Json{{"format", 1},
                {"as_of_offset", s.as_of_offset ? Json(*s.as_of_offset) : Json(nullptr)},
                {"thresholds", s.thresholds},
                {"bins", std::move(bins)},
                {"zones", std::move(zones)},
                {"workers", std::move(workers)},
                {"alerts", std::move(alerts)},
                {"plan", s.plan ? to_json(*s.plan) : Json(nullptr)},
                {"plan_stale", s.plan_stale},
                {"dedupe", std::move(dedupe)}};
}

SystemState snapshot_from_json(const Json& j)
{
    try {
        SystemState s;
        if (j.at("format").get<int>() != 1) throw Error("INVALID", "unsupported snapshot format");
        if (!j.at("as_of_offset").is_null()) s.as_of_offset = j.at("as_of_offset").get<std::uint64_t>();
        s.thresholds = j.at("thresholds").get<Thresholds>();
        for (const auto& [id, b] : j.at("bins").items()) s.bins[id] = b.get<BinRecord>();
        for (const auto& [id, z] : j.at("zones").items()) s.zones[id] = z.get<Zone>();
        for (const auto& [id, w] : j.at("workers").items()) s.workers[id] = w.get<WorkerProfile>();
        for (const auto& [id, a] : j.at("alerts").items()) s.alerts[id] = alert_from_json(a);
        if (!j.at("plan").is_null()) s.plan = plan_from_json(j.at("plan"));
        s.plan_stale = j.at("plan_stale").get<bool>();
        for (const auto& [sid, list] : j.at("dedupe").items()) {
            std::map<std::uint64_t, std::uint64_t> runs;
            for (const auto& pair : list) runs[pair.at(0).get<std::uint64_t>()] = pair.at(1).get<std::uint64_t>();
            s.dedupe.sensors()[sid].assign(std::move(runs));
        }
        s.reindex();
        return s;
    } catch (const nlohmann::json::exception& err) {
        throw Error("INVALID", std::string("malformed snapshot: ") + err.what());
    }
}

std::string canonical_snapshot(const SystemState& s) { return snapshot_to_json(s).dump(); }

std::string snapshot_hash(const SystemState& s)
{
    static const int init = sodium_init();
    (void)init;
    const auto text = canonical_snapshot(s);
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(text.data()), text.size());
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * sizeof digest);
    for (unsigned char c : digest) {
        out.push_back(hex[c >> 4]);
        out.push_back(hex[c & 0xf]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Log file

LogContents read_log(const fs::path& file, std::optional<std::uint64_t> after)
{
    LogContents out;
    std::ifstream in(file, std::ios::binary);
    if (!in) return out;
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::size_t pos = 0;
    std::uint64_t expected = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.torn_tail = true;  // unterminated final fragment
            break;
        }
        const std::string_view line(text.data() + pos, nl - pos);
        const bool final_line = nl + 1 == text.size();
        const Json j = Json::parse(line.begin(), line.end(), nullptr, false);
        std::optional<EventRecord> rec;
        if (!j.is_discarded()) {
            try {
                rec = event_from_json(j);
            } catch (const Error&) {
                if (!final_line) throw;
            }
        } else if (!final_line) {
            throw Error("CORRUPT_LOG", "malformed record at byte " + std::to_string(pos));
        }
        if (!rec) {
            out.torn_tail = true;
            break;
        }
        if (rec->offset != expected)
            throw Error("CORRUPT_LOG", "non-dense offset " + std::to_string(rec->offset) + " at byte " +
                                           std::to_string(pos));
        ++expected;
        if (!after || rec->offset > *after) out.events.push_back(std::move(*rec));
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

namespace {

[[noreturn]] void io_failure(const std::string& what)
{
    throw Error("IO_FAILURE", what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::string& data)
{
    std::size_t done = 0;
    while (done < data.size()) {
        const auto n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            io_failure("write");
        }
        done += static_cast<std::size_t>(n);
    }
}

}  // namespace

EventLog::EventLog(fs::path file, std::uint64_t valid_bytes, std::uint64_t next_offset, bool fsync_each_append)
    : path_(std::move(file)), size_(valid_bytes), next_offset_(next_offset), fsync_(fsync_each_append)
{
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) io_failure("open " + path_.string());
    if (::ftruncate(fd_, static_cast<off_t>(valid_bytes)) != 0) {
        ::close(fd_);
        io_failure("truncate " + path_.string());
    }
}

EventLog::~EventLog()
{
    if (fd_ >= 0) ::close(fd_);
}

std::vector<EventRecord> EventLog::append(std::vector<PendingEvent> batch)
{
    std::vector<EventRecord> records;
    records.reserve(batch.size());
    std::string bytes;
    std::uint64_t offset = next_offset_;
    for (auto& p : batch) {
        records.push_back(EventRecord{offset++, p.ts, std::move(p.payload)});
        bytes += serialize_event_line(records.back());
    }
    try {
        write_all(fd_, bytes);
        if (fsync_ && ::fdatasync(fd_) != 0) io_failure("fdatasync");
    } catch (const Error&) {
        // Drop whatever part of the batch reached the file.
        if (::ftruncate(fd_, static_cast<off_t>(size_)) != 0) {
            // The torn bytes stay; recovery discards them as a torn tail.
        }
        throw;
    }
    size_ += bytes.size();
    next_offset_ = offset;
    return records;
}

namespace {

std::vector<std::pair<std::uint64_t, fs::path>> snapshot_files(const fs::path& dir)
{
    static const std::regex name_re(R"(snapshot-(\d+)\.json)");
    std::vector<std::pair<std::uint64_t, fs::path>> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (std::regex_match(name, m, name_re)) out.emplace_back(std::stoull(m[1].str()), entry.path());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    return out;
}

std::optional<SystemState> load_snapshot_file(const fs::path& file, std::uint64_t expected_offset)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    const Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    try {
        auto s = snapshot_from_json(j);
        if (s.as_of_offset != expected_offset) return std::nullopt;
        return s;
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace

fs::path write_snapshot(const fs::path& dir, const SystemState& s, int keep)
{
    if (!s.as_of_offset) return {};
    fs::create_directories(dir);
    const auto final_path = dir / ("snapshot-" + std::to_string(*s.as_of_offset) + ".json");
    const auto tmp_path = dir / ("snapshot-" + std::to_string(*s.as_of_offset) + ".json.tmp");
    const auto text = canonical_snapshot(s);

    const int fd = ::open(tmp_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) io_failure("open " + tmp_path.string());
    try {
        write_all(fd, text);
        if (::fsync(fd) != 0) io_failure("fsync");
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp_path, final_path, ec);
    if (ec) throw Error("IO_FAILURE", "rename snapshot: " + ec.message());

    auto files = snapshot_files(dir);
    for (std::size_t i = static_cast<std::size_t>(std::max(keep, 1)); i < files.size(); ++i)
        fs::remove(files[i].second, ec);
    return final_path;
}

std::optional<SystemState> load_latest(const fs::path& dir)
{
    for (const auto& [offset, file] : snapshot_files(dir)) {
        if (auto s = load_snapshot_file(file, offset)) return s;
    }
    return std::nullopt;
}

Recovered recover(const fs::path& dir, std::optional<std::uint64_t> upto, bool use_snapshot)
{
    Recovered out;
    auto log = read_log(dir / kLogFileName);
    out.torn_tail = log.torn_tail;
    out.log_valid_bytes = log.valid_bytes;
    out.log_next_offset = log.events.size();
    if (log.events.empty()) {
        out.state.reindex();
        return out;
    }
    const std::uint64_t last = log.events.size() - 1;
    const std::uint64_t limit = upto ? std::min(*upto, last) : last;

    if (use_snapshot) {
        for (const auto& [offset, file] : snapshot_files(dir)) {
            if (offset > limit) continue;
            if (auto s = load_snapshot_file(file, offset)) {
                out.state = std::move(*s);
                out.snapshot_offset = offset;
                break;
            }
        }
    }
    out.state.reindex();
    for (std::uint64_t i = out.state.next_offset(); i <= limit; ++i) {
        apply_event(out.state, log.events[i]);
        ++out.replayed_events;
    }
    return out;
}

}  // namespace tuhr::store
