#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tuhr/alerting.hpp"
#include "tuhr/codec.hpp"
#include "tuhr/dispatch.hpp"
#include "tuhr/domain.hpp"
#include "tuhr/telemetry.hpp"

namespace tuhr::store {

enum class EventKind : std::uint8_t {
    ReadingAccepted,
    BinEmptied,
    AlertRaised,
    AlertResolved,
    PlanCreated,
    ConfigChanged,
};

std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

struct ReadingAccepted {
    telemetry::ReadingEnvelope reading;
    std::string bin_id;  // binding at acceptance time
};

struct BinEmptied {
    std::string bin_id;
    Timestamp ts;
    std::string by;  // principal that reported the collection
};

struct AlertRaised {
    alerting::AlertEvent alert;
};

struct AlertResolved {
    std::string alert_id;
    Timestamp resolved_ts;
    std::string detail;
};

struct PlanCreated {
    dispatch::DispatchPlan plan;
};

struct ZoneUpsert { Zone zone; };
struct ZoneDelete { std::string zone_id; };
struct SensorUpsert { BinConfig config; };
struct SensorDelete { std::string sensor_id; };
struct WorkerUpsert { WorkerProfile worker; };
struct WorkerDelete { std::string worker_id; };
struct ThresholdsSet { Thresholds thresholds; };

using ConfigChange =
    std::variant<ZoneUpsert, ZoneDelete, SensorUpsert, SensorDelete, WorkerUpsert, WorkerDelete, ThresholdsSet>;

struct ConfigChanged {
    ConfigChange change;
};

using Payload = std::variant<ReadingAccepted, BinEmptied, AlertRaised, AlertResolved, PlanCreated, ConfigChanged>;

struct EventRecord {
    std::uint64_t offset = 0;
    Timestamp ts;
    Payload payload;

    EventKind kind() const noexcept { return static_cast<EventKind>(payload.index()); }
};

/// An event before the log assigns its offset.
struct PendingEvent {
    Timestamp ts;
    Payload payload;
};

Json to_json(const EventRecord& e);
/// Throws `CORRUPT_LOG` on a malformed record.
EventRecord event_from_json(const Json& j);
std::string serialize_event_line(const EventRecord& e);  // one line incl. LF

Json to_json(const dispatch::DispatchPlan& p);
dispatch::DispatchPlan plan_from_json(const Json& j);
Json to_json(const alerting::AlertEvent& a);
alerting::AlertEvent alert_from_json(const Json& j);

/// The whole in-memory state of the system: a deterministic fold over the
/// event log. Its canonical serialization is the snapshot file format.
struct SystemState {
    std::optional<std::uint64_t> as_of_offset;
    Thresholds thresholds;
    std::map<std::string, BinRecord> bins;  // by bin_id
    std::map<std::string, Zone> zones;
    std::map<std::string, WorkerProfile> workers;
    std::map<std::string, alerting::AlertEvent> alerts;  // history, by alert_id
    std::optional<dispatch::DispatchPlan> plan;
    bool plan_stale = false;
    telemetry::DedupeTable dedupe;

    // Derived indexes, rebuilt by reindex(); not serialized.
    std::map<std::string, std::string> sensor_to_bin;
    std::map<std::pair<std::string, alerting::AlertKind>, std::string> open_alert_ids;

    std::uint64_t next_offset() const noexcept { return as_of_offset ? *as_of_offset + 1 : 0; }
    void reindex();
    std::vector<alerting::AlertEvent> open_alerts() const;
    std::vector<alerting::AlertEvent> open_alerts_for(const std::string& bin_id) const;
    std::vector<BinRecord> bin_list() const;
    std::vector<WorkerProfile> worker_list() const;
    const BinRecord* bin_by_sensor(const std::string& sensor_id) const;
};

/// Change visible to live observers, tagged with the offset that caused it.
struct Notification {
    std::uint64_t offset = 0;
    std::string type;  // bin_state | alert | plan | config
    Json data;
};

/// Flat public shape of a bin, shared by the HTTP API and the event stream.
Json bin_view(const BinRecord& b);
/// `{"plan": plan-or-null, "stale": bool}` with the plan's own flag synced.
Json plan_view(const SystemState& s);

/// Folds one event into the state. Offsets must be dense: anything other
/// than state.next_offset() throws `CORRUPT_LOG`.
std::vector<Notification> apply_event(SystemState& state, const EventRecord& e);

Json snapshot_to_json(const SystemState& s);
/// Throws `INVALID` on malformed input.
SystemState snapshot_from_json(const Json& j);
/// Canonical text: sorted keys, shortest round-trip numbers, no whitespace.
std::string canonical_snapshot(const SystemState& s);
/// Hex SHA-256 of canonical_snapshot.
std::string snapshot_hash(const SystemState& s);

struct LogContents {
    std::vector<EventRecord> events;
    std::uint64_t valid_bytes = 0;  // prefix length holding complete records
    bool torn_tail = false;
};

/// Reads every complete record. A malformed or unterminated final line is
/// treated as torn and skipped; a malformed earlier line throws
/// `CORRUPT_LOG`. Records with offset <= `after` are parsed but not kept.
LogContents read_log(const std::filesystem::path& file, std::optional<std::uint64_t> after = std::nullopt);

/// Fold of `events` into a fresh state (or onto `base`).
SystemState replay(const std::vector<EventRecord>& events, SystemState base = {});

/// Append-only newline-delimited event file. Appends of a batch go out in a
/// single write so a reading and the alerts it triggers land together.
class EventLog {
public:
    /// Opens (creating if needed) and truncates the file to `valid_bytes`,
    /// dropping any torn tail so the next append starts on a record boundary.
    EventLog(std::filesystem::path file, std::uint64_t valid_bytes, std::uint64_t next_offset,
             bool fsync_each_append);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    /// Assigns offsets and durably appends. Throws `IO_FAILURE`; on failure
    /// nothing is considered appended and the offset counter is unchanged.
    std::vector<EventRecord> append(std::vector<PendingEvent> batch);

    std::uint64_t next_offset() const noexcept { return next_offset_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::uint64_t size_ = 0;
    std::uint64_t next_offset_;
    bool fsync_;
};

inline constexpr const char* kLogFileName = "events.ndjson";

/// Atomic write (temp file + rename) of `snapshot-<offset>.json`. Older
/// snapshots beyond the newest `keep` are removed. Returns the path written.
std::filesystem::path write_snapshot(const std::filesystem::path& dir, const SystemState& s, int keep = 2);

/// Newest snapshot that parses; corrupt files are skipped.
std::optional<SystemState> load_latest(const std::filesystem::path& dir);

struct Recovered {
    SystemState state;
    std::optional<std::uint64_t> snapshot_offset;  // set when a snapshot was used
    std::size_t replayed_events = 0;
    bool torn_tail = false;
    std::uint64_t log_valid_bytes = 0;
    std::uint64_t log_next_offset = 0;
};

/// Startup path: newest valid snapshot plus replay of the log tail, or a
/// full replay when no usable snapshot exists. `upto` stops after that
/// offset (inclusive) and disables snapshot use beyond it.
Recovered recover(const std::filesystem::path& dir, std::optional<std::uint64_t> upto = std::nullopt,
                  bool use_snapshot = true);

}  // namespace tuhr::store
