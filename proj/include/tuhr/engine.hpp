#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tuhr/store.hpp"
#include "tuhr/telemetry.hpp"

namespace tuhr::engine {

enum class OfflineClock : std::uint8_t {
    Wall,   // now = the injected clock
    Event,  // now = newest last_reading_ts over all bins
};

struct EngineOptions {
    std::filesystem::path data_dir;
    bool fsync = false;
    Millis offline_timeout{180'000};  // zero disables the scan
    OfflineClock offline_clock = OfflineClock::Wall;
    std::size_t reads_capacity = 200'000;
    std::size_t subscriber_queue = 4096;
    std::uint64_t snapshot_every = 50'000;  // events between automatic snapshots; 0 = never
    std::function<Timestamp()> clock = wall_now;
};

/// One accepted sensor reading as served by the reads query.
struct RawRead {
    std::uint64_t offset = 0;
    std::string bin_id;
    telemetry::ReadingEnvelope reading;
};

struct ReadsQuery {
    std::optional<std::string> sensor_id;
    std::optional<std::string> bin_id;
    std::optional<Timestamp> since;  // inclusive
    std::size_t limit = 100;
};

/// Live feed of notifications for one observer. A consumer that falls more
/// than the queue bound behind is flagged `lagged` and must resynchronize
/// from the log; the writer never waits on it.
class Subscription {
public:
    explicit Subscription(std::uint64_t start_offset, std::size_t capacity)
        : start_offset_(start_offset), capacity_(capacity)
    {
    }

    /// Offset of the first event this subscription can see.
    std::uint64_t start_offset() const noexcept { return start_offset_; }

    /// Waits up to `timeout` for notifications; returns what is queued.
    std::vector<store::Notification> wait(Millis timeout);
    bool lagged() const;
    void close();
    bool closed() const;

    void push(const std::vector<store::Notification>& batch);

private:
    std::uint64_t start_offset_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<store::Notification> queue_;
    bool lagged_ = false;
    bool closed_ = false;
};

/// The single writer of the system. Every mutation, whether a sensor
/// reading or an API command, is turned into a batch of events, appended to
/// the log, folded into the in-memory state and fanned out to subscribers,
/// all under one lock.
class Engine : public telemetry::ReadingSink {
public:
    explicit Engine(EngineOptions options);
    ~Engine() override;

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    telemetry::SinkVerdict accept(const telemetry::ReadingEnvelope& env) override;

    /// Point-in-time copy of the state, shared by readers until it changes.
    std::shared_ptr<const store::SystemState> view() const;
    std::optional<std::uint64_t> last_offset() const;

    /// Throws NOT_FOUND, STALE_TIMESTAMP.
    BinRecord mark_emptied(const std::string& bin_id, std::optional<Timestamp> ts, const std::string& by);
    /// Computes and appends a fresh plan.
    dispatch::DispatchPlan recompute_plan();

    // Registry mutations. Throw NOT_FOUND, INVALID, DUPLICATE, IN_USE.
    void create_zone(const Zone& z);
    void update_zone(const Zone& z);
    void delete_zone(const std::string& zone_id);
    void create_sensor(const BinConfig& c);
    void update_sensor(const BinConfig& c);
    void delete_sensor(const std::string& sensor_id);
    void upsert_worker(const WorkerProfile& w);
    void delete_worker(const std::string& worker_id);
    /// Appends a change only when `t` differs from the current thresholds,
    /// then reconciles FULL_BIN/GAS alerts against the new values.
    bool set_thresholds(const Thresholds& t);

    /// One pass of the offline detector; returns the number of actions.
    std::size_t offline_scan();
    /// Brings FULL_BIN/GAS alerts in line with the bin states.
    std::size_t reconcile();

    /// Writes a snapshot of the current state; returns its path (empty for
    /// an empty log).
    std::filesystem::path snapshot();

    std::vector<RawRead> reads(const ReadsQuery& q) const;

    std::shared_ptr<Subscription> subscribe();
    /// Notifications of events with after < offset < before, rebuilt from
    /// the log. `after` absent means from the beginning.
    std::vector<store::Notification> history(std::optional<std::uint64_t> after, std::uint64_t before) const;

    const EngineOptions& options() const noexcept { return options_; }
    std::uint64_t recovered_events() const noexcept { return recovered_events_; }
    std::optional<std::uint64_t> recovered_snapshot() const noexcept { return recovered_snapshot_; }

private:
    // Appends, folds and publishes. Caller holds mu_.
    std::vector<store::EventRecord> commit(std::vector<store::PendingEvent> events);
    void add_actions(std::vector<store::PendingEvent>& batch, const std::vector<alerting::AlertAction>& actions) const;
    void remember_read(std::uint64_t offset, const std::string& bin_id, const telemetry::ReadingEnvelope& env);
    void config_change(store::ConfigChange change);
    std::size_t apply_actions(const std::vector<alerting::AlertAction>& actions);

    EngineOptions options_;
    mutable std::mutex mu_;  // the writer lock; guards everything below
    store::SystemState state_;
    std::unique_ptr<store::EventLog> log_;
    std::uint64_t version_ = 0;
    std::uint64_t last_snapshot_offset_ = 0;
    std::deque<RawRead> reads_;
    std::vector<std::weak_ptr<Subscription>> subscribers_;
    std::uint64_t recovered_events_ = 0;
    std::optional<std::uint64_t> recovered_snapshot_;

    mutable std::mutex view_mu_;
    mutable std::shared_ptr<const store::SystemState> view_;
    mutable std::uint64_t view_version_ = ~std::uint64_t{0};
};

}  // namespace tuhr::engine
