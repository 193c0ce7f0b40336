#include "tuhr/engine.hpp"

#include <algorithm>
#include <set>

#include "tuhr/error.hpp"

namespace tuhr::engine {

namespace fs = std::filesystem;
using alerting::AlertAction;
using alerting::AlertKind;
using store::PendingEvent;

// ---------------------------------------------------------------------------
// Subscription

std::vector<store::Notification> Subscription::wait(Millis timeout)
{
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [this] { return !queue_.empty() || lagged_ || closed_; });
    std::vector<store::Notification> out(std::make_move_iterator(queue_.begin()),
                                         std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
}

bool Subscription::lagged() const
{
    std::lock_guard lock(mu_);
    return lagged_;
}

void Subscription::close()
{
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Subscription::closed() const
{
    std::lock_guard lock(mu_);
    return closed_;
}

void Subscription::push(const std::vector<store::Notification>& batch)
{
    {
        std::lock_guard lock(mu_);
        if (closed_ || lagged_) return;
        if (queue_.size() + batch.size() > capacity_) {
            lagged_ = true;
            queue_.clear();
        } else {
            queue_.insert(queue_.end(), batch.begin(), batch.end());
        }
    }
    cv_.notify_all();
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(EngineOptions options) : options_(std::move(options))
{
    fs::create_directories(options_.data_dir);
    auto rec = store::recover(options_.data_dir);
    state_ = std::move(rec.state);
    recovered_events_ = rec.log_next_offset;
    recovered_snapshot_ = rec.snapshot_offset;
    last_snapshot_offset_ = rec.snapshot_offset.value_or(0);
    log_ = std::make_unique<store::EventLog>(options_.data_dir / store::kLogFileName, rec.log_valid_bytes,
                                             rec.log_next_offset, options_.fsync);

    // The reads index is not part of the state; rebuild it from the log.
    const auto contents = store::read_log(options_.data_dir / store::kLogFileName);
    for (const auto& e : contents.events) {
        if (const auto* r = std::get_if<store::ReadingAccepted>(&e.payload))
            remember_read(e.offset, r->bin_id, r->reading);
    }

    // A batch cut short by a crash can leave a reading without its alert.
    reconcile();
}

Engine::~Engine()
{
    std::lock_guard lock(mu_);
    for (auto& w : subscribers_)
        if (auto s = w.lock()) s->close();
}

std::shared_ptr<const store::SystemState> Engine::view() const
{
    std::lock_guard vlock(view_mu_);
    std::lock_guard lock(mu_);
    if (view_version_ != version_ || !view_) {
        view_ = std::make_shared<const store::SystemState>(state_);
        view_version_ = version_;
    }
    return view_;
}

std::optional<std::uint64_t> Engine::last_offset() const
{
    std::lock_guard lock(mu_);
    return state_.as_of_offset;
}

std::vector<store::EventRecord> Engine::commit(std::vector<PendingEvent> events)
{
    if (events.empty()) return {};
    auto records = log_->append(std::move(events));
    std::vector<store::Notification> notes;
    for (const auto& rec : records) {
        auto n = store::apply_event(state_, rec);
        notes.insert(notes.end(), std::make_move_iterator(n.begin()), std::make_move_iterator(n.end()));
        if (const auto* r = std::get_if<store::ReadingAccepted>(&rec.payload))
            remember_read(rec.offset, r->bin_id, r->reading);
    }
    ++version_;

    if (!notes.empty()) {
        std::erase_if(subscribers_, [](const std::weak_ptr<Subscription>& w) { return w.expired(); });
        for (auto& w : subscribers_)
            if (auto s = w.lock()) s->push(notes);
    }

    if (options_.snapshot_every > 0 && state_.as_of_offset &&
        *state_.as_of_offset >= last_snapshot_offset_ + options_.snapshot_every) {
        store::write_snapshot(options_.data_dir, state_);
        last_snapshot_offset_ = *state_.as_of_offset;
    }
    return records;
}

void Engine::add_actions(std::vector<PendingEvent>& batch, const std::vector<AlertAction>& actions) const
{
    std::set<std::string> taken;
    for (const auto& a : actions) {
        if (a.type == AlertAction::Type::Raise) {
            // Ids are content-derived; a repeat of an old (resolved) one gets a suffix.
            std::string id = a.alert_id;
            for (int n = 1; state_.alerts.count(id) || taken.count(id); ++n) id = a.alert_id + "#" + std::to_string(n);
            taken.insert(id);
            batch.push_back({a.ts, store::AlertRaised{{id, a.kind, a.bin_id, a.ts, std::nullopt, a.detail}}});
        } else {
            auto it = state_.alerts.find(a.alert_id);
            const Timestamp ts = it == state_.alerts.end() ? a.ts : std::max(a.ts, it->second.raised_ts);
            batch.push_back({ts, store::AlertResolved{a.alert_id, ts, a.detail}});
        }
    }
}

void Engine::remember_read(std::uint64_t offset, const std::string& bin_id, const telemetry::ReadingEnvelope& env)
{
    if (options_.reads_capacity == 0) return;
    reads_.push_back(RawRead{offset, bin_id, env});
    while (reads_.size() > options_.reads_capacity) reads_.pop_front();
}

telemetry::SinkVerdict Engine::accept(const telemetry::ReadingEnvelope& env)
{
    std::lock_guard lock(mu_);
    const BinRecord* bin = state_.bin_by_sensor(env.sensor_id);
    if (!bin) return telemetry::SinkVerdict::UnknownSensor;
    if (state_.dedupe.seen(env.sensor_id, env.seq)) return telemetry::SinkVerdict::Duplicate;

    const BinRecord before = *bin;
    const BinRecord after = apply_reading(before, env.distance_cm, env.gas_ppm, env.ts, state_.thresholds);
    const auto open = state_.open_alerts_for(before.config.bin_id);

    std::vector<PendingEvent> batch{{env.ts, store::ReadingAccepted{env, before.config.bin_id}}};
    auto actions = alerting::evaluate_transition(before, after, state_.thresholds, open);
    auto offline = alerting::resolve_offline_on_reading(before, after, open);
    actions.insert(actions.end(), offline.begin(), offline.end());
    add_actions(batch, actions);

    // A bin turning FULL is dispatched right away.
    const bool full_raised = std::any_of(actions.begin(), actions.end(), [](const AlertAction& a) {
        return a.type == AlertAction::Type::Raise && a.kind == AlertKind::FullBin;
    });
    if (full_raised) {
        const auto crew = state_.worker_list();
        const bool any_worker =
            std::any_of(crew.begin(), crew.end(), [](const WorkerProfile& w) { return w.role == Role::Worker; });
        if (any_worker) {
            auto bins = state_.bin_list();
            for (auto& b : bins)
                if (b.config.bin_id == after.config.bin_id) b = after;
            batch.push_back({env.ts, store::PlanCreated{dispatch::plan_dispatch(bins, crew, env.ts)}});
        }
    }

    commit(std::move(batch));
    return telemetry::SinkVerdict::Forwarded;
}

BinRecord Engine::mark_emptied(const std::string& bin_id, std::optional<Timestamp> ts, const std::string& by)
{
    std::lock_guard lock(mu_);
    auto it = state_.bins.find(bin_id);
    if (it == state_.bins.end()) throw Error("NOT_FOUND", "no bin " + bin_id);
    const Timestamp when = ts.value_or(options_.clock());
    const BinRecord before = it->second;
    const BinRecord after = tuhr::mark_emptied(before, when);

    std::vector<PendingEvent> batch{{when, store::BinEmptied{bin_id, when, by}}};
    add_actions(batch, alerting::evaluate_transition(before, after, state_.thresholds,
                                                     state_.open_alerts_for(bin_id), when));
    commit(std::move(batch));
    return state_.bins.at(bin_id);
}

dispatch::DispatchPlan Engine::recompute_plan()
{
    std::lock_guard lock(mu_);
    auto plan = dispatch::plan_dispatch(state_.bin_list(), state_.worker_list(), options_.clock());
    commit({{plan.created_ts, store::PlanCreated{plan}}});
    return *state_.plan;
}

void Engine::config_change(store::ConfigChange change)
{
    commit({{options_.clock(), store::ConfigChanged{std::move(change)}}});
}

void Engine::create_zone(const Zone& z)
{
    if (z.zone_id.empty()) throw Error("INVALID", "zone_id must be nonempty");
    std::lock_guard lock(mu_);
    if (state_.zones.count(z.zone_id)) throw Error("DUPLICATE", "zone " + z.zone_id + " exists");
    config_change(store::ZoneUpsert{z});
}

void Engine::update_zone(const Zone& z)
{
    std::lock_guard lock(mu_);
    if (!state_.zones.count(z.zone_id)) throw Error("NOT_FOUND", "no zone " + z.zone_id);
    config_change(store::ZoneUpsert{z});
}

void Engine::delete_zone(const std::string& zone_id)
{
    std::lock_guard lock(mu_);
    if (!state_.zones.count(zone_id)) throw Error("NOT_FOUND", "no zone " + zone_id);
    for (const auto& [id, b] : state_.bins)
        if (b.config.zone_id == zone_id) throw Error("IN_USE", "zone " + zone_id + " still holds bin " + id);
    config_change(store::ZoneDelete{zone_id});
}

void Engine::create_sensor(const BinConfig& c)
{
    c.validate();
    std::lock_guard lock(mu_);
    if (state_.sensor_to_bin.count(c.sensor_id)) throw Error("DUPLICATE", "sensor " + c.sensor_id + " exists");
    if (state_.bins.count(c.bin_id)) throw Error("DUPLICATE", "bin " + c.bin_id + " exists");
    if (!c.zone_id.empty() && !state_.zones.count(c.zone_id)) throw Error("INVALID", "unknown zone " + c.zone_id);
    config_change(store::SensorUpsert{c});
}

void Engine::update_sensor(const BinConfig& c)
{
    c.validate();
    std::lock_guard lock(mu_);
    auto it = state_.sensor_to_bin.find(c.sensor_id);
    if (it == state_.sensor_to_bin.end()) throw Error("NOT_FOUND", "no sensor " + c.sensor_id);
    if (it->second != c.bin_id) throw Error("INVALID", "sensor " + c.sensor_id + " is bound to bin " + it->second);
    if (!c.zone_id.empty() && !state_.zones.count(c.zone_id)) throw Error("INVALID", "unknown zone " + c.zone_id);
    config_change(store::SensorUpsert{c});
}

void Engine::delete_sensor(const std::string& sensor_id)
{
    std::lock_guard lock(mu_);
    auto it = state_.sensor_to_bin.find(sensor_id);
    if (it == state_.sensor_to_bin.end()) throw Error("NOT_FOUND", "no sensor " + sensor_id);
    const Timestamp now = options_.clock();
    std::vector<PendingEvent> batch;
    std::vector<AlertAction> closing;
    for (const auto& a : state_.open_alerts_for(it->second))
        closing.push_back({AlertAction::Type::Resolve, a.kind, a.bin_id, now, a.alert_id, "sensor removed"});
    add_actions(batch, closing);
    batch.push_back({now, store::ConfigChanged{store::SensorDelete{sensor_id}}});
    commit(std::move(batch));
}

void Engine::upsert_worker(const WorkerProfile& w)
{
    w.validate();
    std::lock_guard lock(mu_);
    config_change(store::WorkerUpsert{w});
}

void Engine::delete_worker(const std::string& worker_id)
{
    std::lock_guard lock(mu_);
    if (!state_.workers.count(worker_id)) throw Error("NOT_FOUND", "no worker " + worker_id);
    config_change(store::WorkerDelete{worker_id});
}

bool Engine::set_thresholds(const Thresholds& t)
{
    t.validate();
    {
        std::lock_guard lock(mu_);
        if (state_.thresholds == t) return false;
        config_change(store::ThresholdsSet{t});
    }
    reconcile();
    return true;
}

std::size_t Engine::apply_actions(const std::vector<AlertAction>& actions)
{
    if (actions.empty()) return 0;
    std::vector<PendingEvent> batch;
    add_actions(batch, actions);
    commit(std::move(batch));
    return actions.size();
}

std::size_t Engine::offline_scan()
{
    if (options_.offline_timeout <= Millis::zero()) return 0;
    std::lock_guard lock(mu_);
    const auto bins = state_.bin_list();
    Timestamp now;
    if (options_.offline_clock == OfflineClock::Event) {
        std::optional<Timestamp> newest;
        for (const auto& b : bins)
            if (b.last_reading_ts && (!newest || *b.last_reading_ts > *newest)) newest = b.last_reading_ts;
        if (!newest) return 0;
        now = *newest;
    } else {
        now = options_.clock();
    }
    return apply_actions(alerting::offline_scan(now, bins, options_.offline_timeout, state_.open_alerts()));
}

std::size_t Engine::reconcile()
{
    std::lock_guard lock(mu_);
    return apply_actions(
        alerting::reconcile_alerts(state_.bin_list(), state_.thresholds, state_.open_alerts(), options_.clock()));
}

fs::path Engine::snapshot()
{
    std::lock_guard lock(mu_);
    if (!state_.as_of_offset) return {};
    auto path = store::write_snapshot(options_.data_dir, state_);
    last_snapshot_offset_ = *state_.as_of_offset;
    return path;
}

std::vector<RawRead> Engine::reads(const ReadsQuery& q) const
{
    std::vector<RawRead> out;
    {
        std::lock_guard lock(mu_);
        for (auto it = reads_.rbegin(); it != reads_.rend(); ++it) {
            if (q.sensor_id && it->reading.sensor_id != *q.sensor_id) continue;
            if (q.bin_id && it->bin_id != *q.bin_id) continue;
            if (q.since && it->reading.ts < *q.since) continue;
            out.push_back(*it);
        }
    }
    // newest first by reading time; arrival order breaks ties
    std::stable_sort(out.begin(), out.end(),
                     [](const RawRead& a, const RawRead& b) { return a.reading.ts > b.reading.ts; });
    if (out.size() > q.limit) out.resize(q.limit);
    return out;
}

std::shared_ptr<Subscription> Engine::subscribe()
{
    std::lock_guard lock(mu_);
    auto sub = std::make_shared<Subscription>(state_.next_offset(), options_.subscriber_queue);
    std::erase_if(subscribers_, [](const std::weak_ptr<Subscription>& w) { return w.expired(); });
    subscribers_.push_back(sub);
    return sub;
}

std::vector<store::Notification> Engine::history(std::optional<std::uint64_t> after, std::uint64_t before) const
{
    std::vector<store::Notification> out;
    if (before == 0 || (after && *after + 1 >= before)) return out;

    // Everything below `before` is already fully written, so reading the
    // file concurrently with the writer is safe.
    store::SystemState s;
    if (after) {
        auto rec = store::recover(options_.data_dir, *after);
        if (rec.state.next_offset() != *after + 1) return out;
        s = std::move(rec.state);
    }
    auto log = store::read_log(options_.data_dir / store::kLogFileName, s.as_of_offset);
    for (const auto& e : log.events) {
        if (e.offset >= before) break;
        auto n = store::apply_event(s, e);
        out.insert(out.end(), std::make_move_iterator(n.begin()), std::make_move_iterator(n.end()));
    }
    return out;
}

}  // namespace tuhr::engine
