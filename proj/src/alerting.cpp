#include "tuhr/alerting.hpp"

#include <algorithm>
#include <cstdio>

#include "tuhr/error.hpp"

namespace tuhr::alerting {

namespace {

const AlertEvent* find_open(std::span<const AlertEvent> open, std::string_view bin_id, AlertKind kind)
{
    for (const auto& a : open) {
        if (a.open() && a.kind == kind && a.bin_id == bin_id) return &a;
    }
    return nullptr;
}

std::string format_number(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

AlertAction raise(AlertKind kind, const std::string& bin_id, Timestamp ts, std::string detail)
{
    return {AlertAction::Type::Raise, kind, bin_id, ts, make_alert_id(kind, bin_id, ts), std::move(detail)};
}

AlertAction resolve(const AlertEvent& open, Timestamp ts, std::string detail)
{
    return {AlertAction::Type::Resolve, open.kind, open.bin_id, ts, open.alert_id, std::move(detail)};
}

}  // namespace

std::string_view to_string(AlertKind k) noexcept
{
    switch (k) {
    case AlertKind::FullBin: return "FULL_BIN";
    case AlertKind::Gas: return "GAS";
    case AlertKind::SensorOffline: return "SENSOR_OFFLINE";
    }
    return "FULL_BIN";
}

std::optional<AlertKind> parse_alert_kind(std::string_view s) noexcept
{
    if (s == "FULL_BIN") return AlertKind::FullBin;
    if (s == "GAS") return AlertKind::Gas;
    if (s == "SENSOR_OFFLINE") return AlertKind::SensorOffline;
    return std::nullopt;
}

std::string make_alert_id(AlertKind kind, std::string_view bin_id, Timestamp raised_ts)
{
    std::string id(to_string(kind));
    id += ':';
    id += bin_id;
    id += ':';
    id += std::to_string(to_epoch_ms(raised_ts));
    return id;
}

std::vector<AlertAction> evaluate_transition(const BinRecord& before, const BinRecord& after, const Thresholds& t,
                                             std::span<const AlertEvent> open_alerts, Timestamp ts)
{
    std::vector<AlertAction> actions;
    const auto& bin_id = after.config.bin_id;

    const auto* open_full = find_open(open_alerts, bin_id, AlertKind::FullBin);
    if (after.state == BinState::Full && before.state != BinState::Full && !open_full) {
        actions.push_back(raise(AlertKind::FullBin, bin_id, ts, "fill=" + format_number(after.fill * 100.0) + "%"));
    } else if (after.state != BinState::Full && open_full) {
        actions.push_back(resolve(*open_full, ts, std::string("state=") + std::string(to_string(after.state))));
    }

    const auto* open_gas = find_open(open_alerts, bin_id, AlertKind::Gas);
    const bool above = after.last_gas_ppm >= t.gas_alert_ppm;
    if (above && before.last_gas_ppm < t.gas_alert_ppm && !open_gas) {
        actions.push_back(raise(AlertKind::Gas, bin_id, ts, "gas_ppm=" + format_number(after.last_gas_ppm)));
    } else if (!above && open_gas) {
        actions.push_back(resolve(*open_gas, ts, "gas_ppm=" + format_number(after.last_gas_ppm)));
    }
    return actions;
}

std::vector<AlertAction> evaluate_transition(const BinRecord& before, const BinRecord& after, const Thresholds& t,
                                             std::span<const AlertEvent> open_alerts)
{
    if (!after.last_reading_ts) return {};
    return evaluate_transition(before, after, t, open_alerts, *after.last_reading_ts);
}

std::vector<AlertAction> resolve_offline_on_reading(const BinRecord& before, const BinRecord& after,
                                                    std::span<const AlertEvent> open_alerts)
{
    if (!after.last_reading_ts || after.last_reading_ts == before.last_reading_ts) return {};
    const auto* open = find_open(open_alerts, after.config.bin_id, AlertKind::SensorOffline);
    if (!open) return {};
    return {resolve(*open, *after.last_reading_ts, "reading received")};
}

std::vector<AlertAction> offline_scan(Timestamp now, std::span<const BinRecord> bins, Millis timeout,
                                      std::span<const AlertEvent> open_alerts)
{
    if (timeout <= Millis::zero()) throw Error("INVALID", "offline timeout must be positive");
    std::vector<AlertAction> actions;
    for (const auto& bin : bins) {
        if (!bin.last_reading_ts) continue;
        const auto* open = find_open(open_alerts, bin.config.bin_id, AlertKind::SensorOffline);
        const bool silent = *bin.last_reading_ts < now - timeout;
        if (silent && !open) {
            const auto age = std::chrono::duration_cast<std::chrono::seconds>(now - *bin.last_reading_ts);
            actions.push_back(raise(AlertKind::SensorOffline, bin.config.bin_id, now,
                                    "silent_s=" + std::to_string(age.count())));
        } else if (!silent && open) {
            actions.push_back(resolve(*open, now, "last_reading=" + format_iso8601(*bin.last_reading_ts)));
        }
    }
    return actions;
}

std::vector<AlertAction> reconcile_alerts(std::span<const BinRecord> bins, const Thresholds& t,
                                          std::span<const AlertEvent> open_alerts, Timestamp now)
{
    std::vector<AlertAction> actions;
    for (const auto& bin : bins) {
        const auto& id = bin.config.bin_id;
        const Timestamp ts = bin.last_reading_ts.value_or(now);

        const auto* open_full = find_open(open_alerts, id, AlertKind::FullBin);
        const bool full = bin.state == BinState::Full;
        if (full && !open_full)
            actions.push_back(raise(AlertKind::FullBin, id, ts, "fill=" + format_number(bin.fill * 100.0) + "%"));
        else if (!full && open_full)
            actions.push_back(resolve(*open_full, std::max(ts, open_full->raised_ts),
                                      std::string("state=") + std::string(to_string(bin.state))));

        const auto* open_gas = find_open(open_alerts, id, AlertKind::Gas);
        const bool above = bin.last_gas_ppm >= t.gas_alert_ppm;
        if (above && !open_gas)
            actions.push_back(raise(AlertKind::Gas, id, ts, "gas_ppm=" + format_number(bin.last_gas_ppm)));
        else if (!above && open_gas)
            actions.push_back(resolve(*open_gas, std::max(ts, open_gas->raised_ts),
                                      "gas_ppm=" + format_number(bin.last_gas_ppm)));
    }
    return actions;
}

}  // namespace tuhr::alerting
