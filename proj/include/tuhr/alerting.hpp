#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tuhr/domain.hpp"

namespace tuhr::alerting {

enum class AlertKind : std::uint8_t { FullBin, Gas, SensorOffline };

std::string_view to_string(AlertKind k) noexcept;
std::optional<AlertKind> parse_alert_kind(std::string_view s) noexcept;

struct AlertEvent {
    std::string alert_id;
    AlertKind kind = AlertKind::FullBin;
    std::string bin_id;
    Timestamp raised_ts;
    std::optional<Timestamp> resolved_ts;
    std::string detail;

    bool open() const noexcept { return !resolved_ts.has_value(); }

    friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

/// Alert ids are a pure function of what raised them so that replaying the
/// same readings in any cross-bin interleaving names alerts identically.
std::string make_alert_id(AlertKind kind, std::string_view bin_id, Timestamp raised_ts);

struct AlertAction {
    enum class Type : std::uint8_t { Raise, Resolve };

    Type type = Type::Raise;
    AlertKind kind = AlertKind::FullBin;
    std::string bin_id;
    Timestamp ts;
    std::string alert_id;  // of the new alert for Raise, of the open one for Resolve
    std::string detail;

    friend bool operator==(const AlertAction&, const AlertAction&) = default;
};

/// Edge-triggered raise/resolve decisions for one bin across one
/// apply_reading or mark_emptied. `open_alerts` may contain alerts of other
/// bins; they are ignored. `ts` stamps the actions.
std::vector<AlertAction> evaluate_transition(const BinRecord& before, const BinRecord& after, const Thresholds& t,
                                             std::span<const AlertEvent> open_alerts, Timestamp ts);

/// Overload stamping actions with `after.last_reading_ts`.
std::vector<AlertAction> evaluate_transition(const BinRecord& before, const BinRecord& after, const Thresholds& t,
                                             std::span<const AlertEvent> open_alerts);

/// Resolves an open SENSOR_OFFLINE alert when `after` carries a reading
/// newer than `before`.
std::vector<AlertAction> resolve_offline_on_reading(const BinRecord& before, const BinRecord& after,
                                                    std::span<const AlertEvent> open_alerts);

/// Raises SENSOR_OFFLINE for bins silent longer than `timeout` and resolves
/// open offline alerts for bins that have reported since. Bins that never
/// reported are not judged.
std::vector<AlertAction> offline_scan(Timestamp now, std::span<const BinRecord> bins, Millis timeout,
                                      std::span<const AlertEvent> open_alerts);

/// Brings FULL_BIN and GAS alerts in line with the current bin records:
/// raises what the state calls for and resolves what it no longer does.
/// Used after recovery and after threshold changes. Actions are stamped with
/// the bin's last reading time, or `now` for bins that never reported.
std::vector<AlertAction> reconcile_alerts(std::span<const BinRecord> bins, const Thresholds& t,
                                          std::span<const AlertEvent> open_alerts, Timestamp now);

}  // namespace tuhr::alerting
