#include "tuhr/domain.hpp"

#include <algorithm>
#include <cmath>

#include "tuhr/error.hpp"

namespace tuhr {

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon)
{
    if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 || lon < -180.0 ||
        lon > 180.0) {
        throw Error("INVALID", "coordinate out of range");
    }
}

void BinConfig::validate() const
{
    if (bin_id.empty()) throw Error("INVALID", "bin_id must be nonempty");
    if (sensor_id.empty()) throw Error("INVALID", "sensor_id must be nonempty");
    if (!std::isfinite(depth_cm) || !std::isfinite(full_offset_cm) || !(full_offset_cm > 0.0) ||
        !(depth_cm > full_offset_cm)) {
        throw Error("INVALID", "bin geometry requires depth_cm > full_offset_cm > 0");
    }
}

void Thresholds::validate() const
{
    const bool finite = std::isfinite(empty_below) && std::isfinite(almost_full_at) && std::isfinite(full_at) &&
                        std::isfinite(hysteresis) && std::isfinite(gas_alert_ppm);
    if (!finite || !(0.0 <= empty_below && empty_below < almost_full_at && almost_full_at < full_at &&
                     full_at <= 1.0)) {
        throw Error("INVALID", "thresholds require 0 <= empty_below < almost_full_at < full_at <= 1");
    }
    if (!(hysteresis >= 0.0) || !(hysteresis < almost_full_at - empty_below)) {
        throw Error("INVALID", "hysteresis must be within [0, almost_full_at - empty_below)");
    }
    if (!(gas_alert_ppm > 0.0)) throw Error("INVALID", "gas_alert_ppm must be positive");
}

void WorkerProfile::validate() const
{
    if (worker_id.empty()) throw Error("INVALID", "worker_id must be nonempty");
    if (capacity < 1) throw Error("INVALID", "capacity must be at least 1");
}

std::string_view to_string(BinState s) noexcept
{
    switch (s) {
    case BinState::Empty: return "EMPTY";
    case BinState::Partial: return "PARTIAL";
    case BinState::AlmostFull: return "ALMOST_FULL";
    case BinState::Full: return "FULL";
    }
    return "EMPTY";
}

std::optional<BinState> parse_bin_state(std::string_view s) noexcept
{
    if (s == "EMPTY") return BinState::Empty;
    if (s == "PARTIAL") return BinState::Partial;
    if (s == "ALMOST_FULL") return BinState::AlmostFull;
    if (s == "FULL") return BinState::Full;
    return std::nullopt;
}

std::string_view to_string(Role r) noexcept { return r == Role::Admin ? "ADMIN" : "WORKER"; }

std::optional<Role> parse_role(std::string_view s) noexcept
{
    if (s == "ADMIN") return Role::Admin;
    if (s == "WORKER") return Role::Worker;
    return std::nullopt;
}

BinRecord make_bin_record(BinConfig config)
{
    BinRecord rec;
    rec.config = std::move(config);
    return rec;
}

double distance_to_fill(double distance_cm, const BinConfig& config) noexcept
{
    const double span = config.depth_cm - config.full_offset_cm;
    return std::clamp((config.depth_cm - distance_cm) / span, 0.0, 1.0);
}

double fill_to_distance(double fill, const BinConfig& config) noexcept
{
    return config.depth_cm - std::clamp(fill, 0.0, 1.0) * (config.depth_cm - config.full_offset_cm);
}

namespace {

BinState base_state(double fill, const Thresholds& t) noexcept
{
    if (fill < t.empty_below) return BinState::Empty;
    if (fill < t.almost_full_at) return BinState::Partial;
    if (fill < t.full_at) return BinState::AlmostFull;
    return BinState::Full;
}

// Threshold a level is entered at on the way up.
double entry_threshold(BinState s, const Thresholds& t) noexcept
{
    switch (s) {
    case BinState::Partial: return t.empty_below;
    case BinState::AlmostFull: return t.almost_full_at;
    case BinState::Full: return t.full_at;
    case BinState::Empty: break;
    }
    return 0.0;
}

}  // namespace

BinState classify_fill(double fill, BinState prev, const Thresholds& t) noexcept
{
    const BinState base = base_state(fill, t);
    const auto b = static_cast<int>(base);
    const auto p = static_cast<int>(prev);
    if (b + 1 == p && fill > entry_threshold(prev, t) - t.hysteresis) return prev;
    return base;
}

BinRecord apply_reading(const BinRecord& rec, double distance_cm, double gas_ppm, Timestamp ts,
                        const Thresholds& t)
{
    if (rec.last_reading_ts && ts <= *rec.last_reading_ts) return rec;
    BinRecord out = rec;
    out.fill = distance_to_fill(distance_cm, rec.config);
    out.state = classify_fill(out.fill, rec.state, t);
    out.last_gas_ppm = gas_ppm;
    out.last_reading_ts = ts;
    return out;
}

BinRecord mark_emptied(const BinRecord& rec, Timestamp ts)
{
    if (rec.last_reading_ts && ts < *rec.last_reading_ts) {
        throw Error("STALE_TIMESTAMP", "emptied timestamp " + format_iso8601(ts) + " precedes last reading " +
                                           format_iso8601(*rec.last_reading_ts));
    }
    BinRecord out = rec;
    out.fill = 0.0;
    out.state = BinState::Empty;
    out.last_reading_ts = ts;
    return out;
}

}  // namespace tuhr
