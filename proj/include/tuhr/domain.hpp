#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tuhr/time.hpp"

namespace tuhr {

/// WGS84 coordinate in degrees. Construction rejects non-finite or
/// out-of-range values with an `INVALID` error.
class GeoPoint {
public:
    GeoPoint() = default;
    GeoPoint(double lat, double lon);

    double lat() const noexcept { return lat_; }
    double lon() const noexcept { return lon_; }

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
    double lat_ = 0.0;
    double lon_ = 0.0;
};

struct BinConfig {
    std::string bin_id;
    std::string sensor_id;
    GeoPoint location;
    std::string zone_id;
    double depth_cm = 100.0;       // ultrasonic reading of an empty bin
    double full_offset_cm = 10.0;  // ultrasonic reading of a full bin

    /// Throws `INVALID` unless ids are nonempty and depth > offset > 0.
    void validate() const;

    friend bool operator==(const BinConfig&, const BinConfig&) = default;
};

struct Thresholds {
    double empty_below = 0.05;
    double almost_full_at = 0.50;
    double full_at = 0.90;
    double hysteresis = 0.05;
    double gas_alert_ppm = 300.0;

    void validate() const;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

enum class BinState : std::uint8_t { Empty = 0, Partial = 1, AlmostFull = 2, Full = 3 };

std::string_view to_string(BinState s) noexcept;
std::optional<BinState> parse_bin_state(std::string_view s) noexcept;

struct BinRecord {
    BinConfig config;
    double fill = 0.0;
    BinState state = BinState::Empty;
    std::optional<Timestamp> last_reading_ts;
    double last_gas_ppm = 0.0;

    friend bool operator==(const BinRecord&, const BinRecord&) = default;
};

/// Record of a freshly registered bin: empty, never reported.
BinRecord make_bin_record(BinConfig config);

enum class Role : std::uint8_t { Worker, Admin };

std::string_view to_string(Role r) noexcept;
std::optional<Role> parse_role(std::string_view s) noexcept;

struct WorkerProfile {
    std::string worker_id;
    std::string name;
    GeoPoint start_location;
    int capacity = 5;
    Role role = Role::Worker;

    void validate() const;

    friend bool operator==(const WorkerProfile&, const WorkerProfile&) = default;
};

struct Zone {
    std::string zone_id;
    std::string name;
    std::string description;

    friend bool operator==(const Zone&, const Zone&) = default;
};

/// Linear map from the ultrasonic distance to a fill fraction, clamped to
/// [0, 1]: `depth_cm` reads as empty, `full_offset_cm` as full.
double distance_to_fill(double distance_cm, const BinConfig& config) noexcept;

/// Inverse of distance_to_fill on [0, 1].
double fill_to_distance(double fill, const BinConfig& config) noexcept;

/// Discrete level with a downward hysteresis band. Rising transitions are
/// immediate; falling by one level requires the fill to drop to or below the
/// entry threshold of the previous level minus `hysteresis`.
BinState classify_fill(double fill, BinState prev, const Thresholds& t) noexcept;

/// Folds one sensor reading into the record. Readings not strictly newer
/// than the record's last reading are ignored.
BinRecord apply_reading(const BinRecord& rec, double distance_cm, double gas_ppm, Timestamp ts,
                        const Thresholds& t);

/// Collection by a worker. Throws `STALE_TIMESTAMP` if `ts` predates the
/// last reading.
BinRecord mark_emptied(const BinRecord& rec, Timestamp ts);

}  // namespace tuhr
