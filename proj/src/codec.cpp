#include "tuhr/codec.hpp"

#include "tuhr/error.hpp"

namespace tuhr {

Json timestamp_to_json(const std::optional<Timestamp>& ts)
{
    if (!ts) return nullptr;
    return format_iso8601(*ts);
}

std::optional<Timestamp> timestamp_from_json(const Json& j)
{
    if (j.is_null()) return std::nullopt;
    if (!j.is_string()) throw Error("INVALID", "timestamp must be a string");
    auto ts = parse_iso8601(j.get_ref<const std::string&>());
    if (!ts) throw Error("INVALID", "malformed timestamp: " + j.get<std::string>());
    return ts;
}

Timestamp required_timestamp(const Json& j, const char* key)
{
    auto ts = timestamp_from_json(j.at(key));
    if (!ts) throw Error("INVALID", std::string("missing timestamp: ") + key);
    return *ts;
}

void to_json(Json& j, const GeoPoint& p) { j = Json{{"lat", p.lat()}, {"lon", p.lon()}}; }

void from_json(const Json& j, GeoPoint& p) { p = GeoPoint(j.at("lat").get<double>(), j.at("lon").get<double>()); }

void to_json(Json& j, const BinConfig& c)
{
    j = Json{{"bin_id", c.bin_id},   {"sensor_id", c.sensor_id}, {"location", c.location},
             {"zone_id", c.zone_id}, {"depth_cm", c.depth_cm},   {"full_offset_cm", c.full_offset_cm}};
}

void from_json(const Json& j, BinConfig& c)
{
    c.bin_id = j.at("bin_id").get<std::string>();
    c.sensor_id = j.at("sensor_id").get<std::string>();
    c.location = j.at("location").get<GeoPoint>();
    c.zone_id = j.value("zone_id", std::string{});
    c.depth_cm = j.at("depth_cm").get<double>();
    c.full_offset_cm = j.at("full_offset_cm").get<double>();
}

void to_json(Json& j, const Thresholds& t)
{
    j = Json{{"empty_below", t.empty_below},
             {"almost_full_at", t.almost_full_at},
             {"full_at", t.full_at},
             {"hysteresis", t.hysteresis},
             {"gas_alert_ppm", t.gas_alert_ppm}};
}

void from_json(const Json& j, Thresholds& t)
{
    Thresholds d;
    t.empty_below = j.value("empty_below", d.empty_below);
    t.almost_full_at = j.value("almost_full_at", d.almost_full_at);
    t.full_at = j.value("full_at", d.full_at);
    t.hysteresis = j.value("hysteresis", d.hysteresis);
    t.gas_alert_ppm = j.value("gas_alert_ppm", d.gas_alert_ppm);
}

void to_json(Json& j, const BinRecord& r)
{
    j = Json{{"config", r.config},
             {"fill", r.fill},
             {"state", to_string(r.state)},
             {"last_reading_ts", timestamp_to_json(r.last_reading_ts)},
             {"last_gas_ppm", r.last_gas_ppm}};
}

void from_json(const Json& j, BinRecord& r)
{
    r.config = j.at("config").get<BinConfig>();
    r.fill = j.at("fill").get<double>();
    auto s = parse_bin_state(j.at("state").get<std::string>());
    if (!s) throw Error("INVALID", "unknown bin state");
    r.state = *s;
    r.last_reading_ts = timestamp_from_json(j.at("last_reading_ts"));
    r.last_gas_ppm = j.at("last_gas_ppm").get<double>();
}

void to_json(Json& j, const WorkerProfile& w)
{
    j = Json{{"worker_id", w.worker_id},
             {"name", w.name},
             {"start_location", w.start_location},
             {"capacity", w.capacity},
             {"role", to_string(w.role)}};
}

void from_json(const Json& j, WorkerProfile& w)
{
    w.worker_id = j.at("worker_id").get<std::string>();
    w.name = j.value("name", w.worker_id);
    w.start_location = j.at("start_location").get<GeoPoint>();
    w.capacity = j.value("capacity", 5);
    auto role = parse_role(j.value("role", std::string{"WORKER"}));
    if (!role) throw Error("INVALID", "role must be WORKER or ADMIN");
    w.role = *role;
}

void to_json(Json& j, const Zone& z)
{
    j = Json{{"zone_id", z.zone_id}, {"name", z.name}, {"description", z.description}};
}

void from_json(const Json& j, Zone& z)
{
    z.zone_id = j.at("zone_id").get<std::string>();
    z.name = j.value("name", z.zone_id);
    z.description = j.value("description", std::string{});
}

}  // namespace tuhr
