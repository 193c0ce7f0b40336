#include "tuhr/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tuhr/error.hpp"

namespace tuhr::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void invalid(const std::string& path, const std::string& what)
{
    throw Error("INVALID", path + ": " + what);
}

// Reads one object while tracking where in the document it sits, so every
// error names the offending field.
class Fields {
public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) invalid(path_.empty() ? "(root)" : path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }
    const Json& raw(const std::string& key) const { return j_.at(key); }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) const
    {
        seen_.insert(key);
        if (!j_.contains(key)) {
            if (fallback) return *fallback;
            invalid(at(key), "is required");
        }
        const auto& v = j_.at(key);
        if (!v.is_number()) invalid(at(key), "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) invalid(at(key), "must be finite");
        return d;
    }

    std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) const
    {
        seen_.insert(key);
        if (!j_.contains(key)) {
            if (fallback) return *fallback;
            invalid(at(key), "is required");
        }
        const auto& v = j_.at(key);
        if (!v.is_string()) invalid(at(key), "must be a string");
        return v.get<std::string>();
    }

    const Json* list(const std::string& key) const
    {
        seen_.insert(key);
        if (!j_.contains(key)) return nullptr;
        if (!j_.at(key).is_array()) invalid(at(key), "must be a list");
        return &j_.at(key);
    }

    const Json* object(const std::string& key) const
    {
        seen_.insert(key);
        if (!j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    void no_extras() const
    {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) invalid(at(k), "unknown field");
    }

private:
    const Json& j_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

GeoPoint read_point(const Json& j, const std::string& path)
{
    Fields f(j, path);
    const double lat = f.number("lat"), lon = f.number("lon");
    f.no_extras();
    try {
        return GeoPoint(lat, lon);
    } catch (const Error& e) {
        invalid(path, e.what());
    }
}

Json point_json(const GeoPoint& p) { return Json{{"lat", p.lat()}, {"lon", p.lon()}}; }

void in_unit(double v, const std::string& path)
{
    if (v < 0.0 || v > 1.0) invalid(path, "must be within [0, 1]");
}

void non_negative(double v, const std::string& path)
{
    if (v < 0.0) invalid(path, "must not be negative");
}

std::string idx(const std::string& list, std::size_t k) { return list + "[" + std::to_string(k) + "]"; }

Timestamp default_epoch() { return *parse_iso8601("2025-06-01T00:00:00Z"); }

std::mt19937_64 stream_for(std::uint64_t seed, std::size_t bin, std::uint32_t which)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(bin), static_cast<std::uint32_t>(bin >> 32), which};
    return std::mt19937_64(seq);
}

}  // namespace

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& g)
{
    // Box-Muller, cosine branch only
    const double u1 = 1.0 - uniform01(g);  // (0, 1]
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

void ScenarioConfig::validate() const
{
    if (!(duration_s > 0.0)) invalid("duration_s", "must be positive");
    if (!(report_interval_s > 0.0)) invalid("report_interval_s", "must be positive");
    if (report_interval_s < 0.001) invalid("report_interval_s", "must be at least one millisecond");
    non_negative(time_scale, "time_scale");
    in_unit(faults.dup_prob, "faults.dup_prob");
    in_unit(faults.loss_prob, "faults.loss_prob");
    in_unit(faults.reorder_prob, "faults.reorder_prob");
    non_negative(faults.max_delay_s, "faults.max_delay_s");

    std::set<std::string> zone_ids, bin_ids, sensor_ids, worker_ids;
    for (std::size_t k = 0; k < zones.size(); ++k) {
        if (zones[k].zone_id.empty()) invalid(idx("zones", k) + ".zone_id", "must not be empty");
        if (!zone_ids.insert(zones[k].zone_id).second) invalid(idx("zones", k) + ".zone_id", "duplicate");
    }
    if (bins.empty()) invalid("bins", "must list at least one bin");
    for (std::size_t k = 0; k < bins.size(); ++k) {
        const auto p = idx("bins", k);
        const auto& b = bins[k];
        try {
            b.config.validate();
        } catch (const Error& e) {
            invalid(p, e.what());
        }
        if (!bin_ids.insert(b.config.bin_id).second) invalid(p + ".bin_id", "duplicate");
        if (!sensor_ids.insert(b.config.sensor_id).second) invalid(p + ".sensor_id", "duplicate");
        if (b.config.zone_id.empty()) invalid(p + ".zone_id", "must not be empty");
        if (!zones.empty() && !zone_ids.count(b.config.zone_id)) invalid(p + ".zone_id", "names no listed zone");
        in_unit(b.initial_fill, p + ".initial_fill");
        non_negative(b.fill_rate_per_hr, p + ".fill_rate_per_hr");
        non_negative(b.fill_jitter, p + ".fill_jitter");
        if (b.collect_at && (*b.collect_at <= 0.0 || *b.collect_at > 1.0))
            invalid(p + ".collect_at", "must be within (0, 1]");
        non_negative(b.base_gas_ppm, p + ".base_gas_ppm");
        if (b.battery_pct < 0.0 || b.battery_pct > 100.0) invalid(p + ".battery_pct", "must be within [0, 100]");
    }
    for (std::size_t k = 0; k < gas_events.size(); ++k) {
        const auto p = idx("gas_events", k);
        const auto& g = gas_events[k];
        if (!bin_ids.count(g.bin_id)) invalid(p + ".bin_id", "names no listed bin");
        non_negative(g.start_s, p + ".start_s");
        if (!(g.duration_s > 0.0)) invalid(p + ".duration_s", "must be positive");
        non_negative(g.peak_ppm, p + ".peak_ppm");
        if (g.ramp_frac < 0.0 || g.ramp_frac > 0.5) invalid(p + ".ramp_frac", "must be within [0, 0.5]");
    }
    for (std::size_t k = 0; k < workers.size(); ++k) {
        const auto p = idx("workers", k);
        if (workers[k].worker_id.empty()) invalid(p + ".worker_id", "must not be empty");
        if (!worker_ids.insert(workers[k].worker_id).second) invalid(p + ".worker_id", "duplicate");
        if (workers[k].capacity < 1) invalid(p + ".capacity", "must be at least 1");
    }
}

ScenarioConfig scenario_from_json(const Json& j)
{
    ScenarioConfig s;
    Fields f(j, "");
    s.name = f.text("name", "custom");
    f.object("seed");
    if (j.contains("seed")) {
        const auto& v = j.at("seed");
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            invalid("seed", "must be an unsigned integer");
        s.seed = v.get<std::uint64_t>();
    }
    s.duration_s = f.number("duration_s");
    s.report_interval_s = f.number("report_interval_s", 60.0);
    s.time_scale = f.number("time_scale", 0.0);
    s.epoch = default_epoch();
    if (f.has("epoch")) {
        auto ts = parse_iso8601(f.text("epoch"));
        if (!ts) invalid("epoch", "must be an ISO 8601 UTC timestamp");
        s.epoch = *ts;
    }

    if (const auto* zones = f.list("zones")) {
        for (std::size_t k = 0; k < zones->size(); ++k) {
            Fields z((*zones)[k], idx("zones", k));
            s.zones.push_back(Zone{z.text("zone_id"), z.text("name", ""), z.text("description", "")});
            if (s.zones.back().name.empty()) s.zones.back().name = s.zones.back().zone_id;
            z.no_extras();
        }
    }
    const auto* bins = f.list("bins");
    if (!bins) invalid("bins", "is required");
    for (std::size_t k = 0; k < bins->size(); ++k) {
        const auto p = idx("bins", k);
        Fields b((*bins)[k], p);
        SimBin bin;
        bin.config.bin_id = b.text("bin_id");
        bin.config.sensor_id = b.text("sensor_id");
        bin.config.zone_id = b.text("zone_id");
        b.object("location");
        if (!b.has("location")) invalid(p + ".location", "is required");
        bin.config.location = read_point(b.raw("location"), p + ".location");
        bin.config.depth_cm = b.number("depth_cm", 100.0);
        bin.config.full_offset_cm = b.number("full_offset_cm", 10.0);
        bin.initial_fill = b.number("initial_fill", 0.0);
        bin.fill_rate_per_hr = b.number("fill_rate_per_hr", 0.0);
        bin.fill_jitter = b.number("fill_jitter", 0.0);
        if (b.has("collect_at")) bin.collect_at = b.number("collect_at");
        bin.base_gas_ppm = b.number("base_gas_ppm", 5.0);
        bin.battery_pct = b.number("battery_pct", 95.0);
        b.no_extras();
        s.bins.push_back(std::move(bin));
    }
    if (const auto* gas = f.list("gas_events")) {
        for (std::size_t k = 0; k < gas->size(); ++k) {
            Fields g((*gas)[k], idx("gas_events", k));
            GasEvent e;
            e.bin_id = g.text("bin_id");
            e.start_s = g.number("start_s");
            e.duration_s = g.number("duration_s");
            e.peak_ppm = g.number("peak_ppm");
            e.ramp_frac = g.number("ramp_frac", 0.2);
            g.no_extras();
            s.gas_events.push_back(std::move(e));
        }
    }
    if (const auto* faults = f.object("faults")) {
        Fields x(*faults, "faults");
        s.faults.dup_prob = x.number("dup_prob", 0.0);
        s.faults.loss_prob = x.number("loss_prob", 0.0);
        s.faults.reorder_prob = x.number("reorder_prob", 0.0);
        s.faults.max_delay_s = x.number("max_delay_s", 0.0);
        x.no_extras();
    }
    if (const auto* workers = f.list("workers")) {
        for (std::size_t k = 0; k < workers->size(); ++k) {
            const auto p = idx("workers", k);
            Fields w((*workers)[k], p);
            SimWorker sw;
            sw.worker_id = w.text("worker_id");
            sw.name = w.text("name", sw.worker_id);
            w.object("start_location");
            if (!w.has("start_location")) invalid(p + ".start_location", "is required");
            sw.start_location = read_point(w.raw("start_location"), p + ".start_location");
            const double cap = w.number("capacity", 5.0);
            if (cap != std::floor(cap) || cap > 1e6) invalid(p + ".capacity", "must be an integer");
            sw.capacity = static_cast<int>(cap);
            w.no_extras();
            s.workers.push_back(std::move(sw));
        }
    }
    f.no_extras();
    s.validate();
    return s;
}

Json scenario_to_json(const ScenarioConfig& s)
{
    Json zones = Json::array(), bins = Json::array(), gas = Json::array(), workers = Json::array();
    for (const auto& z : s.zones) zones.push_back(Json{{"zone_id", z.zone_id}, {"name", z.name}, {"description", z.description}});
    for (const auto& b : s.bins) {
        Json j{{"bin_id", b.config.bin_id},
               {"sensor_id", b.config.sensor_id},
               {"zone_id", b.config.zone_id},
               {"location", point_json(b.config.location)},
               {"depth_cm", b.config.depth_cm},
               {"full_offset_cm", b.config.full_offset_cm},
               {"initial_fill", b.initial_fill},
               {"fill_rate_per_hr", b.fill_rate_per_hr},
               {"fill_jitter", b.fill_jitter},
               {"base_gas_ppm", b.base_gas_ppm},
               {"battery_pct", b.battery_pct}};
        if (b.collect_at) j["collect_at"] = *b.collect_at;
        bins.push_back(std::move(j));
    }
    for (const auto& g : s.gas_events)
        gas.push_back(Json{{"bin_id", g.bin_id},
                           {"start_s", g.start_s},
                           {"duration_s", g.duration_s},
                           {"peak_ppm", g.peak_ppm},
                           {"ramp_frac", g.ramp_frac}});
    for (const auto& w : s.workers)
        workers.push_back(Json{{"worker_id", w.worker_id},
                               {"name", w.name},
                               {"start_location", point_json(w.start_location)},
                               {"capacity", w.capacity}});
    return Json{{"name", s.name},
                {"seed", s.seed},
                {"duration_s", s.duration_s},
                {"report_interval_s", s.report_interval_s},
                {"time_scale", s.time_scale},
                {"epoch", format_iso8601(s.epoch)},
                {"zones", std::move(zones)},
                {"bins", std::move(bins)},
                {"gas_events", std::move(gas)},
                {"faults",
                 {{"dup_prob", s.faults.dup_prob},
                  {"loss_prob", s.faults.loss_prob},
                  {"reorder_prob", s.faults.reorder_prob},
                  {"max_delay_s", s.faults.max_delay_s}}},
                {"workers", std::move(workers)}};
}

ScenarioConfig load_scenario(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw Error("NOT_FOUND", "cannot read scenario file " + file.string());
    std::stringstream text;
    text << in.rdbuf();
    Json j;
    try {
        j = Json::parse(text.str());
    } catch (const Json::parse_error& e) {
        throw Error("PARSE", file.string() + ": " + e.what());
    }
    return scenario_from_json(j);
}

std::vector<std::string> builtin_names() { return {"fig4_levels", "gas_fire", "hajj_day"}; }

ScenarioConfig builtin_scenario(const std::string& name)
{
    ScenarioConfig s;
    s.name = name;
    s.epoch = default_epoch();
    auto bin = [](std::string id, std::string sensor, std::string zone, double lat, double lon, double fill) {
        SimBin b;
        b.config = BinConfig{std::move(id), std::move(sensor), GeoPoint(lat, lon), std::move(zone), 100.0, 10.0};
        b.initial_fill = fill;
        return b;
    };

    if (name == "fig4_levels") {
        // three bins held at the demonstration levels
        s.seed = 4;
        s.duration_s = 180.0;
        s.report_interval_s = 60.0;
        s.zones = {Zone{"mina", "Mina", "Tent city east of the Jamarat"}};
        s.bins = {bin("bin-empty", "sensor-empty", "mina", 21.4133, 39.8933, 0.00),
                  bin("bin-almost", "sensor-almost", "mina", 21.4141, 39.8948, 0.50),
                  bin("bin-full", "sensor-full", "mina", 21.4150, 39.8962, 0.95)};
        s.workers = {SimWorker{"worker-1", "Mina crew", GeoPoint(21.4128, 39.8921), 5}};
    } else if (name == "gas_fire") {
        // one half-full bin; a fire drives gas to five times the alarm level
        s.seed = 7;
        s.duration_s = 600.0;
        s.report_interval_s = 10.0;
        s.zones = {Zone{"mina", "Mina", ""}};
        s.bins = {bin("bin-fire", "sensor-fire", "mina", 21.4133, 39.8933, 0.30)};
        s.gas_events = {GasEvent{"bin-fire", 300.0, 120.0, 5 * Thresholds{}.gas_alert_ppm, 0.2}};
    } else if (name == "hajj_day") {
        // 50 bins over five holy sites; rates put each bin over FULL two or
        // three times in the day with a collection reset at the brim
        s.seed = 2025;
        s.duration_s = 86'400.0;
        s.report_interval_s = 60.0;
        struct Site {
            const char* id;
            const char* name;
            double lat, lon;
        };
        const Site sites[] = {{"haram", "Masjid al-Haram", 21.4225, 39.8262},
                              {"mina", "Mina", 21.4133, 39.8933},
                              {"jamarat", "Jamarat", 21.4212, 39.8729},
                              {"muzdalifah", "Muzdalifah", 21.3833, 39.9361},
                              {"arafat", "Arafat", 21.3549, 39.9841}};
        std::mt19937_64 layout(s.seed);
        int n = 0;
        for (const auto& site : sites) {
            s.zones.push_back(Zone{site.id, site.name, ""});
            for (int k = 0; k < 10; ++k) {
                ++n;
                const auto id = std::to_string(n);
                const double dlat = (uniform01(layout) - 0.5) * 0.01;
                const double dlon = (uniform01(layout) - 0.5) * 0.01;
                auto b = bin("hd-bin-" + id, "hd-sensor-" + id, site.id, site.lat + dlat, site.lon + dlon,
                             0.5 * uniform01(layout));
                b.fill_rate_per_hr = (2.0 + uniform01(layout)) / 24.0;
                b.fill_jitter = 0.005;
                b.collect_at = 1.0;
                s.bins.push_back(std::move(b));
            }
            s.workers.push_back(SimWorker{std::string("crew-") + site.id, std::string(site.name) + " crew",
                                          GeoPoint(site.lat, site.lon), 6});
        }
        s.gas_events = {GasEvent{"hd-bin-7", 5 * 3600.0, 900.0, 900.0, 0.2},
                        GasEvent{"hd-bin-33", 15 * 3600.0, 600.0, 1200.0, 0.2}};
    } else {
        throw Error("NOT_FOUND", "no built-in scenario named " + name);
    }
    s.validate();
    return s;
}

ScenarioConfig resolve_scenario(const std::string& name_or_path)
{
    const auto names = builtin_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_scenario(name_or_path);
    return load_scenario(name_or_path);
}

double analytic_base_fill(const SimBin& b, double t)
{
    double f = b.initial_fill + b.fill_rate_per_hr * t / 3600.0;
    if (b.collect_at && f >= *b.collect_at) f = std::fmod(f, *b.collect_at);
    return std::clamp(f, 0.0, 1.0);
}

double gas_at(const ScenarioConfig& s, const SimBin& b, double t)
{
    double ppm = b.base_gas_ppm;
    for (const auto& e : s.gas_events) {
        if (e.bin_id != b.config.bin_id) continue;
        const double x = t - e.start_s;
        if (x < 0.0 || x > e.duration_s) continue;
        const double ramp = e.ramp_frac * e.duration_s;
        double level = 1.0;
        if (ramp > 0.0 && x < ramp) level = x / ramp;
        if (ramp > 0.0 && x > e.duration_s - ramp) level = (e.duration_s - x) / ramp;
        ppm += e.peak_ppm * level;
    }
    return ppm;
}

Simulation::Simulation(ScenarioConfig scenario) : scenario_(std::move(scenario))
{
    scenario_.validate();
    for (std::size_t k = 0; k < scenario_.bins.size(); ++k)
        streams_.push_back(BinStream{stream_for(scenario_.seed, k, 0), stream_for(scenario_.seed, k, 1), 0, 0});
}

bool Simulation::finished() const noexcept { return now_ >= scenario_.duration_s && held_.empty(); }

std::vector<Transmission> Simulation::step(double dt)
{
    if (!(dt > 0.0)) throw Error("INVALID", "step needs dt > 0");
    const double until = now_ + dt;
    const auto& f = scenario_.faults;
    const double interval = scenario_.report_interval_s;
    std::vector<Transmission> out;

    for (std::size_t i = 0; i < scenario_.bins.size(); ++i) {
        const auto& b = scenario_.bins[i];
        auto& st = streams_[i];
        for (;;) {
            const double t = static_cast<double>(st.next_k) * interval;
            if (t >= until || t >= scenario_.duration_s) break;
            ++st.next_k;

            // a fixed number of draws per report keeps the streams aligned
            // whatever the fault settings are
            const double noise = standard_normal(st.values);
            const double u_loss = uniform01(st.faults), u_dup = uniform01(st.faults);
            const double u_reorder = uniform01(st.faults), u_delay = uniform01(st.faults);

            const double fill = std::clamp(analytic_base_fill(b, t) + b.fill_jitter * noise, 0.0, 1.0);
            reported_[b.config.bin_id] = fill;

            Transmission tx;
            tx.bin_index = i;
            tx.env.sensor_id = b.config.sensor_id;
            tx.env.seq = st.seq++;
            tx.env.ts = scenario_.epoch + Millis{std::llround(t * 1000.0)};
            tx.env.distance_cm = fill_to_distance(fill, b.config);
            tx.env.gas_ppm = gas_at(scenario_, b, t);
            tx.env.battery_pct = b.battery_pct;
            tx.deliver_s = t;
            if (u_loss < f.loss_prob) {
                tx.lost = true;
                out.push_back(tx);
                continue;
            }
            if (u_reorder < f.reorder_prob) tx.deliver_s = t + u_delay * f.max_delay_s;
            const bool dup = u_dup < f.dup_prob;
            auto& dest = tx.deliver_s < until ? out : held_;
            dest.push_back(tx);
            if (dup) {
                tx.copy = 1;
                dest.push_back(tx);
            }
        }
    }
    auto due = std::partition(held_.begin(), held_.end(), [&](const Transmission& t) { return t.deliver_s >= until; });
    out.insert(out.end(), due, held_.end());
    held_.erase(due, held_.end());

    std::sort(out.begin(), out.end(), [](const Transmission& a, const Transmission& b) {
        return std::tie(a.deliver_s, a.bin_index, a.env.seq, a.copy) <
               std::tie(b.deliver_s, b.bin_index, b.env.seq, b.copy);
    });
    now_ = until;
    return out;
}

std::vector<Transmission> Simulation::drain()
{
    auto out = std::move(held_);
    held_.clear();
    std::sort(out.begin(), out.end(), [](const Transmission& a, const Transmission& b) {
        return std::tie(a.deliver_s, a.bin_index, a.env.seq, a.copy) <
               std::tie(b.deliver_s, b.bin_index, b.env.seq, b.copy);
    });
    return out;
}

Json to_json(const SimStats& s)
{
    return Json{{"records", s.records},
                {"records_sent", s.records_sent},
                {"acks_ok", s.acks_ok},
                {"acks_dup", s.acks_dup},
                {"acks_err", s.acks_err},
                {"records_lost", s.records_lost},
                {"reconnects", s.reconnects},
                {"max_ack_latency_ms", s.max_ack_latency_ms},
                {"p99_ack_latency_ms", s.p99_ack_latency_ms},
                {"wall_s", s.wall_s},
                {"final_fill", s.final_fill}};
}

}  // namespace tuhr::sim
