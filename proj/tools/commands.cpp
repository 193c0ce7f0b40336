#include <spdlog/spdlog.h>

#include <array>
#include <cstdio>
#include <iostream>
#include <map>

#include "cli.hpp"
#include "tuhr/dispatch.hpp"
#include "tuhr/error.hpp"
#include "tuhr/simulator.hpp"
#include "tuhr/store.hpp"

namespace tuhr::cli {

namespace fs = std::filesystem;

namespace {

void require_dir(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw Error("NOT_FOUND", "no data directory at " + dir.string());
}

std::string offset_text(const std::optional<std::uint64_t>& o) { return o ? std::to_string(*o) : "none"; }

}  // namespace

int simulate(const SimulateFlags& f)
{
    auto scenario = sim::resolve_scenario(f.scenario);
    if (f.seed) scenario.seed = *f.seed;
    if (f.time_scale) scenario.time_scale = *f.time_scale;
    if (f.duration_s) scenario.duration_s = *f.duration_s;
    if (f.dup_prob) scenario.faults.dup_prob = *f.dup_prob;
    if (f.loss_prob) scenario.faults.loss_prob = *f.loss_prob;
    if (f.reorder_prob) scenario.faults.reorder_prob = *f.reorder_prob;
    if (f.max_delay_s) scenario.faults.max_delay_s = *f.max_delay_s;
    scenario.validate();

    const auto port_of = [](const std::optional<int>& flag, const char* var, int fallback) {
        int p = fallback;
        if (flag)
            p = *flag;
        else if (auto v = env(var))
            p = std::stoi(*v);
        if (p <= 0 || p > 65535) throw Error("INVALID", "bad port " + std::to_string(p));
        return static_cast<std::uint16_t>(p);
    };

    if (!f.no_provision) {
        sim::ProvisionOptions po;
        po.host = f.server;
        po.port = port_of(f.api_port, "API_PORT", 8080);
        po.username = f.admin_user.value_or(env("ADMIN_USER").value_or("admin"));
        const auto password = f.admin_password ? f.admin_password : env("ADMIN_PASSWORD");
        if (!password) throw Error("INVALID", "provisioning needs --admin-password or TUHR_ADMIN_PASSWORD");
        po.password = *password;
        sim::provision(scenario, po);
        spdlog::info("provisioned {} bin(s) and {} worker(s) for scenario {}", scenario.bins.size(),
                     scenario.workers.size(), scenario.name);
    }

    sim::RunOptions ro;
    ro.host = f.server;
    ro.port = port_of(f.telemetry_port, "TELEMETRY_PORT", 7070);
    ro.connections = f.connections;
    const auto stats = sim::run(scenario, ro);

    auto j = sim::to_json(stats);
    j["scenario"] = scenario.name;
    j["seed"] = scenario.seed;
    if (f.format == Format::Records) {
        std::cout << j.dump() << '\n';
        return kOk;
    }
    std::printf("scenario            %s (seed %llu)\n", scenario.name.c_str(),
                static_cast<unsigned long long>(scenario.seed));
    for (const char* key : {"records", "records_sent", "acks_ok", "acks_dup", "acks_err", "records_lost", "reconnects"})
        std::printf("%-19s %llu\n", key, j[key].get<unsigned long long>());
    std::printf("max_ack_latency_ms  %.3f\n", stats.max_ack_latency_ms);
    std::printf("p99_ack_latency_ms  %.3f\n", stats.p99_ack_latency_ms);
    std::printf("wall_s              %.3f\n", stats.wall_s);
    if (stats.final_fill.size() <= 20)
        for (const auto& [bin, fill] : stats.final_fill) std::printf("final_fill          %s %.4f\n", bin.c_str(), fill);
    return kOk;
}

int plan(const fs::path& data_dir, Format format)
{
    require_dir(data_dir);
    const auto rec = store::recover(data_dir);
    const auto bins = rec.state.bin_list();
    const auto workers = rec.state.worker_list();
    // Stamped with the newest reading so the output depends on the log alone.
    std::optional<Timestamp> ts;
    for (const auto& b : bins)
        if (b.last_reading_ts && (!ts || *b.last_reading_ts > *ts)) ts = b.last_reading_ts;
    const auto p = dispatch::plan_dispatch(bins, workers, ts.value_or(Timestamp{}));

    if (format == Format::Records) {
        for (const auto& r : p.routes)
            std::cout << Json{{"type", "route"}, {"worker_id", r.worker_id}, {"stops", r.stops}, {"length_m", r.length_m}}
                             .dump()
                      << '\n';
        std::cout << Json{{"type", "summary"},
                          {"plan_id", p.plan_id},
                          {"routes", p.routes.size()},
                          {"unassigned", p.unassigned},
                          {"capacity_exhausted", p.capacity_exhausted},
                          {"as_of_offset", rec.state.as_of_offset ? Json(*rec.state.as_of_offset) : Json(nullptr)}}
                         .dump()
                  << '\n';
        return kOk;
    }
    for (const auto& r : p.routes) {
        std::string stops;
        for (const auto& s : r.stops) stops += (stops.empty() ? "" : " -> ") + s;
        std::printf("%-16s %10.1f m  %s\n", r.worker_id.c_str(), r.length_m, stops.c_str());
    }
    std::printf("%zu routes\n", p.routes.size());
    if (!p.unassigned.empty()) {
        std::printf("unassigned (capacity exhausted):");
        for (const auto& b : p.unassigned) std::printf(" %s", b.c_str());
        std::printf("\n");
    }
    return kOk;
}

int replay(const fs::path& data_dir, std::optional<std::uint64_t> upto, Format format)
{
    require_dir(data_dir);
    const auto first = store::recover(data_dir, upto, false);
    const auto second = store::recover(data_dir, upto, false);
    const auto fast = store::recover(data_dir, upto, true);
    const auto h1 = store::snapshot_hash(first.state);
    const auto h2 = store::snapshot_hash(second.state);
    const auto h3 = store::snapshot_hash(fast.state);
    const bool same = h1 == h2 && h1 == h3;

    if (format == Format::Records) {
        std::cout << Json{{"offset", first.state.as_of_offset ? Json(*first.state.as_of_offset) : Json(nullptr)},
                          {"hash", h1},
                          {"events", first.replayed_events},
                          {"snapshot_offset", fast.snapshot_offset ? Json(*fast.snapshot_offset) : Json(nullptr)},
                          {"snapshot_hash", h3},
                          {"torn_tail", first.torn_tail},
                          {"consistent", same}}
                         .dump()
                  << '\n';
    } else {
        std::printf("offset %s\n", offset_text(first.state.as_of_offset).c_str());
        std::printf("events %zu%s\n", first.replayed_events, first.torn_tail ? " (torn tail skipped)" : "");
        if (fast.snapshot_offset)
            std::printf("snapshot %llu + %zu tail event(s)\n", static_cast<unsigned long long>(*fast.snapshot_offset),
                        fast.replayed_events);
        std::printf("hash %s\n", h1.c_str());
    }
    if (!same) {
        std::fprintf(stderr, "error: MISMATCH: replays disagree (%s, %s, snapshot path %s)\n", h1.c_str(), h2.c_str(),
                     h3.c_str());
        return kMismatch;
    }
    return kOk;
}

int report(const fs::path& data_dir, Format format)
{
    require_dir(data_dir);
    const auto rec = store::recover(data_dir);
    const auto& s = rec.state;

    struct Row {
        std::array<int, 4> states{};
        int open_alerts = 0;
    };
    std::map<std::string, Row> zones;
    for (const auto& [id, z] : s.zones) zones[id];
    for (const auto& [id, b] : s.bins) ++zones[b.config.zone_id].states[static_cast<int>(b.state)];
    const auto open = s.open_alerts();
    for (const auto& a : open) {
        auto it = s.bins.find(a.bin_id);
        ++zones[it == s.bins.end() ? std::string("?") : it->second.config.zone_id].open_alerts;
    }
    Row total;
    for (const auto& [id, r] : zones) {
        for (int k = 0; k < 4; ++k) total.states[k] += r.states[k];
        total.open_alerts += r.open_alerts;
    }
    const auto pv = store::plan_view(s);
    std::size_t stops = 0;
    if (s.plan)
        for (const auto& r : s.plan->routes) stops += r.stops.size();

    static const char* names[] = {"EMPTY", "PARTIAL", "ALMOST_FULL", "FULL"};
    if (format == Format::Records) {
        auto row_json = [&](const std::string& zone, const Row& r, const char* type) {
            Json j{{"type", type}};
            if (!zone.empty()) j["zone_id"] = zone;
            for (int k = 0; k < 4; ++k) j[names[k]] = r.states[k];
            j["open_alerts"] = r.open_alerts;
            return j;
        };
        for (const auto& [id, r] : zones) std::cout << row_json(id, r, "zone").dump() << '\n';
        std::cout << row_json("", total, "total").dump() << '\n';
        for (const auto& a : open) {
            auto j = store::to_json(a);
            j["type"] = "alert";
            std::cout << j.dump() << '\n';
        }
        std::cout << Json{{"type", "plan"},
                          {"plan_id", s.plan ? Json(s.plan->plan_id) : Json(nullptr)},
                          {"routes", s.plan ? s.plan->routes.size() : 0},
                          {"stops", stops},
                          {"stale", pv["stale"]},
                          {"unassigned", s.plan ? s.plan->unassigned.size() : 0}}
                         .dump()
                  << '\n';
        return kOk;
    }

    std::printf("as of offset %s\n\n", offset_text(s.as_of_offset).c_str());
    std::printf("%-16s %7s %9s %12s %6s %7s\n", "ZONE", names[0], names[1], names[2], names[3], "ALERTS");
    auto print_row = [&](const std::string& zone, const Row& r) {
        std::printf("%-16s %7d %9d %12d %6d %7d\n", zone.c_str(), r.states[0], r.states[1], r.states[2], r.states[3],
                    r.open_alerts);
    };
    for (const auto& [id, r] : zones) print_row(id, r);
    print_row("total", total);

    std::printf("\nopen alerts: %zu\n", open.size());
    for (const auto& a : open)
        std::printf("  %-15s %-16s %s  %s\n", std::string(alerting::to_string(a.kind)).c_str(), a.bin_id.c_str(),
                    format_iso8601(a.raised_ts).c_str(), a.detail.c_str());

    if (!s.plan) {
        std::printf("\nplan: none\n");
    } else {
        std::printf("\nplan %s: %zu routes, %zu stops%s%s\n", s.plan->plan_id.c_str(), s.plan->routes.size(), stops,
                    s.plan_stale ? ", stale" : "",
                    s.plan->unassigned.empty()
                        ? ""
                        : (", " + std::to_string(s.plan->unassigned.size()) + " unassigned").c_str());
    }
    return kOk;
}

}  // namespace tuhr::cli
