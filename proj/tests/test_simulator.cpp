#include <doctest.h>

#include <sys/socket.h>

#include <fstream>
#include <set>
#include <thread>

#include "support.hpp"
#include "tuhr/engine.hpp"
#include "tuhr/error.hpp"
#include "tuhr/simulator.hpp"
#include "tuhr/telemetry_server.hpp"

using namespace tuhr;
using namespace tuhr::sim;
using tuhr::testing::TempDir;

namespace {

std::string error_of(const Json& j)
{
    try {
        scenario_from_json(j);
    } catch (const Error& e) {
        return e.code() + " " + e.what();
    }
    return "none";
}

Json minimal()
{
    return Json::parse(R"({
        "duration_s": 600,
        "bins": [{"bin_id": "b-1", "sensor_id": "s-1", "zone_id": "z",
                  "location": {"lat": 21.4, "lon": 39.8}, "initial_fill": 0.5}]
    })");
}

std::vector<std::string> stream(ScenarioConfig s)
{
    Simulation sim(std::move(s));
    std::vector<std::string> out;
    while (sim.now_s() < sim.scenario().duration_s)
        for (const auto& tx : sim.step(sim.scenario().report_interval_s))
            out.push_back(telemetry::serialize_record(tx.env) + (tx.lost ? " lost" : "") + (tx.copy ? " dup" : ""));
    for (const auto& tx : sim.drain()) out.push_back(telemetry::serialize_record(tx.env) + " late");
    return out;
}

ScenarioConfig noisy(std::uint64_t seed)
{
    auto s = builtin_scenario("hajj_day");
    s.seed = seed;
    s.duration_s = 4 * 3600.0;
    s.bins.resize(8);
    s.gas_events.clear();
    for (auto& b : s.bins) b.fill_jitter = 0.03;
    return s;
}

// Engine plus TCP listener in one process.
struct Server {
    TempDir dir{"sim"};
    std::unique_ptr<engine::Engine> engine;
    std::unique_ptr<telemetry::TelemetryServer> tcp;

    explicit Server(const ScenarioConfig& s)
    {
        engine::EngineOptions o;
        o.data_dir = dir.path();
        o.offline_timeout = Millis{0};
        engine = std::make_unique<engine::Engine>(o);
        std::set<std::string> zones;
        for (const auto& b : s.bins)
            if (zones.insert(b.config.zone_id).second) engine->create_zone(Zone{b.config.zone_id, b.config.zone_id, ""});
        for (const auto& b : s.bins) engine->create_sensor(b.config);
        for (const auto& w : s.workers)
            engine->upsert_worker(WorkerProfile{w.worker_id, w.name, w.start_location, w.capacity, Role::Worker});
        tcp = std::make_unique<telemetry::TelemetryServer>(*engine, telemetry::ServerOptions{"127.0.0.1", 0});
        tcp->start();
    }

    SimStats run(const ScenarioConfig& s, int connections = 1)
    {
        RunOptions r;
        r.port = tcp->port();
        r.connections = connections;
        return sim::run(s, r);
    }

    std::string hash() { return store::snapshot_hash(*engine->view()); }
};

}  // namespace

TEST_CASE("scenario files report errors with field paths")
{
    CHECK(error_of(minimal()) == "none");

    auto j = minimal();
    j["bins"][0]["initial_fill"] = 1.5;
    CHECK(error_of(j).find("INVALID bins[0].initial_fill") == 0);

    j = minimal();
    j["bins"][0]["colour"] = "green";
    CHECK(error_of(j).find("bins[0].colour: unknown field") != std::string::npos);

    j = minimal();
    j["faults"] = {{"dup_prob", -0.1}};
    CHECK(error_of(j).find("faults.dup_prob") != std::string::npos);

    j = minimal();
    j["gas_events"] = Json::array({{{"bin_id", "nope"}, {"start_s", 1}, {"duration_s", 5}, {"peak_ppm", 9}}});
    CHECK(error_of(j).find("gas_events[0].bin_id") != std::string::npos);

    j = minimal();
    j["bins"][0]["location"]["lat"] = 123.0;
    CHECK(error_of(j).find("bins[0].location") != std::string::npos);

    j = minimal();
    j["bins"].push_back(j["bins"][0]);
    CHECK(error_of(j).find("bins[1].bin_id: duplicate") != std::string::npos);

    j = minimal();
    j.erase("duration_s");
    CHECK(error_of(j).find("duration_s: is required") != std::string::npos);

    j = minimal();
    j["seed"] = -3;
    CHECK(error_of(j).find("seed") != std::string::npos);

    TempDir dir("scenario");
    const auto path = dir.path() / "broken.json";
    std::ofstream(path) << "{\"duration_s\": ";
    try {
        load_scenario(path);
        FAIL("expected PARSE");
    } catch (const Error& e) {
        CHECK(e.code() == "PARSE");
    }
    const auto good = dir.path() / "good.json";
    std::ofstream(good) << minimal().dump();
    CHECK(load_scenario(good).bins.size() == 1);
    CHECK(resolve_scenario(good.string()).bins.size() == 1);
}

TEST_CASE("scenario json round trip")
{
    for (const auto& name : builtin_names()) {
        CAPTURE(name);
        const auto s = builtin_scenario(name);
        const auto back = scenario_from_json(scenario_to_json(s));
        CHECK(scenario_to_json(back) == scenario_to_json(s));
    }
    CHECK_THROWS_AS(builtin_scenario("nope"), Error);
}

TEST_CASE("built-in scenarios")
{
    const auto fig4 = builtin_scenario("fig4_levels");
    REQUIRE(fig4.bins.size() == 3);
    CHECK(fig4.bins[0].initial_fill == 0.00);
    CHECK(fig4.bins[1].initial_fill == 0.50);
    CHECK(fig4.bins[2].initial_fill == 0.95);
    for (const auto& b : fig4.bins) {
        CHECK(b.fill_rate_per_hr == 0.0);
        CHECK(b.fill_jitter == 0.0);
    }
    CHECK(fig4.faults.dup_prob + fig4.faults.loss_prob + fig4.faults.reorder_prob == 0.0);

    const auto gas = builtin_scenario("gas_fire");
    REQUIRE(gas.bins.size() == 1);
    REQUIRE(gas.gas_events.size() == 1);
    CHECK(gas.gas_events[0].peak_ppm == 5 * Thresholds{}.gas_alert_ppm);
    CHECK(gas.gas_events[0].duration_s == 120.0);

    const auto day = builtin_scenario("hajj_day");
    REQUIRE(day.bins.size() == 50);
    CHECK(day.duration_s == 86'400.0);
    const Thresholds t;
    for (const auto& b : day.bins) {
        int crossings = 0;
        double prev = analytic_base_fill(b, 0.0);
        for (double s = day.report_interval_s; s < day.duration_s; s += day.report_interval_s) {
            const double f = analytic_base_fill(b, s);
            crossings += prev < t.full_at && f >= t.full_at;
            prev = f;
        }
        CAPTURE(b.config.bin_id);
        CHECK(crossings >= 2);
        CHECK(crossings <= 3);
    }
}

TEST_CASE("step examples")
{
    auto s = scenario_from_json(minimal());
    SUBCASE("constant fill maps back to its distance")
    {
        Simulation sim(s);
        auto out = sim.step(s.duration_s);
        REQUIRE(out.size() == 10);
        for (const auto& tx : out) CHECK(tx.env.distance_cm == 100.0 - 0.5 * (100.0 - 10.0));
        for (std::size_t k = 0; k < out.size(); ++k) CHECK(out[k].env.seq == k);
    }
    SUBCASE("dup_prob 1 sends every record twice")
    {
        s.faults.dup_prob = 1.0;
        Simulation sim(s);
        auto out = sim.step(s.duration_s);
        REQUIRE(out.size() == 20);
        for (std::size_t k = 0; k < out.size(); k += 2) {
            CHECK(out[k].env == out[k + 1].env);
            CHECK(out[k + 1].copy == 1);
        }
    }
    SUBCASE("loss_prob 1 sends nothing")
    {
        s.faults.loss_prob = 1.0;
        Simulation sim(s);
        auto out = sim.step(s.duration_s);
        REQUIRE(out.size() == 10);
        for (const auto& tx : out) CHECK(tx.lost);
    }
    SUBCASE("dt must be positive")
    {
        Simulation sim(s);
        CHECK_THROWS_AS(sim.step(0.0), Error);
    }
}

TEST_CASE("gas trapezoid")
{
    const auto s = builtin_scenario("gas_fire");
    const auto& b = s.bins[0];
    CHECK(gas_at(s, b, 0.0) == b.base_gas_ppm);
    CHECK(gas_at(s, b, 300.0) == b.base_gas_ppm);
    CHECK(gas_at(s, b, 312.0) == doctest::Approx(b.base_gas_ppm + 750.0));
    CHECK(gas_at(s, b, 360.0) == b.base_gas_ppm + 1500.0);
    CHECK(gas_at(s, b, 408.0) == doctest::Approx(b.base_gas_ppm + 750.0));
    CHECK(gas_at(s, b, 421.0) == b.base_gas_ppm);
}

TEST_CASE("record streams are a pure function of the scenario and seed")
{
    CHECK(stream(noisy(11)) == stream(noisy(11)));
    CHECK(stream(noisy(11)) != stream(noisy(12)));

    // fault settings never shift the measurement noise
    auto clean = noisy(5);
    auto faulty = noisy(5);
    faulty.faults = Faults{1.0, 0.0, 0.5, 300.0};
    std::set<std::string> a, b;
    for (auto& l : stream(clean)) a.insert(l.substr(0, l.find('}') + 1));
    for (auto& l : stream(faulty)) b.insert(l.substr(0, l.find('}') + 1));
    CHECK(a == b);
}

TEST_CASE("reordering holds records back by at most max_delay")
{
    auto s = noisy(9);
    s.faults.reorder_prob = 0.5;
    s.faults.max_delay_s = 150.0;
    Simulation sim(s);
    std::size_t late = 0, total = 0;
    while (sim.now_s() < s.duration_s) {
        const double window_end = sim.now_s() + s.report_interval_s;
        for (const auto& tx : sim.step(s.report_interval_s)) {
            const double t = static_cast<double>(to_epoch_ms(tx.env.ts) - to_epoch_ms(s.epoch)) / 1000.0;
            CHECK(tx.deliver_s - t <= s.faults.max_delay_s);
            CHECK(tx.deliver_s < window_end);
            late += tx.deliver_s >= t + s.report_interval_s;
            ++total;
        }
    }
    total += sim.drain().size();
    CHECK(total == 8 * 240);
    CHECK(late > 100);
}

TEST_CASE("zero-fault run: server fill equals the analytic fill")
{
    auto s = noisy(21);
    Server server(s);
    const auto stats = server.run(s);
    CHECK(stats.records == 8 * 240);
    CHECK(stats.records_sent == stats.acks_ok + stats.acks_err + stats.records_lost);
    CHECK(stats.acks_ok == stats.records);
    CHECK(stats.acks_err == 0);
    const auto v = server.engine->view();
    REQUIRE(stats.final_fill.size() == 8);
    for (const auto& [bin, fill] : stats.final_fill) CHECK(std::abs(v->bins.at(bin).fill - fill) <= 1e-9);
}

TEST_CASE("duplicates never change the outcome")
{
    auto s = builtin_scenario("hajj_day");
    s.duration_s = 6 * 3600.0;
    s.bins.resize(12);
    s.gas_events = {GasEvent{"hd-bin-3", 3600.0, 900.0, 900.0, 0.2}};
    std::vector<std::string> hashes;
    for (double dup : {0.0, 0.3, 1.0}) {
        s.faults.dup_prob = dup;
        Server server(s);
        const auto stats = server.run(s);
        CHECK(stats.records_sent == stats.acks_ok + stats.acks_err + stats.records_lost);
        if (dup == 1.0) CHECK(stats.acks_dup == stats.records);
        if (dup == 0.0) CHECK(stats.acks_dup == 0);
        hashes.push_back(server.hash());
    }
    CHECK(hashes[0] == hashes[1]);
    CHECK(hashes[0] == hashes[2]);
}

TEST_CASE("reordering leaves the final bin states as in order")
{
    auto s = noisy(33);
    Server in_order(s);
    in_order.run(s);
    s.faults.reorder_prob = 0.4;
    s.faults.max_delay_s = 200.0;
    Server shuffled(s);
    const auto stats = shuffled.run(s);
    CHECK(stats.acks_ok == stats.records);
    CHECK(in_order.engine->view()->bins == shuffled.engine->view()->bins);
}

TEST_CASE("loss is counted and the server never sees lost records")
{
    auto s = noisy(3);
    s.faults.loss_prob = 1.0;
    Server server(s);
    const auto stats = server.run(s);
    CHECK(stats.records_lost == stats.records);
    CHECK(stats.records_sent == stats.records);
    CHECK(stats.acks_ok == 0);
    CHECK(server.engine->reads(engine::ReadsQuery{}).empty());
}

TEST_CASE("records unacknowledged when a connection drops are sent again")
{
    struct Sink : telemetry::ReadingSink {
        std::set<std::pair<std::string, std::uint64_t>> seen;
        telemetry::SinkVerdict accept(const telemetry::ReadingEnvelope& e) override
        {
            return seen.insert({e.sensor_id, e.seq}).second ? telemetry::SinkVerdict::Forwarded
                                                            : telemetry::SinkVerdict::Duplicate;
        }
    } sink;
    auto listener = net::listen_tcp("127.0.0.1", 0);
    std::thread server([&] {
        telemetry::IngestSession session(sink);
        {
            // stores the first record, then hangs up before acknowledging it
            net::Fd first(::accept(listener.get(), nullptr, nullptr));
            net::LineReader r(first.get());
            session.handle_line(*r.read_line(Millis{5000}));
        }
        net::Fd second(::accept(listener.get(), nullptr, nullptr));
        net::LineReader r(second.get());
        try {
            for (;;)
                if (auto line = r.read_line(Millis{5000}))
                    net::send_all(second.get(), telemetry::serialize_ack(session.handle_line(*line).ack));
        } catch (const Error&) {
            // client finished
        }
    });

    auto s = noisy(8);
    s.duration_s = 3600.0;
    s.bins.resize(2);
    RunOptions o;
    o.port = net::local_port(listener.get());
    const auto stats = sim::run(s, o);
    server.join();
    CHECK(stats.reconnects == 1);
    CHECK(stats.acks_dup == 1);
    CHECK(stats.acks_ok == stats.records);  // the first copy of the resent record was never acknowledged
    CHECK(stats.records_sent == stats.acks_ok + stats.acks_err + stats.records_lost);
    CHECK(sink.seen.size() == stats.records);
}
