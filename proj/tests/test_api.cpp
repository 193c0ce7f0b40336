#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <set>
#include <sstream>
#include <thread>

#include "support.hpp"
#include "tuhr/api.hpp"
#include "tuhr/codec.hpp"

using namespace tuhr;
using tuhr::testing::at;
using tuhr::testing::TempDir;

namespace {

struct Frame {
    std::uint64_t id = 0;
    std::string event;
    Json data;
};

// Collects server-sent events on a background thread.
class SseReader {
public:
    SseReader(std::uint16_t port, std::string path, httplib::Headers headers)
    {
        thread_ = std::thread([this, port, path = std::move(path), headers = std::move(headers)] {
            httplib::Client cli("127.0.0.1", port);
            cli.set_read_timeout(5, 0);
            cli.Get(
                path, headers,
                [this](const httplib::Response& r) {
                    status_ = r.status;
                    return !stop_;
                },
                [this](const char* data, std::size_t n) {
                    feed(std::string_view(data, n));
                    return !stop_;
                });
            done_ = true;
        });
    }
    ~SseReader()
    {
        stop_ = true;
        thread_.join();
    }

    std::vector<Frame> wait_for(std::size_t n, Millis timeout = Millis{5000})
    {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return frames_.size() >= n; });
        return frames_;
    }
    int status() const { return status_; }

private:
    void feed(std::string_view chunk)
    {
        std::lock_guard lock(mu_);
        buf_.append(chunk);
        for (;;) {
            const auto end = buf_.find("\n\n");
            if (end == std::string::npos) break;
            std::istringstream block(buf_.substr(0, end));
            buf_.erase(0, end + 2);
            Frame f;
            bool any = false;
            for (std::string line; std::getline(block, line);) {
                if (line.rfind("id: ", 0) == 0) f.id = std::stoull(line.substr(4)), any = true;
                if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
                if (line.rfind("data: ", 0) == 0) f.data = Json::parse(line.substr(6));
            }
            if (any) frames_.push_back(std::move(f));
        }
        cv_.notify_all();
    }

    std::thread thread_;
    std::atomic<bool> stop_{false}, done_{false};
    std::atomic<int> status_{0};
    std::mutex mu_;
    std::condition_variable cv_;
    std::string buf_;
    std::vector<Frame> frames_;
};

telemetry::ReadingEnvelope reading(std::string sid, std::uint64_t seq, Timestamp ts, double dist, double gas = 0.0)
{
    telemetry::ReadingEnvelope e;
    e.sensor_id = std::move(sid);
    e.seq = seq;
    e.ts = ts;
    e.distance_cm = dist;
    e.gas_ppm = gas;
    e.battery_pct = 90.0;
    return e;
}

struct ApiFixture {
    TempDir dir{"api"};
    std::shared_ptr<std::atomic<std::int64_t>> now =
        std::make_shared<std::atomic<std::int64_t>>(to_epoch_ms(at("2025-06-01T12:00:00Z")));
    std::unique_ptr<engine::Engine> engine;
    std::unique_ptr<auth::CredentialStore> creds;
    std::unique_ptr<api::ApiServer> server;
    std::unique_ptr<httplib::Client> cli;

    ApiFixture()
    {
        auto clock = now;
        auto tick = [clock] { return from_epoch_ms(clock->load()); };
        engine::EngineOptions eo;
        eo.data_dir = dir.path();
        eo.clock = tick;
        engine = std::make_unique<engine::Engine>(eo);
        auth::AuthOptions ao;
        ao.file = dir.path() / "users.json";
        ao.cost = auth::HashCost::Minimum;
        ao.clock = tick;
        creds = std::make_unique<auth::CredentialStore>(ao);
        creds->create("root", "Admin", "rootpw", Role::Admin);
        api::ApiOptions opt;
        opt.host = "127.0.0.1";
        opt.port = 0;
        opt.keepalive = Millis{200};
        opt.stream_poll = Millis{50};
        server = std::make_unique<api::ApiServer>(*engine, *creds, opt);
        server->start();
        cli = std::make_unique<httplib::Client>("127.0.0.1", server->port());
        cli->set_read_timeout(10, 0);
    }
    ~ApiFixture() { server->stop(); }

    std::string login(const std::string& user, const std::string& pw)
    {
        auto r = cli->Post("/api/login", Json{{"username", user}, {"password", pw}}.dump(), "application/json");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return Json::parse(r->body).at("token").get<std::string>();
    }

    static httplib::Headers auth(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

    httplib::Result call(const std::string& method, const std::string& path, const std::string& token,
                         const Json& body = nullptr)
    {
        const auto h = token.empty() ? httplib::Headers{} : auth(token);
        const auto text = body.is_null() ? std::string{} : body.dump();
        if (method == "GET") return cli->Get(path, h);
        if (method == "POST") return cli->Post(path, h, text, "application/json");
        if (method == "PUT") return cli->Put(path, h, text, "application/json");
        return cli->Delete(path, h);
    }

    Json ok(const std::string& method, const std::string& path, const std::string& token, const Json& body = nullptr,
            int expect = 200)
    {
        auto r = call(method, path, token, body);
        REQUIRE(r);
        INFO(method << " " << path << " -> " << r->body);
        REQUIRE(r->status == expect);
        return Json::parse(r->body);
    }

    int status(const std::string& method, const std::string& path, const std::string& token,
               const Json& body = nullptr)
    {
        auto r = call(method, path, token, body);
        REQUIRE(r);
        return r->status;
    }

    // one zone, three bins, worker "crew"
    void provision(const std::string& admin)
    {
        ok("POST", "/api/zones", admin, {{"zone_id", "z-1"}, {"name", "Mina"}}, 201);
        for (int k = 1; k <= 3; ++k) {
            const auto n = std::to_string(k);
            ok("POST", "/api/sensors", admin,
               {{"bin_id", "b-" + n},
                {"sensor_id", "s-" + n},
                {"zone_id", "z-1"},
                {"location", {{"lat", 21.41 + 0.001 * k}, {"lon", 39.89}}},
                {"depth_cm", 100.0},
                {"full_offset_cm", 10.0}},
               201);
        }
        ok("POST", "/api/users", admin,
           {{"username", "crew"},
            {"password", "crewpw"},
            {"name", "Crew"},
            {"role", "WORKER"},
            {"start_location", {{"lat", 21.41}, {"lon", 39.88}}},
            {"capacity", 5}},
           201);
    }
};

}  // namespace

TEST_CASE_FIXTURE(ApiFixture, "login, bad passwords and idle expiry")
{
    const auto token = login("root", "rootpw");
    CHECK(token.size() == 64);
    auto me = ok("GET", "/api/me", token);
    CHECK(me["role"] == "ADMIN");

    auto wrong = cli->Post("/api/login", R"({"username":"root","password":"nope"})", "application/json");
    auto unknown = cli->Post("/api/login", R"({"username":"ghost","password":"nope"})", "application/json");
    REQUIRE(wrong);
    REQUIRE(unknown);
    CHECK(wrong->status == 401);
    CHECK(unknown->status == 401);
    CHECK(wrong->body == unknown->body);

    CHECK(status("GET", "/api/bins", "") == 401);
    CHECK(status("GET", "/api/bins", "deadbeef") == 401);

    *now += 7 * 3600 * 1000;
    CHECK(status("GET", "/api/bins", token) == 200);  // use refreshes the idle timer
    *now += 8 * 3600 * 1000 + 1;
    CHECK(status("GET", "/api/bins", token) == 401);

    const auto again = login("root", "rootpw");
    ok("POST", "/api/logout", again);
    CHECK(status("GET", "/api/bins", again) == 401);
}

TEST_CASE_FIXTURE(ApiFixture, "role matrix over every endpoint")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    ok("POST", "/api/users", admin,
       {{"username", "w-1"}, {"password", "w1pw"}, {"start_location", {{"lat", 21.4}, {"lon", 39.8}}}}, 201);
    ok("POST", "/api/zones", admin, {{"zone_id", "z-2"}}, 201);

    const std::set<std::string> worker_allowed = {
        "GET /api/bins",   "GET /api/bins/:id", "POST /api/bins/:id/empty", "GET /api/reads", "GET /api/alerts",
        "GET /api/plan",   "GET /api/events",   "GET /api/me",              "PUT /api/me",    "POST /api/logout",
        "POST /api/login", "GET /api/health"};

    auto probe = [&](const api::RouteInfo& r, const std::string& token) {
        if (r.sample == "/api/events") {
            SseReader sse(server->port(), r.sample, token.empty() ? httplib::Headers{} : auth(token));
            for (int k = 0; k < 200 && sse.status() == 0; ++k) std::this_thread::sleep_for(Millis{10});
            return sse.status();
        }
        Json body = nullptr;
        if (r.method == "PUT" && r.sample == "/api/me") body = Json{{"name", "Someone"}};
        if (r.method == "POST" && r.sample == "/api/login") body = Json{{"username", "root"}, {"password", "rootpw"}};
        return status(r.method, r.sample, token, body);
    };

    REQUIRE(server->routes().size() >= 27);
    for (const auto& r : server->routes()) {
        const auto key = r.method + " " + r.pattern;
        CAPTURE(key);
        const int anonymous = probe(r, "");
        if (r.access == api::Access::Public)
            CHECK(anonymous != 403);
        else
            CHECK(anonymous == 401);

        const int as_worker = probe(r, login("crew", "crewpw"));
        if (worker_allowed.count(key))
            CHECK((as_worker != 401 && as_worker != 403));
        else
            CHECK(as_worker == 403);
        CHECK((worker_allowed.count(key) > 0) == (r.access != api::Access::Admin));

        const int as_admin = probe(r, login("root", "rootpw"));
        CHECK(as_admin != 401);
        CHECK(as_admin != 403);
    }
}

TEST_CASE_FIXTURE(ApiFixture, "bins, empty action and alerts")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    CHECK(status("POST", "/api/sensors", admin,
                 {{"bin_id", "b-9"},
                  {"sensor_id", "s-1"},
                  {"zone_id", "z-1"},
                  {"location", {{"lat", 21.4}, {"lon", 39.8}}},
                  {"depth_cm", 100.0},
                  {"full_offset_cm", 10.0}}) == 422);
    CHECK(status("POST", "/api/sensors", admin, {{"sensor_id", "s-7"}}) == 422);

    const auto t0 = at("2025-06-01T10:00:00Z");
    engine->accept(reading("s-1", 1, t0, 100.0));
    engine->accept(reading("s-2", 1, t0, 55.0));
    engine->accept(reading("s-3", 1, t0, 14.5));

    const auto worker = login("crew", "crewpw");
    auto bins = ok("GET", "/api/bins", worker);
    REQUIRE(bins["bins"].size() == 3);
    CHECK(bins["bins"][0]["state"] == "EMPTY");
    CHECK(bins["bins"][1]["state"] == "ALMOST_FULL");
    CHECK(bins["bins"][2]["state"] == "FULL");
    CHECK(bins["bins"][2]["fill"].get<double>() == doctest::Approx(0.95).epsilon(1e-12));
    CHECK(bins["as_of_offset"] == *engine->last_offset());

    auto full = ok("GET", "/api/bins/b-3", worker);
    REQUIRE(full["alerts"].size() == 1);
    CHECK(full["alerts"][0]["kind"] == "FULL_BIN");
    auto plan = ok("GET", "/api/plan", worker);
    CHECK(plan["plan"]["routes"][0]["worker_id"] == "crew");
    CHECK(plan["plan"]["routes"][0]["stops"] == Json::array({"b-3"}));

    CHECK(status("GET", "/api/bins/b-404", worker) == 404);
    CHECK(status("POST", "/api/bins/b-404/empty", worker) == 404);
    CHECK(status("POST", "/api/bins/b-3/empty", worker, {{"ts", "2025-06-01T09:00:00Z"}}) == 409);
    CHECK(status("POST", "/api/bins/b-3/empty", worker, {{"ts", "yesterday"}}) == 422);

    auto emptied = ok("POST", "/api/bins/b-3/empty", worker);
    CHECK(emptied["state"] == "EMPTY");
    CHECK(ok("GET", "/api/bins/b-3", worker)["state"] == "EMPTY");
    CHECK(ok("GET", "/api/alerts?active=true", worker)["alerts"].empty());
    auto history = ok("GET", "/api/alerts?active=false", worker)["alerts"];
    REQUIRE(history.size() == 1);
    CHECK(history[0]["resolved_ts"].is_string());
    CHECK(ok("GET", "/api/plan", worker)["stale"] == true);
    CHECK(status("GET", "/api/alerts?active=maybe", worker) == 422);

    auto fresh = ok("POST", "/api/plan/recompute", admin);
    CHECK(fresh["stale"] == false);
    CHECK(fresh["plan"]["routes"].empty());
}

TEST_CASE_FIXTURE(ApiFixture, "reads endpoint")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    for (std::uint64_t s = 1; s <= 30; ++s)
        engine->accept(reading("s-" + std::to_string(1 + s % 3), s, at("2025-06-01T10:00:00Z") + std::chrono::seconds(s),
                               90.0));
    auto all = ok("GET", "/api/reads", admin)["reads"];
    CHECK(all.size() == 30);
    CHECK(all[0]["seq"] == 30);
    auto few = ok("GET", "/api/reads?limit=3&sensor=s-2", admin)["reads"];
    REQUIRE(few.size() == 3);
    for (const auto& r : few) CHECK(r["sensor_id"] == "s-2");
    CHECK(ok("GET", "/api/reads?bin=b-1&since=2025-06-01T10:00:28Z", admin)["reads"].size() == 1);
    CHECK(ok("GET", "/api/reads?limit=5000", admin)["reads"].size() == 30);
    CHECK(status("GET", "/api/reads?since=noon", admin) == 422);
    CHECK(status("GET", "/api/reads?limit=-1", admin) == 422);
}

TEST_CASE_FIXTURE(ApiFixture, "users, profile edits and the last administrator")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    CHECK(status("POST", "/api/users", admin, {{"username", "crew"}, {"password", "xxxx"},
                                                {"start_location", {{"lat", 1}, {"lon", 1}}}}) == 422);
    CHECK(status("POST", "/api/users", admin, {{"username", "nobody"}, {"password", "xxxx"}}) == 422);

    const auto worker = login("crew", "crewpw");
    CHECK(status("PUT", "/api/me", worker, {{"role", "ADMIN"}}) == 422);
    auto me = ok("PUT", "/api/me", worker, {{"name", "Crew Lead"}, {"password", "newpass"}});
    CHECK(me["name"] == "Crew Lead");
    CHECK(engine->view()->workers.at("crew").name == "Crew Lead");
    CHECK(status("POST", "/api/login", "", {{"username", "crew"}, {"password", "crewpw"}}) == 401);
    login("crew", "newpass");

    auto users = ok("GET", "/api/users", admin)["users"];
    CHECK(users.size() == 2);
    ok("PUT", "/api/users/crew", admin, {{"capacity", 2}});
    CHECK(engine->view()->workers.at("crew").capacity == 2);
    CHECK(status("PUT", "/api/users/crew", admin, {{"capacity", 0}}) == 422);

    CHECK(status("DELETE", "/api/users/root", admin) == 422);
    CHECK(status("PUT", "/api/users/root", admin, {{"role", "WORKER"}}) == 422);
    ok("DELETE", "/api/users/crew", admin);
    CHECK(engine->view()->workers.empty());
    CHECK(status("GET", "/api/me", worker) == 401);
    CHECK(status("DELETE", "/api/users/crew", admin) == 404);
}

TEST_CASE_FIXTURE(ApiFixture, "zones and sensors CRUD")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    CHECK(status("POST", "/api/zones", admin, {{"zone_id", "z-1"}}) == 422);
    CHECK(status("DELETE", "/api/zones/z-1", admin) == 422);
    CHECK(status("GET", "/api/zones/z-9", admin) == 404);
    CHECK(ok("PUT", "/api/zones/z-1", admin, {{"name", "Mina East"}})["name"] == "Mina East");
    CHECK(status("PUT", "/api/zones/z-1", admin, {{"zone_id", "z-2"}}) == 422);

    auto s = ok("PUT", "/api/sensors/s-1", admin,
                {{"zone_id", "z-1"}, {"location", {{"lat", 21.5}, {"lon", 39.9}}}, {"depth_cm", 120.0},
                 {"full_offset_cm", 12.0}});
    CHECK(s["bin_id"] == "b-1");
    CHECK(s["depth_cm"] == 120.0);
    CHECK(ok("GET", "/api/sensors", admin)["sensors"].size() == 3);
    for (int k = 1; k <= 3; ++k) ok("DELETE", "/api/sensors/s-" + std::to_string(k), admin);
    CHECK(status("GET", "/api/sensors/s-1", admin) == 404);
    ok("DELETE", "/api/zones/z-1", admin);
    CHECK(ok("GET", "/api/zones", admin)["zones"].empty());
}

TEST_CASE_FIXTURE(ApiFixture, "thresholds")
{
    const auto admin = login("root", "rootpw");
    CHECK(ok("GET", "/api/thresholds", admin)["gas_alert_ppm"] == 300.0);
    auto t = ok("PUT", "/api/thresholds", admin, {{"gas_alert_ppm", 250.0}});
    CHECK(t["gas_alert_ppm"] == 250.0);
    CHECK(t["full_at"] == 0.9);
    CHECK(status("PUT", "/api/thresholds", admin, {{"full_at", 0.3}}) == 422);
    CHECK(ok("GET", "/api/health", "")["status"] == "ok");
}

TEST_CASE_FIXTURE(ApiFixture, "event stream pushes persisted changes and resumes by offset")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    const auto base = *engine->last_offset();
    {
        SseReader live(server->port(), "/api/events", auth(admin));
        for (int k = 0; k < 200 && live.status() == 0; ++k) std::this_thread::sleep_for(Millis{10});
        REQUIRE(live.status() == 200);
        engine->accept(reading("s-1", 1, at("2025-06-01T10:00:00Z"), 12.0));
        auto frames = live.wait_for(4);
        REQUIRE(frames.size() >= 2);
        CHECK(frames[0].event == "bin_state");
        CHECK(frames[0].id == base + 1);
        CHECK(frames[0].data["state"] == "FULL");
        CHECK(frames[1].event == "alert");
        CHECK(frames[1].data["kind"] == "FULL_BIN");
        // the same offset the polling view reports
        CHECK(frames.back().id == ok("GET", "/api/bins", admin)["as_of_offset"]);
        int bin_states = 0, alerts = 0;
        for (const auto& f : frames) {
            bin_states += f.event == "bin_state";
            alerts += f.event == "alert";
        }
        CHECK(bin_states == 1);
        CHECK(alerts == 1);
    }

    engine->accept(reading("s-2", 1, at("2025-06-01T10:01:00Z"), 40.0));
    engine->mark_emptied("b-1", std::nullopt, "root");
    const auto expected = engine->history(base + 1, *engine->last_offset() + 1);
    REQUIRE(!expected.empty());

    SseReader resumed(server->port(), "/api/events", {{"Authorization", "Bearer " + admin},
                                                      {"Last-Event-ID", std::to_string(base + 1)}});
    auto frames = resumed.wait_for(expected.size());
    REQUIRE(frames.size() == expected.size());
    for (std::size_t k = 0; k < frames.size(); ++k) {
        CHECK(frames[k].id > base + 1);
        CHECK(frames[k].id == expected[k].offset);
        CHECK(frames[k].event == expected[k].type);
        CHECK(frames[k].data == expected[k].data);
    }

    // token in the query string works for browsers' EventSource
    SseReader by_query(server->port(), "/api/events?token=" + admin + "&last_event_id=" + std::to_string(base), {});
    CHECK(by_query.wait_for(expected.size() + 1).size() >= expected.size() + 1);
}

TEST_CASE_FIXTURE(ApiFixture, "a lagging stream catches up from the log")
{
    const auto admin = login("root", "rootpw");
    provision(admin);
    server->stop();
    // rebuild with a tiny subscriber queue
    engine.reset();
    engine::EngineOptions eo;
    eo.data_dir = dir.path();
    eo.subscriber_queue = 2;
    engine = std::make_unique<engine::Engine>(eo);
    api::ApiOptions opt;
    opt.host = "127.0.0.1";
    opt.port = 0;
    opt.stream_poll = Millis{50};
    opt.keepalive = Millis{200};
    server = std::make_unique<api::ApiServer>(*engine, *creds, opt);
    server->start();

    const auto base = *engine->last_offset();
    SseReader sse(server->port(), "/api/events", auth(admin));
    for (int k = 0; k < 200 && sse.status() == 0; ++k) std::this_thread::sleep_for(Millis{10});
    for (std::uint64_t s = 1; s <= 60; ++s)
        engine->accept(reading("s-1", s, at("2025-06-01T10:00:00Z") + std::chrono::seconds(s), 100.0 - s));
    const auto expected = engine->history(base, *engine->last_offset() + 1);
    auto frames = sse.wait_for(expected.size());
    REQUIRE(frames.size() == expected.size());
    for (std::size_t k = 0; k < frames.size(); ++k) CHECK(frames[k].id == expected[k].offset);
}
