#include "tuhr/api.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <deque>

#include "tuhr/codec.hpp"
#include "tuhr/error.hpp"

namespace tuhr::api {

using httplib::Request;
using httplib::Response;
using auth::Principal;

namespace {

Json offset_json(const std::optional<std::uint64_t>& o) { return o ? Json(*o) : Json(nullptr); }

void send_json(Response& res, const Json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, const std::string& code, const std::string& message)
{
    send_json(res, Json{{"error", code}, {"message", message}}, status_for(code));
}

Json body_of(const Request& req)
{
    if (req.body.empty()) return Json::object();
    auto j = Json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error("INVALID", "request body must be a JSON object");
    return j;
}

std::optional<std::string> bearer(const Request& req)
{
    const auto h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() > prefix.size() && std::string_view(h).substr(0, prefix.size()) == prefix)
        return h.substr(prefix.size());
    if (req.has_param("token")) return req.get_param_value("token");
    return std::nullopt;
}

std::uint64_t parse_uint(const std::string& s, const char* what)
{
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw Error("INVALID", std::string(what) + " must be an integer");
    return v;
}

// Path and body ids must agree when both are present.
void match_id(Json& body, const char* key, const std::string& id)
{
    if (body.contains(key) && body.at(key) != id) throw Error("INVALID", std::string(key) + " does not match the path");
    body[key] = id;
}

Json read_json(const engine::RawRead& r)
{
    return Json{{"offset", r.offset},
                {"bin_id", r.bin_id},
                {"sensor_id", r.reading.sensor_id},
                {"seq", r.reading.seq},
                {"ts", format_iso8601(r.reading.ts)},
                {"dist_cm", r.reading.distance_cm},
                {"gas_ppm", r.reading.gas_ppm},
                {"batt_pct", r.reading.battery_pct}};
}

Json user_json(const std::string& username, const std::optional<auth::Credential>& cred,
               const WorkerProfile* profile)
{
    Json j{{"username", username}};
    j["name"] = cred ? cred->name : profile->name;
    j["role"] = to_string(cred ? cred->role : profile->role);
    j["can_login"] = cred.has_value();
    if (profile)
        j["worker"] = Json{{"start_location", profile->start_location}, {"capacity", profile->capacity}};
    else
        j["worker"] = nullptr;
    return j;
}

std::string sse_frame(const store::Notification& n)
{
    return "id: " + std::to_string(n.offset) + "\nevent: " + n.type + "\ndata: " + n.data.dump() + "\n\n";
}

// State of one open event stream.
struct Stream {
    std::shared_ptr<engine::Subscription> sub;
    std::optional<std::uint64_t> cursor;  // last offset fully delivered
    std::deque<store::Notification> pending;
    std::chrono::steady_clock::time_point last_write = std::chrono::steady_clock::now();
    bool greeted = false;
};

}  // namespace

int status_for(const std::string& code)
{
    if (code == "NOT_FOUND") return 404;
    if (code == "STALE_TIMESTAMP") return 409;
    if (code == "INVALID" || code == "DUPLICATE" || code == "IN_USE") return 422;
    if (code == "UNAUTHORIZED") return 401;
    if (code == "FORBIDDEN") return 403;
    if (code == "IO_FAILURE") return 503;
    return 500;
}

ApiServer::ApiServer(engine::Engine& engine, auth::CredentialStore& credentials, ApiOptions options)
    : engine_(engine), credentials_(credentials), options_(std::move(options)),
      server_(std::make_unique<httplib::Server>())
{
    install();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::start()
{
    const auto where = "port " + std::to_string(options_.port);
    if (options_.port == 0) {
        const int p = server_->bind_to_any_port(options_.host);
        if (p <= 0) throw Error("IO_FAILURE", "cannot bind an HTTP port");
        port_ = static_cast<std::uint16_t>(p);
    } else {
        if (!server_->bind_to_port(options_.host, options_.port))
            throw Error("IO_FAILURE", "cannot bind " + where + ": address in use or not permitted");
        port_ = options_.port;
    }
    stopping_ = false;
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void ApiServer::stop()
{
    if (!thread_.joinable()) return;
    stopping_ = true;
    server_->stop();
    thread_.join();
}

void ApiServer::install()
{
    auto& svr = *server_;
    const auto threads = options_.threads;
    svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    svr.set_keep_alive_max_count(1000);

    using Handler = std::function<void(const Request&, Response&, const Principal&)>;
    auto add = [this](const std::string& method, const std::string& pattern, const std::string& sample, Access access,
                      Handler h) {
        routes_.push_back({method, pattern, sample, access});
        auto wrapped = [this, access, h = std::move(h)](const Request& req, Response& res) {
            try {
                Principal who;
                if (access != Access::Public) {
                    auto token = bearer(req);
                    auto p = token ? credentials_.resolve(*token) : std::nullopt;
                    if (!p) return send_error(res, "UNAUTHORIZED", "missing or expired token");
                    if (access == Access::Admin && p->role != Role::Admin)
                        return send_error(res, "FORBIDDEN", "administrator role required");
                    who = *p;
                }
                h(req, res, who);
            } catch (const Error& e) {
                send_error(res, e.code(), e.what());
            } catch (const Json::exception& e) {
                send_error(res, "INVALID", e.what());
            } catch (const std::exception& e) {
                send_error(res, "INTERNAL", e.what());
            }
        };
        if (method == "GET") server_->Get(pattern, wrapped);
        else if (method == "POST") server_->Post(pattern, wrapped);
        else if (method == "PUT") server_->Put(pattern, wrapped);
        else if (method == "DELETE") server_->Delete(pattern, wrapped);
    };

    svr.set_post_routing_handler([](const Request&, Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
    });
    svr.Options(R"(/api/.*)", [](const Request&, Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type, Last-Event-ID");
        res.status = 204;
    });
    svr.set_error_handler([](const Request& req, Response& res) {
        if (res.body.empty() && req.path.rfind("/api/", 0) == 0)
            send_json(res, Json{{"error", "NOT_FOUND"}, {"message", "no such endpoint"}}, res.status);
    });

    // sessions

    add("POST", "/api/login", "/api/login", Access::Public, [this](const Request& req, Response& res, const Principal&) {
        const auto body = body_of(req);
        const auto user = body.value("username", std::string{});
        const auto token = credentials_.login(user, body.value("password", std::string{}));
        if (!token) return send_error(res, "UNAUTHORIZED", "invalid username or password");
        const auto cred = credentials_.find(user);
        send_json(res, Json{{"token", *token}, {"username", user}, {"role", to_string(cred->role)}});
    });
    add("POST", "/api/logout", "/api/logout", Access::Any, [this](const Request& req, Response& res, const Principal&) {
        credentials_.logout(*bearer(req));
        send_json(res, Json{{"ok", true}});
    });
    add("GET", "/api/me", "/api/me", Access::Any, [this](const Request&, Response& res, const Principal& who) {
        const auto v = engine_.view();
        auto it = v->workers.find(who.username);
        send_json(res, user_json(who.username, credentials_.find(who.username),
                                 it == v->workers.end() ? nullptr : &it->second));
    });
    add("PUT", "/api/me", "/api/me", Access::Any, [this](const Request& req, Response& res, const Principal& who) {
        const auto body = body_of(req);
        for (const auto& [k, _] : body.items())
            if (k != "name" && k != "password") throw Error("INVALID", "only name and password can be changed");
        std::optional<std::string> name, password;
        if (body.contains("name")) name = body.at("name").get<std::string>();
        if (body.contains("password")) password = body.at("password").get<std::string>();
        if (name && name->empty()) throw Error("INVALID", "name must not be empty");
        credentials_.update(who.username, name, password, std::nullopt);
        const auto v = engine_.view();
        if (auto it = v->workers.find(who.username); it != v->workers.end() && name && *name != it->second.name) {
            auto w = it->second;
            w.name = *name;
            engine_.upsert_worker(w);
        }
        const auto after = engine_.view();
        auto it = after->workers.find(who.username);
        send_json(res, user_json(who.username, credentials_.find(who.username),
                                 it == after->workers.end() ? nullptr : &it->second));
    });

    // bins, reads, alerts, plan

    add("GET", "/api/bins", "/api/bins", Access::Any, [this](const Request&, Response& res, const Principal&) {
        const auto v = engine_.view();
        Json bins = Json::array();
        for (const auto& [_, b] : v->bins) bins.push_back(store::bin_view(b));
        send_json(res, Json{{"as_of_offset", offset_json(v->as_of_offset)}, {"bins", std::move(bins)}});
    });
    add("GET", "/api/bins/:id", "/api/bins/b-1", Access::Any, [this](const Request& req, Response& res, const Principal&) {
        const auto v = engine_.view();
        const auto& id = req.path_params.at("id");
        auto it = v->bins.find(id);
        if (it == v->bins.end()) throw Error("NOT_FOUND", "no bin " + id);
        auto j = store::bin_view(it->second);
        Json alerts = Json::array();
        for (const auto& a : v->open_alerts_for(id)) alerts.push_back(store::to_json(a));
        j["alerts"] = std::move(alerts);
        j["as_of_offset"] = offset_json(v->as_of_offset);
        send_json(res, j);
    });
    add("POST", "/api/bins/:id/empty", "/api/bins/b-1/empty", Access::Any,
        [this](const Request& req, Response& res, const Principal& who) {
            const auto body = body_of(req);
            std::optional<Timestamp> ts;
            if (body.contains("ts")) ts = timestamp_from_json(body.at("ts"));
            const auto rec = engine_.mark_emptied(req.path_params.at("id"), ts, who.username);
            auto j = store::bin_view(rec);
            j["as_of_offset"] = offset_json(engine_.last_offset());
            send_json(res, j);
        });
    add("GET", "/api/reads", "/api/reads", Access::Any, [this](const Request& req, Response& res, const Principal&) {
        engine::ReadsQuery q;
        if (req.has_param("sensor")) q.sensor_id = req.get_param_value("sensor");
        if (req.has_param("bin")) q.bin_id = req.get_param_value("bin");
        if (req.has_param("since")) {
            q.since = parse_iso8601(req.get_param_value("since"));
            if (!q.since) throw Error("INVALID", "since must be an ISO 8601 UTC timestamp");
        }
        if (req.has_param("limit")) {
            q.limit = parse_uint(req.get_param_value("limit"), "limit");
            if (q.limit == 0) throw Error("INVALID", "limit must be positive");
            q.limit = std::min<std::size_t>(q.limit, 1000);
        }
        Json reads = Json::array();
        for (const auto& r : engine_.reads(q)) reads.push_back(read_json(r));
        send_json(res, Json{{"reads", std::move(reads)}});
    });
    add("GET", "/api/alerts", "/api/alerts", Access::Any, [this](const Request& req, Response& res, const Principal&) {
        std::optional<bool> active;
        if (req.has_param("active")) {
            const auto a = req.get_param_value("active");
            if (a != "true" && a != "false") throw Error("INVALID", "active must be true or false");
            active = a == "true";
        }
        const auto v = engine_.view();
        std::vector<const alerting::AlertEvent*> list;
        for (const auto& [_, a] : v->alerts)
            if (!active || a.open() == *active) list.push_back(&a);
        std::sort(list.begin(), list.end(), [](auto* x, auto* y) {
            return std::tie(x->raised_ts, x->alert_id) > std::tie(y->raised_ts, y->alert_id);
        });
        Json alerts = Json::array();
        for (auto* a : list) alerts.push_back(store::to_json(*a));
        send_json(res, Json{{"as_of_offset", offset_json(v->as_of_offset)}, {"alerts", std::move(alerts)}});
    });
    add("GET", "/api/plan", "/api/plan", Access::Any, [this](const Request&, Response& res, const Principal&) {
        const auto v = engine_.view();
        auto j = store::plan_view(*v);
        j["as_of_offset"] = offset_json(v->as_of_offset);
        send_json(res, j);
    });
    add("POST", "/api/plan/recompute", "/api/plan/recompute", Access::Admin,
        [this](const Request&, Response& res, const Principal&) {
            engine_.recompute_plan();
            const auto v = engine_.view();
            auto j = store::plan_view(*v);
            j["as_of_offset"] = offset_json(v->as_of_offset);
            send_json(res, j);
        });

    // zones

    add("GET", "/api/zones", "/api/zones", Access::Admin, [this](const Request&, Response& res, const Principal&) {
        Json zones = Json::array();
        for (const auto& [_, z] : engine_.view()->zones) zones.push_back(z);
        send_json(res, Json{{"zones", std::move(zones)}});
    });
    add("POST", "/api/zones", "/api/zones", Access::Admin, [this](const Request& req, Response& res, const Principal&) {
        auto z = body_of(req).get<Zone>();
        engine_.create_zone(z);
        send_json(res, engine_.view()->zones.at(z.zone_id), 201);
    });
    add("GET", "/api/zones/:id", "/api/zones/z-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            const auto v = engine_.view();
            const auto& id = req.path_params.at("id");
            auto it = v->zones.find(id);
            if (it == v->zones.end()) throw Error("NOT_FOUND", "no zone " + id);
            send_json(res, it->second);
        });
    add("PUT", "/api/zones/:id", "/api/zones/z-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            auto body = body_of(req);
            match_id(body, "zone_id", req.path_params.at("id"));
            auto z = body.get<Zone>();
            engine_.update_zone(z);
            send_json(res, engine_.view()->zones.at(z.zone_id));
        });
    add("DELETE", "/api/zones/:id", "/api/zones/z-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            engine_.delete_zone(req.path_params.at("id"));
            send_json(res, Json{{"ok", true}});
        });

    // sensors (one per bin; the sensor id names both)

    auto sensor_json = [](const BinRecord& b) {
        Json j = b.config;
        j["state"] = to_string(b.state);
        j["last_reading_ts"] = timestamp_to_json(b.last_reading_ts);
        return j;
    };
    add("GET", "/api/sensors", "/api/sensors", Access::Admin,
        [this, sensor_json](const Request&, Response& res, const Principal&) {
            const auto v = engine_.view();
            Json list = Json::array();
            for (const auto& [sid, bin] : v->sensor_to_bin) list.push_back(sensor_json(v->bins.at(bin)));
            send_json(res, Json{{"sensors", std::move(list)}});
        });
    add("POST", "/api/sensors", "/api/sensors", Access::Admin,
        [this, sensor_json](const Request& req, Response& res, const Principal&) {
            auto c = body_of(req).get<BinConfig>();
            engine_.create_sensor(c);
            send_json(res, sensor_json(*engine_.view()->bin_by_sensor(c.sensor_id)), 201);
        });
    add("GET", "/api/sensors/:id", "/api/sensors/s-1", Access::Admin,
        [this, sensor_json](const Request& req, Response& res, const Principal&) {
            const auto v = engine_.view();
            const auto& id = req.path_params.at("id");
            const auto* b = v->bin_by_sensor(id);
            if (!b) throw Error("NOT_FOUND", "no sensor " + id);
            send_json(res, sensor_json(*b));
        });
    add("PUT", "/api/sensors/:id", "/api/sensors/s-1", Access::Admin,
        [this, sensor_json](const Request& req, Response& res, const Principal&) {
            auto body = body_of(req);
            const auto& id = req.path_params.at("id");
            match_id(body, "sensor_id", id);
            const auto v = engine_.view();
            const auto* current = v->bin_by_sensor(id);
            if (!current) throw Error("NOT_FOUND", "no sensor " + id);
            if (!body.contains("bin_id")) body["bin_id"] = current->config.bin_id;
            auto c = body.get<BinConfig>();
            engine_.update_sensor(c);
            send_json(res, sensor_json(*engine_.view()->bin_by_sensor(id)));
        });
    add("DELETE", "/api/sensors/:id", "/api/sensors/s-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            engine_.delete_sensor(req.path_params.at("id"));
            send_json(res, Json{{"ok", true}});
        });

    // users: a credential plus, for field staff, a worker profile

    add("GET", "/api/users", "/api/users", Access::Admin, [this](const Request&, Response& res, const Principal&) {
        const auto v = engine_.view();
        std::map<std::string, Json> users;
        for (const auto& c : credentials_.list()) {
            auto it = v->workers.find(c.username);
            users[c.username] = user_json(c.username, c, it == v->workers.end() ? nullptr : &it->second);
        }
        for (const auto& [id, w] : v->workers)
            if (!users.count(id)) users[id] = user_json(id, std::nullopt, &w);
        Json list = Json::array();
        for (auto& [_, u] : users) list.push_back(std::move(u));
        send_json(res, Json{{"users", std::move(list)}});
    });
    add("POST", "/api/users", "/api/users", Access::Admin, [this](const Request& req, Response& res, const Principal&) {
        const auto body = body_of(req);
        const auto username = body.at("username").get<std::string>();
        const auto password = body.at("password").get<std::string>();
        const auto name = body.value("name", username);
        const auto role = parse_role(body.value("role", std::string{"WORKER"}));
        if (!role) throw Error("INVALID", "role must be WORKER or ADMIN");
        std::optional<WorkerProfile> profile;
        if (body.contains("start_location")) {
            profile = WorkerProfile{username, name, body.at("start_location").get<GeoPoint>(),
                                    body.value("capacity", 5), *role};
            profile->validate();
        } else if (*role == Role::Worker) {
            throw Error("INVALID", "workers need a start_location");
        }
        if (engine_.view()->workers.count(username)) throw Error("DUPLICATE", "user " + username + " already exists");
        credentials_.create(username, name, password, *role);
        if (profile) {
            try {
                engine_.upsert_worker(*profile);
            } catch (...) {
                credentials_.remove(username);
                throw;
            }
        }
        const auto v = engine_.view();
        auto it = v->workers.find(username);
        send_json(res, user_json(username, credentials_.find(username), it == v->workers.end() ? nullptr : &it->second),
                  201);
    });
    add("GET", "/api/users/:id", "/api/users/w-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            const auto& id = req.path_params.at("id");
            const auto v = engine_.view();
            auto it = v->workers.find(id);
            auto cred = credentials_.find(id);
            if (!cred && it == v->workers.end()) throw Error("NOT_FOUND", "no user " + id);
            send_json(res, user_json(id, cred, it == v->workers.end() ? nullptr : &it->second));
        });
    add("PUT", "/api/users/:id", "/api/users/w-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            auto body = body_of(req);
            const auto& id = req.path_params.at("id");
            match_id(body, "username", id);
            const auto v = engine_.view();
            auto it = v->workers.find(id);
            auto cred = credentials_.find(id);
            if (!cred && it == v->workers.end()) throw Error("NOT_FOUND", "no user " + id);

            std::optional<std::string> name, password;
            std::optional<Role> role;
            if (body.contains("name")) name = body.at("name").get<std::string>();
            if (body.contains("password")) password = body.at("password").get<std::string>();
            if (body.contains("role")) {
                role = parse_role(body.at("role").get<std::string>());
                if (!role) throw Error("INVALID", "role must be WORKER or ADMIN");
            }
            std::optional<WorkerProfile> profile;
            if (it != v->workers.end()) profile = it->second;
            if (body.contains("start_location") || body.contains("capacity")) {
                if (!profile) {
                    if (!body.contains("start_location")) throw Error("INVALID", "start_location is required");
                    profile = WorkerProfile{id, cred ? cred->name : id, {}, 5, cred ? cred->role : Role::Worker};
                }
                if (body.contains("start_location")) profile->start_location = body.at("start_location").get<GeoPoint>();
                if (body.contains("capacity")) profile->capacity = body.at("capacity").get<int>();
            }
            if (profile) {
                if (name) profile->name = *name;
                if (role) profile->role = *role;
                profile->validate();
            }
            if (cred) credentials_.update(id, name, password, role);
            if (profile && (it == v->workers.end() || !(*profile == it->second))) engine_.upsert_worker(*profile);
            const auto after = engine_.view();
            auto w = after->workers.find(id);
            send_json(res, user_json(id, credentials_.find(id), w == after->workers.end() ? nullptr : &w->second));
        });
    add("DELETE", "/api/users/:id", "/api/users/w-1", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            const auto& id = req.path_params.at("id");
            const bool has_profile = engine_.view()->workers.count(id) > 0;
            const bool has_cred = credentials_.find(id).has_value();
            if (!has_profile && !has_cred) throw Error("NOT_FOUND", "no user " + id);
            if (has_cred) credentials_.remove(id);
            if (has_profile) engine_.delete_worker(id);
            send_json(res, Json{{"ok", true}});
        });

    // thresholds, health

    add("GET", "/api/thresholds", "/api/thresholds", Access::Admin,
        [this](const Request&, Response& res, const Principal&) { send_json(res, engine_.view()->thresholds); });
    add("PUT", "/api/thresholds", "/api/thresholds", Access::Admin,
        [this](const Request& req, Response& res, const Principal&) {
            Json merged = engine_.view()->thresholds;
            merged.update(body_of(req));
            engine_.set_thresholds(merged.get<Thresholds>());
            send_json(res, engine_.view()->thresholds);
        });
    add("GET", "/api/health", "/api/health", Access::Public, [this](const Request&, Response& res, const Principal&) {
        const auto v = engine_.view();
        send_json(res, Json{{"status", "ok"}, {"as_of_offset", offset_json(v->as_of_offset)}, {"bins", v->bins.size()}});
    });

    // live event stream

    add("GET", "/api/events", "/api/events", Access::Any, [this](const Request& req, Response& res, const Principal&) {
        std::optional<std::uint64_t> last;
        if (req.has_header("Last-Event-ID"))
            last = parse_uint(req.get_header_value("Last-Event-ID"), "Last-Event-ID");
        else if (req.has_param("last_event_id"))
            last = parse_uint(req.get_param_value("last_event_id"), "last_event_id");

        auto st = std::make_shared<Stream>();
        st->sub = engine_.subscribe();
        const auto start = st->sub->start_offset();
        if (last) {
            auto missed = engine_.history(last, start);
            st->pending.assign(std::make_move_iterator(missed.begin()), std::make_move_iterator(missed.end()));
            st->cursor = std::min(*last, start == 0 ? 0 : start - 1);
        } else if (start > 0) {
            st->cursor = start - 1;
        }

        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Accel-Buffering", "no");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, st](std::size_t, httplib::DataSink& sink) {
                if (stopping_) return false;
                std::string out;
                if (!st->greeted) {
                    out = "retry: 2000\n: connected\n\n";
                    st->greeted = true;
                }
                auto emit = [&](const store::Notification& n) {
                    out += sse_frame(n);
                    st->cursor = n.offset;
                };
                if (!st->pending.empty()) {
                    for (int k = 0; k < 512 && !st->pending.empty(); ++k) {
                        emit(st->pending.front());
                        st->pending.pop_front();
                    }
                } else {
                    auto got = st->sub->wait(options_.stream_poll);
                    for (const auto& n : got) emit(n);
                    if (st->sub->lagged()) {
                        // fell behind the live queue: continue from the log
                        st->sub = engine_.subscribe();
                        auto missed = engine_.history(st->cursor, st->sub->start_offset());
                        st->pending.assign(std::make_move_iterator(missed.begin()),
                                           std::make_move_iterator(missed.end()));
                    }
                }
                const auto now = std::chrono::steady_clock::now();
                if (out.empty() && now - st->last_write >= options_.keepalive) out = ": keepalive\n\n";
                if (out.empty()) return true;
                st->last_write = now;
                return sink.write(out.data(), out.size());
            },
            [st](bool) { st->sub->close(); });
    });

    if (!options_.static_dir.empty()) svr.set_mount_point("/", options_.static_dir.string());
}

}  // namespace tuhr::api
