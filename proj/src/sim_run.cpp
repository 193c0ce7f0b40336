#include <httplib.h>
#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <deque>
#include <random>
#include <set>
#include <thread>

#include "tuhr/error.hpp"
#include "tuhr/net.hpp"
#include "tuhr/simulator.hpp"

namespace tuhr::sim {

namespace {

using Clock = std::chrono::steady_clock;

struct Outstanding {
    const Transmission* tx;
    std::size_t end = 0;  // byte offset in the connection's send buffer just past this line
    Clock::time_point sent{};
};

struct Link {
    net::Fd fd;
    std::string out;
    std::size_t written = 0;
    std::string in;
    std::deque<Outstanding> waiting;  // in send order; acks come back in the same order
};

class Runner {
public:
    Runner(const RunOptions& o, SimStats& stats) : opt_(o), stats_(stats)
    {
        links_.resize(static_cast<std::size_t>(std::max(1, o.connections)));
        for (auto& l : links_) l.fd = connect();
    }

    void exchange(const std::vector<Transmission>& batch)
    {
        for (const auto& tx : batch) {
            if (tx.lost) {
                ++stats_.records_sent;
                ++stats_.records_lost;
                continue;
            }
            auto& l = links_[tx.bin_index % links_.size()];
            l.out += telemetry::serialize_record(tx.env);
            l.out += '\n';
            l.waiting.push_back({&tx, l.out.size(), {}});
        }
        const auto deadline = Clock::now() + opt_.ack_timeout;
        for (;;) {
            std::vector<pollfd> fds;
            std::vector<std::size_t> which;
            for (std::size_t k = 0; k < links_.size(); ++k) {
                auto& l = links_[k];
                if (l.waiting.empty()) continue;
                short ev = POLLIN;
                if (l.written < l.out.size()) ev |= POLLOUT;
                fds.push_back({l.fd.get(), ev, 0});
                which.push_back(k);
            }
            if (fds.empty()) break;
            const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
            if (left <= 0) {
                for (auto k : which) recover(links_[k]);
                continue;
            }
            const int r = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left, 1000)));
            if (r < 0 && errno != EINTR) throw Error("IO_FAILURE", "poll failed");
            for (std::size_t i = 0; i < fds.size() && r > 0; ++i) {
                auto& l = links_[which[i]];
                bool ok = true;
                if (fds[i].revents & POLLOUT) ok = flush(l);
                if (ok && (fds[i].revents & (POLLIN | POLLHUP | POLLERR))) ok = receive(l);
                if (!ok) recover(l);
            }
        }
        for (auto& l : links_) {
            l.out.clear();
            l.written = 0;
        }
    }

    std::vector<double> latencies_ms;

private:
    net::Fd connect()
    {
        const auto until = Clock::now() + std::chrono::duration<double>(opt_.retry_window_s);
        for (;;) {
            try {
                auto fd = net::connect_tcp(opt_.host, opt_.port);
                net::set_nonblocking(fd.get());
                return fd;
            } catch (const Error&) {
                if (Clock::now() >= until) throw;
                std::this_thread::sleep_for(Millis{100});
            }
        }
    }

    bool flush(Link& l)
    {
        while (l.written < l.out.size()) {
            const auto n = ::send(l.fd.get(), l.out.data() + l.written, l.out.size() - l.written, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                return errno == EAGAIN || errno == EWOULDBLOCK;
            }
            l.written += static_cast<std::size_t>(n);
        }
        const auto now = Clock::now();
        for (auto& w : l.waiting)
            if (w.sent == Clock::time_point{} && w.end <= l.written) w.sent = now;
        return true;
    }

    bool receive(Link& l)
    {
        char buf[65536];
        const auto n = ::recv(l.fd.get(), buf, sizeof buf, 0);
        if (n == 0) return false;
        if (n < 0) return errno == EAGAIN || errno == EINTR;
        l.in.append(buf, static_cast<std::size_t>(n));
        const auto now = Clock::now();
        std::size_t start = 0;
        for (;;) {
            const auto nl = l.in.find('\n', start);
            if (nl == std::string::npos) break;
            const auto ack = telemetry::parse_ack(std::string_view(l.in).substr(start, nl - start));
            start = nl + 1;
            if (!ack || l.waiting.empty()) throw Error("IO_FAILURE", "unexpected ack from server");
            auto w = l.waiting.front();
            l.waiting.pop_front();
            if (ack->seq && *ack->seq != w.tx->env.seq) throw Error("IO_FAILURE", "ack out of order");
            ++stats_.records_sent;
            if (ack->ok) {
                ++stats_.acks_ok;
                if (ack->dup) ++stats_.acks_dup;
            } else {
                ++stats_.acks_err;
            }
            const auto sent = w.sent == Clock::time_point{} ? now : w.sent;
            latencies_ms.push_back(std::chrono::duration<double, std::milli>(now - sent).count());
        }
        l.in.erase(0, start);
        return true;
    }

    // Reconnects and queues every unacknowledged record again; the server's
    // dedupe absorbs whatever had already landed.
    void recover(Link& l)
    {
        ++stats_.reconnects;
        l.fd = connect();
        l.in.clear();
        l.out.clear();
        l.written = 0;
        for (auto& w : l.waiting) {
            l.out += telemetry::serialize_record(w.tx->env);
            l.out += '\n';
            w.end = l.out.size();
            w.sent = {};
        }
    }

    const RunOptions& opt_;
    SimStats& stats_;
    std::vector<Link> links_;
};

}  // namespace

SimStats run(const ScenarioConfig& scenario, const RunOptions& options)
{
    SimStats stats;
    Simulation sim(scenario);
    Runner runner(options, stats);
    const auto start = Clock::now();
    const double interval = scenario.report_interval_s;

    std::uint64_t reports = 0;
    for (std::uint64_t k = 0; static_cast<double>(k) * interval < scenario.duration_s; ++k) {
        const double t = static_cast<double>(k) * interval;
        auto batch = sim.step(interval);
        if (scenario.time_scale > 0.0)
            std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                      std::chrono::duration<double>(t * scenario.time_scale)));
        runner.exchange(batch);
        ++reports;
    }
    runner.exchange(sim.drain());
    stats.records = reports * scenario.bins.size();
    stats.final_fill = sim.reported_fill();
    stats.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
    auto& lat = runner.latencies_ms;
    if (!lat.empty()) {
        std::sort(lat.begin(), lat.end());
        stats.max_ack_latency_ms = lat.back();
        stats.p99_ack_latency_ms = lat[std::min(lat.size() - 1, static_cast<std::size_t>(0.99 * lat.size()))];
    }
    return stats;
}

namespace {

struct ApiSession {
    httplib::Client cli;
    httplib::Headers headers;

    ApiSession(const ProvisionOptions& o) : cli(o.host, o.port)
    {
        cli.set_connection_timeout(5, 0);
        cli.set_read_timeout(30, 0);
        Json body{{"username", o.username}, {"password", o.password}};
        auto r = cli.Post("/api/login", body.dump(), "application/json");
        if (!r) throw Error("CONNECTION_REFUSED", "cannot reach the API at " + o.host + ":" + std::to_string(o.port));
        if (r->status != 200) throw Error("UNAUTHORIZED", "login as " + o.username + " failed");
        headers = {{"Authorization", "Bearer " + Json::parse(r->body).at("token").get<std::string>()}};
    }

    // POST, and PUT to the item path when it already exists.
    void upsert(const std::string& collection, const std::string& id, const Json& body)
    {
        auto r = cli.Post(collection, headers, body.dump(), "application/json");
        if (!r) throw Error("CONNECTION_REFUSED", "lost the API connection");
        if (r->status == 201) return;
        auto err = Json::parse(r->body, nullptr, false);
        const auto code = err.is_object() ? err.value("error", std::string{}) : std::string{};
        if (code == "DUPLICATE") {
            auto put = cli.Put(collection + "/" + id, headers, body.dump(), "application/json");
            if (!put) throw Error("CONNECTION_REFUSED", "lost the API connection");
            if (put->status == 200) return;
            err = Json::parse(put->body, nullptr, false);
        }
        const auto message = err.is_object() ? err.value("message", r->body) : r->body;
        throw Error(err.is_object() ? err.value("error", std::string("INVALID")) : "INVALID",
                    collection + "/" + id + ": " + message);
    }
};

std::string random_password()
{
    std::random_device rd;
    static const char hex[] = "0123456789abcdef";
    std::string s;
    for (int k = 0; k < 24; ++k) s += hex[rd() % 16];
    return s;
}

}  // namespace

void provision(const ScenarioConfig& scenario, const ProvisionOptions& options)
{
    ApiSession api(options);
    std::vector<Zone> zones = scenario.zones;
    if (zones.empty()) {
        std::set<std::string> ids;
        for (const auto& b : scenario.bins) ids.insert(b.config.zone_id);
        for (const auto& id : ids) zones.push_back(Zone{id, id, ""});
    }
    for (const auto& z : zones)
        api.upsert("/api/zones", z.zone_id, Json{{"zone_id", z.zone_id}, {"name", z.name}, {"description", z.description}});
    for (const auto& b : scenario.bins) api.upsert("/api/sensors", b.config.sensor_id, Json(b.config));
    for (const auto& w : scenario.workers) {
        Json body{{"username", w.worker_id},
                  {"name", w.name},
                  {"role", "WORKER"},
                  {"start_location", w.start_location},
                  {"capacity", w.capacity}};
        auto r = api.cli.Get("/api/users/" + w.worker_id, api.headers);
        if (r && r->status == 200) {
            auto put = api.cli.Put("/api/users/" + w.worker_id, api.headers, body.dump(), "application/json");
            if (!put || put->status != 200) throw Error("INVALID", "cannot update worker " + w.worker_id);
            continue;
        }
        body["password"] = random_password();
        api.upsert("/api/users", w.worker_id, body);
    }
}

}  // namespace tuhr::sim
