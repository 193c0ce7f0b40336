#include <signal.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "cli.hpp"
#include "tuhr/api.hpp"
#include "tuhr/auth.hpp"
#include "tuhr/engine.hpp"
#include "tuhr/error.hpp"
#include "tuhr/telemetry_server.hpp"

namespace tuhr::cli {

namespace fs = std::filesystem;

std::optional<std::string> env(const char* name)
{
    const char* v = std::getenv((std::string("TUHR_") + name).c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

namespace {

int env_port(const char* name)
{
    const auto text = *env(name);
    try {
        std::size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error("INVALID", std::string("TUHR_") + name + " is not a port number: " + text);
}

Json load_config_file(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) throw Error("INVALID", "cannot read config file " + file.string());
    auto j = Json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error("INVALID", file.string() + " is not a JSON object");
    static const std::set<std::string> known = {"data_dir",     "telemetry_port",  "api_port",      "host",
                                                "credentials_file", "log_level",   "fsync",         "offline_timeout_s",
                                                "offline_clock", "static_dir",     "snapshot_every", "admin_user",
                                                "thresholds"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw Error("INVALID", file.string() + ": unknown key " + k);
    return j;
}

template <typename T>
void take(T& out, const Json& cfg, const char* key)
{
    if (!cfg.contains(key)) return;
    try {
        out = cfg.at(key).get<T>();
    } catch (const Json::exception&) {
        throw Error("INVALID", std::string("config: bad value for ") + key);
    }
}

void check_port(int p, const char* what)
{
    if (p < 0 || p > 65535) throw Error("INVALID", std::string(what) + " out of range: " + std::to_string(p));
}

std::string random_password()
{
    std::random_device rd;
    static const char alphabet[] = "abcdefghijkmnpqrstuvwxyz23456789";
    std::string s;
    for (int k = 0; k < 16; ++k) s += alphabet[rd() % (sizeof alphabet - 1)];
    return s;
}

}  // namespace

ServeConfig resolve_serve_config(const ServeFlags& f)
{
    ServeConfig c;
    const auto config_path = f.config ? f.config : env("CONFIG");
    if (config_path) {
        const auto j = load_config_file(*config_path);
        std::string s;
        if (j.contains("data_dir")) take(s, j, "data_dir"), c.data_dir = s;
        take(c.telemetry_port, j, "telemetry_port");
        take(c.api_port, j, "api_port");
        take(c.host, j, "host");
        if (j.contains("credentials_file")) take(s, j, "credentials_file"), c.credentials_file = s;
        take(c.log_level, j, "log_level");
        take(c.fsync, j, "fsync");
        take(c.offline_timeout_s, j, "offline_timeout_s");
        take(c.offline_clock, j, "offline_clock");
        if (j.contains("static_dir")) take(s, j, "static_dir"), c.static_dir = s;
        take(c.snapshot_every, j, "snapshot_every");
        take(c.admin_user, j, "admin_user");
        if (j.contains("thresholds")) {
            if (!j["thresholds"].is_object()) throw Error("INVALID", "config: thresholds must be an object");
            c.thresholds = j["thresholds"];
        }
    }

    if (auto v = env("DATA_DIR")) c.data_dir = *v;
    if (env("TELEMETRY_PORT")) c.telemetry_port = env_port("TELEMETRY_PORT");
    if (env("API_PORT")) c.api_port = env_port("API_PORT");
    if (auto v = env("CREDENTIALS_FILE")) c.credentials_file = *v;
    if (auto v = env("ADMIN_USER")) c.admin_user = *v;
    if (auto v = env("ADMIN_PASSWORD")) c.admin_password = *v;

    if (f.data_dir) c.data_dir = *f.data_dir;
    if (f.telemetry_port) c.telemetry_port = *f.telemetry_port;
    if (f.api_port) c.api_port = *f.api_port;
    if (f.host) c.host = *f.host;
    if (f.credentials_file) c.credentials_file = *f.credentials_file;
    if (f.log_level) c.log_level = *f.log_level;
    if (f.fsync) c.fsync = *f.fsync;
    if (f.offline_timeout_s) c.offline_timeout_s = *f.offline_timeout_s;
    if (f.offline_clock) c.offline_clock = *f.offline_clock;
    if (f.static_dir) c.static_dir = *f.static_dir;
    if (f.snapshot_every) c.snapshot_every = *f.snapshot_every;
    if (f.admin_user) c.admin_user = *f.admin_user;
    if (f.admin_password) c.admin_password = *f.admin_password;
    if (f.empty_below) c.thresholds["empty_below"] = *f.empty_below;
    if (f.almost_full_at) c.thresholds["almost_full_at"] = *f.almost_full_at;
    if (f.full_at) c.thresholds["full_at"] = *f.full_at;
    if (f.hysteresis) c.thresholds["hysteresis"] = *f.hysteresis;
    if (f.gas_alert_ppm) c.thresholds["gas_alert_ppm"] = *f.gas_alert_ppm;

    check_port(c.telemetry_port, "telemetry port");
    check_port(c.api_port, "api port");
    if (c.telemetry_port == c.api_port && c.api_port != 0)
        throw Error("INVALID", "telemetry and api ports must differ (both " + std::to_string(c.api_port) + ")");
    if (c.offline_clock != "wall" && c.offline_clock != "event")
        throw Error("INVALID", "offline clock must be wall or event, not " + c.offline_clock);
    if (!(c.offline_timeout_s >= 0.0)) throw Error("INVALID", "offline timeout must be >= 0");
    if (spdlog::level::from_str(c.log_level) == spdlog::level::off && c.log_level != "off")
        throw Error("INVALID", "unknown log level " + c.log_level);
    static const std::set<std::string> threshold_keys = {"empty_below", "almost_full_at", "full_at", "hysteresis",
                                                         "gas_alert_ppm"};
    for (const auto& [k, v] : c.thresholds.items()) {
        if (!threshold_keys.count(k)) throw Error("INVALID", "unknown threshold " + k);
        if (!v.is_number()) throw Error("INVALID", "threshold " + k + " must be a number");
    }
    return c;
}

namespace {

// Periodic offline detection until stopped.
class Scanner {
public:
    Scanner(engine::Engine& e, Millis every) : engine_(e)
    {
        thread_ = std::thread([this, every] {
            std::unique_lock lock(mu_);
            while (!cv_.wait_for(lock, every, [this] { return stop_; })) {
                lock.unlock();
                try {
                    if (const auto n = engine_.offline_scan()) spdlog::info("offline scan: {} alert change(s)", n);
                } catch (const std::exception& e) {
                    spdlog::error("offline scan failed: {}", e.what());
                }
                lock.lock();
            }
        });
    }
    ~Scanner()
    {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        thread_.join();
    }

private:
    engine::Engine& engine_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
    std::thread thread_;
};

void bootstrap_admin(auth::CredentialStore& creds, const ServeConfig& c)
{
    for (const auto& u : creds.list())
        if (u.role == Role::Admin) return;
    auto password = c.admin_password;
    const bool generated = password.empty();
    if (generated) password = random_password();
    creds.create(c.admin_user, "Administrator", password, Role::Admin);
    if (generated)
        spdlog::warn("created administrator '{}' with password '{}'; change it after first login", c.admin_user,
                     password);
    else
        spdlog::info("created administrator '{}'", c.admin_user);
}

}  // namespace

int serve(const ServeConfig& c)
{
    spdlog::set_level(spdlog::level::from_str(c.log_level));

    // Signals are taken synchronously by this thread; every worker thread
    // inherits the blocked mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::error_code ec;
    fs::create_directories(c.data_dir, ec);
    if (ec) throw Error("IO_FAILURE", "cannot create data directory " + c.data_dir.string() + ": " + ec.message());

    engine::EngineOptions eo;
    eo.data_dir = c.data_dir;
    eo.fsync = c.fsync;
    eo.offline_timeout = Millis{static_cast<std::int64_t>(c.offline_timeout_s * 1000.0)};
    eo.offline_clock = c.offline_clock == "event" ? engine::OfflineClock::Event : engine::OfflineClock::Wall;
    eo.snapshot_every = c.snapshot_every;
    engine::Engine engine(eo);

    const auto recovered = engine.view();
    spdlog::info("recovered offset={} events={} snapshot={} hash={}",
                 recovered->as_of_offset ? std::to_string(*recovered->as_of_offset) : "none",
                 engine.recovered_events(),
                 engine.recovered_snapshot() ? std::to_string(*engine.recovered_snapshot()) : "none",
                 store::snapshot_hash(*recovered));

    if (!c.thresholds.empty()) {
        Json merged = recovered->thresholds;
        merged.update(c.thresholds);
        const auto t = merged.get<Thresholds>();
        t.validate();
        if (engine.set_thresholds(t)) spdlog::info("thresholds updated: {}", merged.dump());
    }

    auth::AuthOptions ao;
    ao.file = c.data_dir / "users.json";
    auth::CredentialStore creds(ao);
    if (!c.credentials_file.empty()) {
        const auto added = creds.seed(c.credentials_file);
        spdlog::info("seeded {} user(s) from {}", added, c.credentials_file.string());
    }
    bootstrap_admin(creds, c);

    telemetry::ServerOptions so;
    so.host = c.host;
    so.port = static_cast<std::uint16_t>(c.telemetry_port);
    telemetry::TelemetryServer telemetry(engine, so);
    api::ApiOptions apo;
    apo.host = c.host;
    apo.port = static_cast<std::uint16_t>(c.api_port);
    apo.static_dir = c.static_dir;
    api::ApiServer api(engine, creds, apo);

    telemetry.start();
    try {
        api.start();
    } catch (...) {
        telemetry.stop();
        throw;
    }
    std::optional<Scanner> scanner;
    if (eo.offline_timeout.count() > 0) scanner.emplace(engine, std::clamp(eo.offline_timeout / 4, Millis{50}, Millis{5000}));
    spdlog::info("listening telemetry={} api={} data_dir={}", telemetry.port(), api.port(), c.data_dir.string());

    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, shutting down", sig);

    scanner.reset();
    api.stop();
    telemetry.stop();
    const auto counters = telemetry.counters();
    spdlog::info("telemetry: {} connection(s), {} line(s), {} accepted, {} duplicate(s), {} rejected",
                 counters.connections, counters.lines, counters.accepted, counters.duplicates, counters.rejected);
    const auto snap = engine.snapshot();
    const auto final = engine.view();
    spdlog::info("stopped at offset={} hash={}{}",
                 final->as_of_offset ? std::to_string(*final->as_of_offset) : "none", store::snapshot_hash(*final),
                 snap.empty() ? "" : " snapshot=" + snap.filename().string());
    return kOk;
}

}  // namespace tuhr::cli
