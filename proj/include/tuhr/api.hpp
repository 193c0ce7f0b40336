#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "tuhr/auth.hpp"
#include "tuhr/engine.hpp"

namespace httplib {
class Server;
}

namespace tuhr::api {

struct ApiOptions {
    std::string host = "0.0.0.0";
    std::uint16_t port = 8080;  // 0 picks a free port
    std::filesystem::path static_dir;  // served at / when set
    std::size_t threads = 64;          // each open event stream holds one
    Millis keepalive{15'000};
    Millis stream_poll{250};
};

enum class Access : std::uint8_t { Public, Any, Admin };

/// One registered endpoint, with a concrete path usable in tests.
struct RouteInfo {
    std::string method;
    std::string pattern;
    std::string sample;
    Access access;
};

/// HTTP status for an error code.
int status_for(const std::string& code);

class ApiServer {
public:
    ApiServer(engine::Engine& engine, auth::CredentialStore& credentials, ApiOptions options);
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds and serves on a background thread. Throws IO_FAILURE naming
    /// the port.
    void start();
    void stop();
    std::uint16_t port() const noexcept { return port_; }
    const std::vector<RouteInfo>& routes() const noexcept { return routes_; }

private:
    void install();

    engine::Engine& engine_;
    auth::CredentialStore& credentials_;
    ApiOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::vector<RouteInfo> routes_;
    std::uint16_t port_ = 0;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
};

}  // namespace tuhr::api
