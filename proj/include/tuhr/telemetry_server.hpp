#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>

#include "tuhr/net.hpp"
#include "tuhr/telemetry.hpp"

namespace tuhr::telemetry {

struct ServerOptions {
    std::string host = "0.0.0.0";
    std::uint16_t port = 7070;  // 0 picks a free port
    std::size_t max_line = 64 * 1024;
};

struct ServerCounters {
    std::uint64_t connections = 0;
    std::uint64_t lines = 0;
    std::uint64_t accepted = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t rejected = 0;
};

/// TCP listener speaking the line protocol. One poll thread serves every
/// connection; each connection gets its own IngestSession so acks come
/// back in line order.
class TelemetryServer {
public:
    TelemetryServer(ReadingSink& sink, ServerOptions options);
    ~TelemetryServer();

    TelemetryServer(const TelemetryServer&) = delete;
    TelemetryServer& operator=(const TelemetryServer&) = delete;

    /// Binds and starts the loop. Throws IO_FAILURE naming the port.
    void start();
    void stop();
    std::uint16_t port() const noexcept { return port_; }
    ServerCounters counters() const;

private:
    void run();

    ReadingSink& sink_;
    ServerOptions options_;
    net::Fd listener_;
    net::Fd wake_;
    std::uint16_t port_ = 0;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> connections_{0}, lines_{0}, accepted_{0}, duplicates_{0}, rejected_{0};
};

}  // namespace tuhr::telemetry
