#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tuhr/codec.hpp"

namespace tuhr::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;
inline constexpr int kMismatch = 3;

enum class Format { Plain, Records };

// Values as given on the command line; unset means "not given".
struct ServeFlags {
    std::optional<std::string> data_dir;
    std::optional<int> telemetry_port;
    std::optional<int> api_port;
    std::optional<std::string> host;
    std::optional<std::string> credentials_file;
    std::optional<std::string> config;
    std::optional<std::string> log_level;
    std::optional<bool> fsync;
    std::optional<double> offline_timeout_s;
    std::optional<std::string> offline_clock;
    std::optional<std::string> static_dir;
    std::optional<std::uint64_t> snapshot_every;
    std::optional<std::string> admin_user;
    std::optional<std::string> admin_password;
    std::optional<double> empty_below, almost_full_at, full_at, hysteresis, gas_alert_ppm;
};

// Fully resolved serve configuration.
struct ServeConfig {
    std::filesystem::path data_dir = "data";
    int telemetry_port = 7070;
    int api_port = 8080;
    std::string host = "0.0.0.0";
    std::filesystem::path credentials_file;  // seed file, optional
    std::string log_level = "info";
    bool fsync = false;
    double offline_timeout_s = 180.0;
    std::string offline_clock = "wall";
    std::filesystem::path static_dir;
    std::uint64_t snapshot_every = 50'000;
    std::string admin_user = "admin";
    std::string admin_password;  // empty: generated on first start
    Json thresholds = Json::object();  // overrides only
};

/// flags > environment > config file > defaults. Throws INVALID.
ServeConfig resolve_serve_config(const ServeFlags& flags);
int serve(const ServeConfig& config);

struct SimulateFlags {
    std::string scenario;
    std::string server = "127.0.0.1";
    std::optional<int> telemetry_port;
    std::optional<int> api_port;
    std::optional<std::uint64_t> seed;
    std::optional<double> time_scale;
    std::optional<double> duration_s;
    int connections = 1;
    std::optional<double> dup_prob, loss_prob, reorder_prob, max_delay_s;
    std::optional<std::string> admin_user;
    std::optional<std::string> admin_password;
    bool no_provision = false;
    Format format = Format::Plain;
};
int simulate(const SimulateFlags& flags);

int plan(const std::filesystem::path& data_dir, Format format);
int replay(const std::filesystem::path& data_dir, std::optional<std::uint64_t> upto, Format format);
int report(const std::filesystem::path& data_dir, Format format);

/// TUHR_<name>, when set and nonempty.
std::optional<std::string> env(const char* name);

}  // namespace tuhr::cli
