#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tuhr/codec.hpp"
#include "tuhr/domain.hpp"
#include "tuhr/telemetry.hpp"

namespace tuhr::sim {

struct SimBin {
    BinConfig config;
    double initial_fill = 0.0;
    double fill_rate_per_hr = 0.0;
    double fill_jitter = 0.0;  // stddev of per-report noise, in fill units
    // When set, the underlying fill drops back by this amount each time it
    // reaches it (a sawtooth standing in for routine collection).
    std::optional<double> collect_at;
    double base_gas_ppm = 5.0;
    double battery_pct = 95.0;
};

/// Trapezoid added on top of a bin's gas baseline: linear rise over
/// `ramp_frac` of the window, hold at peak, linear fall.
struct GasEvent {
    std::string bin_id;
    double start_s = 0.0;
    double duration_s = 0.0;
    double peak_ppm = 0.0;
    double ramp_frac = 0.2;
};

struct Faults {
    double dup_prob = 0.0;
    double loss_prob = 0.0;
    double reorder_prob = 0.0;
    double max_delay_s = 0.0;
};

struct SimWorker {
    std::string worker_id;
    std::string name;
    GeoPoint start_location;
    int capacity = 5;
};

struct ScenarioConfig {
    std::string name = "custom";
    std::uint64_t seed = 1;
    double duration_s = 3600.0;  // reports at k * interval for 0 <= k * interval < duration
    double report_interval_s = 60.0;
    double time_scale = 0.0;  // real seconds per simulated second; 0 = as fast as possible
    Timestamp epoch;          // simulated t = 0
    std::vector<Zone> zones;
    std::vector<SimBin> bins;
    std::vector<GasEvent> gas_events;
    Faults faults;
    std::vector<SimWorker> workers;

    /// Throws INVALID with the offending field path.
    void validate() const;
};

ScenarioConfig scenario_from_json(const Json& j);
Json scenario_to_json(const ScenarioConfig& s);
/// Reads a scenario file. Throws PARSE on malformed text, INVALID with a
/// field path on bad values.
ScenarioConfig load_scenario(const std::filesystem::path& file);

std::vector<std::string> builtin_names();
/// Throws NOT_FOUND for unknown names.
ScenarioConfig builtin_scenario(const std::string& name);
/// A built-in name or else a file path.
ScenarioConfig resolve_scenario(const std::string& name_or_path);

/// Noise-free fill of a bin at simulated second `t`.
double analytic_base_fill(const SimBin& b, double t);
double gas_at(const ScenarioConfig& s, const SimBin& b, double t);

/// One copy of a record on its way to the server.
struct Transmission {
    std::size_t bin_index = 0;
    telemetry::ReadingEnvelope env;
    double deliver_s = 0.0;  // simulated time it goes out
    bool lost = false;       // dropped by the fault model; never sent
    int copy = 0;            // 1 for the duplicate of a record
};

/// Deterministic sensor fleet. Every random draw comes from per-bin streams
/// seeded from (seed, bin index), so the output is a pure function of the
/// scenario and independent of how transmissions are later scheduled.
class Simulation {
public:
    explicit Simulation(ScenarioConfig scenario);

    /// Advances the clock by `dt` seconds and returns what goes out in
    /// [now, now + dt): fresh reports and delayed ones falling due, ordered
    /// by delivery time, then bin, then seq.
    std::vector<Transmission> step(double dt);
    /// Everything still held back by the reorder fault.
    std::vector<Transmission> drain();

    double now_s() const noexcept { return now_; }
    bool finished() const noexcept;
    const ScenarioConfig& scenario() const noexcept { return scenario_; }
    /// Fill carried by the latest report of each bin, by bin id.
    const std::map<std::string, double>& reported_fill() const noexcept { return reported_; }

private:
    struct BinStream {
        std::mt19937_64 values;
        std::mt19937_64 faults;
        std::uint64_t next_k = 0;
        std::uint64_t seq = 0;
    };

    ScenarioConfig scenario_;
    std::vector<BinStream> streams_;
    std::vector<Transmission> held_;
    std::map<std::string, double> reported_;
    double now_ = 0.0;
};

/// Uniform [0, 1) and standard normal draws with a fixed bit recipe.
double uniform01(std::mt19937_64& g);
double standard_normal(std::mt19937_64& g);

struct SimStats {
    std::uint64_t records = 0;        // distinct readings generated
    std::uint64_t records_sent = 0;   // finished transmissions, lost ones included
    std::uint64_t acks_ok = 0;        // dup acks included
    std::uint64_t acks_dup = 0;
    std::uint64_t acks_err = 0;
    std::uint64_t records_lost = 0;
    std::uint64_t reconnects = 0;
    double max_ack_latency_ms = 0.0;
    double p99_ack_latency_ms = 0.0;
    double wall_s = 0.0;
    std::map<std::string, double> final_fill;  // analytic, at each bin's last report
};

Json to_json(const SimStats& s);

struct RunOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7070;
    int connections = 1;  // bins are spread round-robin; 1 keeps arrival order fixed
    double retry_window_s = 10.0;
    Millis ack_timeout{30'000};
};

/// Drives the scenario over live connections. Throws CONNECTION_REFUSED
/// when the server cannot be reached within the retry window.
SimStats run(const ScenarioConfig& scenario, const RunOptions& options);

struct ProvisionOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 8080;
    std::string username;
    std::string password;
};

/// Creates or updates the scenario's zones, sensors and workers through the
/// HTTP API. Throws UNAUTHORIZED, CONNECTION_REFUSED or the API's error code.
void provision(const ScenarioConfig& scenario, const ProvisionOptions& options);

}  // namespace tuhr::sim
