#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>

#include "cli.hpp"
#include "tuhr/error.hpp"

using namespace tuhr::cli;

namespace {

void add_format(CLI::App* cmd, Format& format)
{
    cmd->add_option("--format", format, "Output mode")
        ->transform(CLI::CheckedTransformer(std::map<std::string, Format>{{"plain", Format::Plain},
                                                                           {"records", Format::Records}},
                                            CLI::ignore_case))
        ->default_str("plain");
}

void add_data_dir(CLI::App* cmd, std::string& dir)
{
    cmd->add_option("--data-dir", dir, "Directory holding the event log and snapshots")->envname("TUHR_DATA_DIR");
}

}  // namespace

int main(int argc, char** argv)
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("tuhr"));
    spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");

    CLI::App app{"Smart waste bin monitoring: ingestion server, simulator and offline tools"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tuhr 1.0.0");

    ServeFlags sf;
    bool fsync_flag = false;
    auto* serve_cmd = app.add_subcommand("serve", "Run the telemetry listener, alert scanner and HTTP API");
    serve_cmd->add_option("--data-dir", sf.data_dir, "Event log directory (env TUHR_DATA_DIR)");
    serve_cmd->add_option("--telemetry-port", sf.telemetry_port, "Sensor line protocol port (env TUHR_TELEMETRY_PORT)");
    serve_cmd->add_option("--api-port", sf.api_port, "HTTP API port (env TUHR_API_PORT)");
    serve_cmd->add_option("--host", sf.host, "Listen address");
    serve_cmd->add_option("--credentials-file", sf.credentials_file,
                          "Seed users from this file (env TUHR_CREDENTIALS_FILE)");
    serve_cmd->add_option("--config", sf.config, "JSON config file (env TUHR_CONFIG)");
    serve_cmd->add_option("--log-level", sf.log_level, "trace, debug, info, warn, err, critical or off");
    auto* fsync_opt = serve_cmd->add_flag("--fsync,!--no-fsync", fsync_flag, "fsync the log after every append");
    serve_cmd->add_option("--offline-timeout-s", sf.offline_timeout_s, "Silence before SENSOR_OFFLINE; 0 disables");
    serve_cmd->add_option("--offline-clock", sf.offline_clock, "wall or event");
    serve_cmd->add_option("--static-dir", sf.static_dir, "Serve dashboard files from here");
    serve_cmd->add_option("--snapshot-every", sf.snapshot_every, "Events between snapshots; 0 = only at shutdown");
    serve_cmd->add_option("--admin-user", sf.admin_user, "Administrator created on first start (env TUHR_ADMIN_USER)");
    serve_cmd->add_option("--admin-password", sf.admin_password, "Its password (env TUHR_ADMIN_PASSWORD)");
    serve_cmd->add_option("--empty-below", sf.empty_below);
    serve_cmd->add_option("--almost-full-at", sf.almost_full_at);
    serve_cmd->add_option("--full-at", sf.full_at);
    serve_cmd->add_option("--hysteresis", sf.hysteresis);
    serve_cmd->add_option("--gas-alert-ppm", sf.gas_alert_ppm);

    SimulateFlags mf;
    auto* sim_cmd = app.add_subcommand("simulate", "Drive a simulated sensor fleet against a server");
    sim_cmd->add_option("--scenario", mf.scenario, "Built-in name (fig4_levels, gas_fire, hajj_day) or JSON file")
        ->required();
    sim_cmd->add_option("--server", mf.server, "Server host")->capture_default_str();
    sim_cmd->add_option("--telemetry-port", mf.telemetry_port, "(env TUHR_TELEMETRY_PORT)");
    sim_cmd->add_option("--api-port", mf.api_port, "(env TUHR_API_PORT)");
    sim_cmd->add_option("--seed", mf.seed);
    sim_cmd->add_option("--time-scale", mf.time_scale, "Real seconds per simulated second; 0 = flat out");
    sim_cmd->add_option("--duration-s", mf.duration_s);
    sim_cmd->add_option("--connections", mf.connections)->check(CLI::Range(1, 1024))->capture_default_str();
    sim_cmd->add_option("--dup-prob", mf.dup_prob);
    sim_cmd->add_option("--loss-prob", mf.loss_prob);
    sim_cmd->add_option("--reorder-prob", mf.reorder_prob);
    sim_cmd->add_option("--max-delay-s", mf.max_delay_s);
    sim_cmd->add_option("--admin-user", mf.admin_user, "(env TUHR_ADMIN_USER)");
    sim_cmd->add_option("--admin-password", mf.admin_password, "(env TUHR_ADMIN_PASSWORD)");
    sim_cmd->add_flag("--no-provision", mf.no_provision, "Skip creating zones, sensors and workers");
    add_format(sim_cmd, mf.format);

    std::string plan_dir = "data", replay_dir = "data", report_dir = "data";
    Format plan_format = Format::Plain, replay_format = Format::Plain, report_format = Format::Plain;
    std::optional<std::uint64_t> upto;

    auto* plan_cmd = app.add_subcommand("plan", "Compute a dispatch plan from the recovered state");
    add_data_dir(plan_cmd, plan_dir);
    add_format(plan_cmd, plan_format);

    auto* replay_cmd = app.add_subcommand("replay", "Replay the log twice and via snapshot; print the state hash");
    add_data_dir(replay_cmd, replay_dir);
    replay_cmd->add_option("--upto", upto, "Stop after this offset");
    add_format(replay_cmd, replay_format);

    auto* report_cmd = app.add_subcommand("report", "Per-zone bin states, open alerts and plan summary");
    add_data_dir(report_cmd, report_dir);
    add_format(report_cmd, report_format);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    if (fsync_opt->count() > 0) sf.fsync = fsync_flag;

    try {
        if (*serve_cmd) return serve(resolve_serve_config(sf));
        if (*sim_cmd) return simulate(mf);
        if (*plan_cmd) return plan(plan_dir, plan_format);
        if (*replay_cmd) return replay(replay_dir, upto, replay_format);
        if (*report_cmd) return report(report_dir, report_format);
    } catch (const tuhr::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
        return e.code() == "INVALID" ? kUsage : kFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kUsage;
}
