#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tuhr/domain.hpp"
#include "tuhr/time.hpp"

namespace tuhr::testing {

inline Timestamp at(const char* iso) { return *parse_iso8601(iso); }

inline BinConfig bin_config(std::string bin_id, std::string sensor_id, double lat = 21.42, double lon = 39.82)
{
    BinConfig c;
    c.bin_id = std::move(bin_id);
    c.sensor_id = std::move(sensor_id);
    c.location = GeoPoint(lat, lon);
    c.zone_id = "z-1";
    c.depth_cm = 100.0;
    c.full_offset_cm = 10.0;
    return c;
}

inline WorkerProfile worker(std::string id, double lat, double lon, int capacity = 5, Role role = Role::Worker)
{
    WorkerProfile w;
    w.worker_id = id;
    w.name = std::move(id);
    w.start_location = GeoPoint(lat, lon);
    w.capacity = capacity;
    w.role = role;
    return w;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("tuhr-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace tuhr::testing
