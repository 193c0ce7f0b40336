#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tuhr/domain.hpp"

namespace tuhr::dispatch {

inline constexpr double kEarthRadiusM = 6371000.0;

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_m(const GeoPoint& a, const GeoPoint& b) noexcept;

/// Dense workers x bins matrix of nonnegative finite costs (meters).
class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Throws `INVALID` for ragged rows or negative/non-finite entries.
    static CostMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    /// Throws `INVALID` for negative or non-finite values.
    void set(std::size_t r, std::size_t c, double value);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (worker, bin), sorted by worker
    double total_cost = 0.0;
};

/// Cost of worker i reaching bin j from the worker's start location.
/// Throws `EMPTY_INPUT` if either list is empty.
CostMatrix build_cost_matrix(std::span<const WorkerProfile> workers, std::span<const BinRecord> bins);

/// Minimum-cost injective matching of min(rows, cols) pairs (Hungarian
/// method on the zero-padded square matrix). Among optimal matchings the
/// lexicographically smallest (worker, bin) pair list is returned.
Assignment solve_assignment(const CostMatrix& cost);

struct AssignResult {
    std::map<std::string, std::string> bin_to_worker;
    /// Bins per worker in the order the rounds handed them out.
    std::map<std::string, std::vector<std::string>> worker_bins;
    std::vector<std::string> unassigned;
    bool capacity_exhausted = false;
};

/// Repeated assignment rounds: each round matches up to one bin per worker
/// with capacity left, charging costs from the worker's last assigned bin.
/// Bins left once every worker is at capacity are reported in `unassigned`.
AssignResult assign_all(std::span<const BinRecord> bins, std::span<const WorkerProfile> workers);

struct Stop {
    std::string bin_id;
    GeoPoint location;
};

struct Route {
    std::string worker_id;
    std::vector<std::string> stops;
    double length_m = 0.0;  // start -> stops in order, no return leg

    friend bool operator==(const Route&, const Route&) = default;
};

using Coordinates = std::map<std::string, GeoPoint>;

/// Length of the open path start -> stops[0] -> ... -> stops.back().
double path_length_m(const GeoPoint& start, std::span<const std::string> stops, const Coordinates& coords);

/// Greedy nearest-neighbour ordering; ties go to the smaller bin_id.
Route order_route_nn(std::string worker_id, const GeoPoint& start, std::span<const Stop> stops);

/// Change in open-path length from reversing stops[i..j] (0-based,
/// i < j < n - 1, so both removed edges exist). Negative is an improvement.
double two_opt_delta(const GeoPoint& start, std::span<const GeoPoint> path, std::size_t i, std::size_t j) noexcept;

/// Best-improvement 2-opt with the start fixed, until no reversal shortens
/// the path by more than 1e-9 m.
Route two_opt(const Route& route, const Coordinates& coords, const GeoPoint& start);

struct DispatchPlan {
    std::string plan_id;
    Timestamp created_ts;
    std::vector<Route> routes;  // sorted by worker_id
    bool stale = false;
    std::vector<std::string> unassigned;  // nonempty only when capacity ran out
    bool capacity_exhausted = false;

    friend bool operator==(const DispatchPlan&, const DispatchPlan&) = default;
};

/// Routes every FULL bin to one WORKER-role profile. ADMIN profiles never
/// receive stops. Deterministic in its inputs, whatever their order.
DispatchPlan plan_dispatch(std::span<const BinRecord> bins, std::span<const WorkerProfile> workers, Timestamp ts);

}  // namespace tuhr::dispatch
