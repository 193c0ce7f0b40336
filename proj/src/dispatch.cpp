#include "tuhr/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <queue>

#include "tuhr/error.hpp"

namespace tuhr::dispatch {

namespace {

double radians(double deg) noexcept { return deg * (std::numbers::pi / 180.0); }

double sq(double x) noexcept { return x * x; }

void check_cost(double v)
{
    if (!std::isfinite(v) || v < 0.0) throw Error("INVALID", "cost entries must be finite and nonnegative");
}

}  // namespace

double haversine_m(const GeoPoint& a, const GeoPoint& b) noexcept
{
    const double lat1 = radians(a.lat());
    const double lat2 = radians(b.lat());
    const double dlat = lat2 - lat1;
    const double dlon = radians(b.lon() - a.lon());
    const double h = sq(std::sin(dlat / 2.0)) + std::cos(lat1) * std::cos(lat2) * sq(std::sin(dlon / 2.0));
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
    check_cost(fill);
}

CostMatrix CostMatrix::from_rows(const std::vector<std::vector<double>>& rows)
{
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    CostMatrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw Error("INVALID", "cost matrix must be rectangular");
        for (std::size_t c = 0; c < cols; ++c) m.set(r, c, rows[r][c]);
    }
    return m;
}

void CostMatrix::set(std::size_t r, std::size_t c, double value)
{
    check_cost(value);
    data_[r * cols_ + c] = value;
}

CostMatrix build_cost_matrix(std::span<const WorkerProfile> workers, std::span<const BinRecord> bins)
{
    if (workers.empty() || bins.empty()) throw Error("EMPTY_INPUT", "cost matrix needs workers and bins");
    CostMatrix m(workers.size(), bins.size());
    for (std::size_t i = 0; i < workers.size(); ++i)
        for (std::size_t j = 0; j < bins.size(); ++j)
            m.set(i, j, haversine_m(workers[i].start_location, bins[j].config.location));
    return m;
}

namespace {

// Square Hungarian method with row/column potentials. On return
// col_owner[j] is the row matched to column j and u, v are an optimal dual:
// a[i][j] - u[i] - v[j] >= 0 everywhere, with equality on matched pairs.
struct HungarianResult {
    std::vector<std::size_t> col_owner;
    std::vector<double> u, v;
};

HungarianResult hungarian_square(const std::vector<double>& a, std::size_t n)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    // 1-based internally; index 0 is the virtual column used to grow paths.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = none;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    HungarianResult out;
    out.col_owner.resize(n);
    out.u.assign(u.begin() + 1, u.end());
    out.v.assign(v.begin() + 1, v.end());
    for (std::size_t j = 1; j <= n; ++j) out.col_owner[j - 1] = p[j] - 1;
    return out;
}

// Rewrites the perfect matching into the lexicographically smallest one of
// the equality subgraph. Row by row, the smallest tight column is claimed
// whenever an alternating cycle through unfrozen rows frees it.
void lexicographic_polish(const std::vector<double>& a, std::size_t n, HungarianResult& h, double eps)
{
    auto tight = [&](std::size_t i, std::size_t j) { return a[i * n + j] - h.u[i] - h.v[j] <= eps; };
    std::vector<std::size_t>& owner = h.col_owner;
    std::vector<std::size_t> col_of(n);
    for (std::size_t j = 0; j < n; ++j) col_of[owner[j]] = j;

    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> parent_row(n);  // row whose move displaces this one
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == col_of[i]) break;
            if (!tight(i, j)) continue;
            const std::size_t k = owner[j];
            if (k < i) continue;  // frozen

            // BFS over unfrozen rows: row r may move to a tight column c,
            // displacing owner[c]; success once some row can take col_of[i].
            const std::size_t target = col_of[i];
            std::vector<char> seen_col(n, 0);
            seen_col[j] = 1;
            std::queue<std::size_t> frontier;
            frontier.push(k);
            parent_row[k] = none;
            std::size_t last_row = none;
            while (!frontier.empty() && last_row == none) {
                const std::size_t r = frontier.front();
                frontier.pop();
                for (std::size_t c = 0; c < n; ++c) {
                    if (seen_col[c] || !tight(r, c)) continue;
                    seen_col[c] = 1;
                    if (c == target) {
                        last_row = r;
                        break;
                    }
                    const std::size_t next = owner[c];
                    if (next <= i) continue;
                    parent_row[next] = r;
                    frontier.push(next);
                }
            }
            if (last_row == none) continue;

            // Walk back: last_row takes target, each parent row takes the
            // column its child vacated, and k vacates j for row i.
            std::size_t r = last_row;
            std::size_t take = target;
            for (;;) {
                const std::size_t vacated = col_of[r];
                owner[take] = r;
                col_of[r] = take;
                if (r == k) break;
                take = vacated;
                r = parent_row[r];
            }
            owner[j] = i;
            col_of[i] = j;
            break;
        }
    }
}

}  // namespace

Assignment solve_assignment(const CostMatrix& cost)
{
    Assignment out;
    const std::size_t m = cost.rows();
    const std::size_t k = cost.cols();
    if (m == 0 || k == 0) return out;

    const std::size_t n = std::max(m, k);
    std::vector<double> a(n * n, 0.0);
    double scale = 1.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            a[i * n + j] = cost(i, j);
            scale = std::max(scale, cost(i, j));
        }

    auto h = hungarian_square(a, n);
    lexicographic_polish(a, n, h, 1e-12 * scale * static_cast<double>(n));

    std::vector<std::size_t> col_of(n);
    for (std::size_t j = 0; j < n; ++j) col_of[h.col_owner[j]] = j;
    for (std::size_t i = 0; i < m; ++i) {
        if (col_of[i] < k) {
            out.pairs.emplace_back(i, col_of[i]);
            out.total_cost += cost(i, col_of[i]);
        }
    }
    return out;
}

AssignResult assign_all(std::span<const BinRecord> bins, std::span<const WorkerProfile> workers)
{
    AssignResult out;
    std::vector<std::size_t> remaining_bins(bins.size());
    for (std::size_t j = 0; j < bins.size(); ++j) remaining_bins[j] = j;
    std::vector<int> capacity(workers.size());
    std::vector<GeoPoint> position(workers.size());
    for (std::size_t i = 0; i < workers.size(); ++i) {
        capacity[i] = workers[i].capacity;
        position[i] = workers[i].start_location;
    }

    while (!remaining_bins.empty()) {
        std::vector<std::size_t> active;
        for (std::size_t i = 0; i < workers.size(); ++i)
            if (capacity[i] > 0) active.push_back(i);
        if (active.empty()) break;

        CostMatrix c(active.size(), remaining_bins.size());
        for (std::size_t r = 0; r < active.size(); ++r)
            for (std::size_t col = 0; col < remaining_bins.size(); ++col)
                c.set(r, col, haversine_m(position[active[r]], bins[remaining_bins[col]].config.location));

        const auto round = solve_assignment(c);
        std::vector<char> taken(remaining_bins.size(), 0);
        for (auto [r, col] : round.pairs) {
            const std::size_t w = active[r];
            const auto& bin = bins[remaining_bins[col]];
            out.bin_to_worker[bin.config.bin_id] = workers[w].worker_id;
            out.worker_bins[workers[w].worker_id].push_back(bin.config.bin_id);
            --capacity[w];
            position[w] = bin.config.location;
            taken[col] = 1;
        }
        std::vector<std::size_t> next;
        for (std::size_t col = 0; col < remaining_bins.size(); ++col)
            if (!taken[col]) next.push_back(remaining_bins[col]);
        remaining_bins = std::move(next);
    }

    for (auto j : remaining_bins) out.unassigned.push_back(bins[j].config.bin_id);
    out.capacity_exhausted = !out.unassigned.empty();
    return out;
}

double path_length_m(const GeoPoint& start, std::span<const std::string> stops, const Coordinates& coords)
{
    double total = 0.0;
    GeoPoint at = start;
    for (const auto& id : stops) {
        const auto& next = coords.at(id);
        total += haversine_m(at, next);
        at = next;
    }
    return total;
}

Route order_route_nn(std::string worker_id, const GeoPoint& start, std::span<const Stop> stops)
{
    Route route;
    route.worker_id = std::move(worker_id);
    std::vector<char> visited(stops.size(), 0);
    GeoPoint at = start;
    for (std::size_t step = 0; step < stops.size(); ++step) {
        std::size_t best = stops.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < stops.size(); ++s) {
            if (visited[s]) continue;
            const double d = haversine_m(at, stops[s].location);
            if (d < best_d || (d == best_d && stops[s].bin_id < stops[best].bin_id)) {
                best = s;
                best_d = d;
            }
        }
        visited[best] = 1;
        route.stops.push_back(stops[best].bin_id);
        route.length_m += best_d;
        at = stops[best].location;
    }
    return route;
}

double two_opt_delta(const GeoPoint& start, std::span<const GeoPoint> path, std::size_t i, std::size_t j) noexcept
{
    const GeoPoint& before = i == 0 ? start : path[i - 1];
    const GeoPoint& after = path[j + 1];
    return haversine_m(before, path[j]) + haversine_m(path[i], after) - haversine_m(before, path[i]) -
           haversine_m(path[j], after);
}

Route two_opt(const Route& route, const Coordinates& coords, const GeoPoint& start)
{
    constexpr double min_gain_m = 1e-9;
    Route out = route;
    const std::size_t n = out.stops.size();
    std::vector<GeoPoint> path;
    path.reserve(n);
    for (const auto& id : out.stops) path.push_back(coords.at(id));

    for (;;) {
        double best = -min_gain_m;
        std::size_t bi = 0, bj = 0;
        bool found = false;
        for (std::size_t i = 0; i + 2 < n; ++i) {
            for (std::size_t j = i + 1; j + 1 < n; ++j) {
                const double d = two_opt_delta(start, path, i, j);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                    found = true;
                }
            }
        }
        if (!found) break;
        std::reverse(path.begin() + static_cast<std::ptrdiff_t>(bi), path.begin() + static_cast<std::ptrdiff_t>(bj) + 1);
        std::reverse(out.stops.begin() + static_cast<std::ptrdiff_t>(bi),
                     out.stops.begin() + static_cast<std::ptrdiff_t>(bj) + 1);
    }
    out.length_m = path_length_m(start, out.stops, coords);
    return out;
}

namespace {

std::string plan_fingerprint(Timestamp ts, const std::vector<Route>& routes, const std::vector<std::string>& unassigned)
{
    // FNV-1a over the plan's identifying content.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0xff;
        h *= 1099511628211ull;
    };
    mix(std::to_string(to_epoch_ms(ts)));
    for (const auto& r : routes) {
        mix(r.worker_id);
        for (const auto& s : r.stops) mix(s);
    }
    for (const auto& u : unassigned) mix(u);
    char buf[32];
    std::snprintf(buf, sizeof buf, "plan-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

DispatchPlan plan_dispatch(std::span<const BinRecord> bins, std::span<const WorkerProfile> workers, Timestamp ts)
{
    DispatchPlan plan;
    plan.created_ts = ts;

    std::vector<BinRecord> full;
    for (const auto& b : bins)
        if (b.state == BinState::Full) full.push_back(b);
    std::sort(full.begin(), full.end(),
              [](const BinRecord& x, const BinRecord& y) { return x.config.bin_id < y.config.bin_id; });

    std::vector<WorkerProfile> crew;
    for (const auto& w : workers)
        if (w.role == Role::Worker) crew.push_back(w);
    std::sort(crew.begin(), crew.end(),
              [](const WorkerProfile& x, const WorkerProfile& y) { return x.worker_id < y.worker_id; });

    if (!full.empty()) {
        const auto assigned = assign_all(full, crew);
        Coordinates coords;
        for (const auto& b : full) coords.emplace(b.config.bin_id, b.config.location);
        for (const auto& w : crew) {
            auto it = assigned.worker_bins.find(w.worker_id);
            if (it == assigned.worker_bins.end()) continue;
            std::vector<Stop> stops;
            for (const auto& id : it->second) stops.push_back({id, coords.at(id)});
            auto nn = order_route_nn(w.worker_id, w.start_location, stops);
            plan.routes.push_back(two_opt(nn, coords, w.start_location));
        }
        plan.unassigned = assigned.unassigned;
        plan.capacity_exhausted = assigned.capacity_exhausted;
    }
    plan.plan_id = plan_fingerprint(ts, plan.routes, plan.unassigned);
    return plan;
}

}  // namespace tuhr::dispatch
