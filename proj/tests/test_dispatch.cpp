#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "tuhr/dispatch.hpp"
#include "tuhr/error.hpp"

using namespace tuhr;
using namespace tuhr::dispatch;
using tuhr::testing::at;
using tuhr::testing::bin_config;
using tuhr::testing::worker;

namespace {

// Offsets in meters around a reference point near the equator, where a
// degree of longitude and of latitude are both ~111.2 km.
constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

GeoPoint east_of(const GeoPoint& p, double meters) { return GeoPoint(p.lat(), p.lon() + meters / kMetersPerDegree); }

BinRecord full_bin(std::string id, double lat, double lon)
{
    auto r = make_bin_record(bin_config(id, "s-" + id, lat, lon));
    r.state = BinState::Full;
    r.fill = 0.95;
    return r;
}

CostMatrix random_matrix(std::mt19937_64& rng, bool integer)
{
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    const std::size_t m = dim(rng), n = dim(rng);
    CostMatrix c(m, n);
    std::uniform_int_distribution<int> small(0, 9);
    std::uniform_real_distribution<double> real(0.0, 10000.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c.set(i, j, integer ? small(rng) : real(rng));
    return c;
}

void check_injective(const Assignment& a, std::size_t m, std::size_t n)
{
    std::set<std::size_t> workers, bins;
    for (auto [w, b] : a.pairs) {
        REQUIRE(w < m);
        REQUIRE(b < n);
        REQUIRE(workers.insert(w).second);
        REQUIRE(bins.insert(b).second);
    }
    REQUIRE(a.pairs.size() == std::min(m, n));
}

}  // namespace

TEST_CASE("haversine examples")
{
    const GeoPoint kaaba(21.4225, 39.8262);
    CHECK(haversine_m(kaaba, kaaba) == 0.0);
    CHECK(haversine_m(GeoPoint(0, 0), GeoPoint(0, 180)) ==
          doctest::Approx(std::numbers::pi * kEarthRadiusM).epsilon(1e-12));
    // Reference value from a 50-digit great-circle evaluation.
    CHECK(haversine_m(kaaba, GeoPoint(21.4133, 39.8933)) == doctest::Approx(7020.852628224828).epsilon(1e-6));
}

TEST_CASE("haversine properties")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
    for (int n = 0; n < 5000; ++n) {
        GeoPoint a(lat(rng), lon(rng)), b(lat(rng), lon(rng)), c(lat(rng), lon(rng));
        const double ab = haversine_m(a, b), ba = haversine_m(b, a);
        REQUIRE(ab >= 0.0);
        REQUIRE(ab == doctest::Approx(ba).epsilon(1e-12));
        REQUIRE(haversine_m(a, a) == 0.0);
        REQUIRE(haversine_m(a, c) <= (ab + haversine_m(b, c)) * (1 + 1e-6));
        REQUIRE(ab <= std::numbers::pi * kEarthRadiusM * (1 + 1e-12));
    }
}

TEST_CASE("build_cost_matrix")
{
    auto b = full_bin("b-1", 21.42, 39.82);
    auto w = worker("w-1", 21.42, 39.82);
    auto c = build_cost_matrix(std::vector{w}, std::vector{b});
    CHECK(c.rows() == 1);
    CHECK(c.cols() == 1);
    CHECK(c(0, 0) == 0.0);

    std::vector<WorkerProfile> ws{worker("w-1", 21.40, 39.80), worker("w-2", 21.45, 39.85)};
    std::vector<BinRecord> bs{full_bin("b-1", 21.41, 39.81), full_bin("b-2", 21.43, 39.84)};
    auto m = build_cost_matrix(ws, bs);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(m(i, j) == haversine_m(ws[i].start_location, bs[j].config.location));

    try {
        build_cost_matrix(ws, std::vector<BinRecord>{});
        FAIL("expected EMPTY_INPUT");
    } catch (const Error& e) {
        CHECK(e.code() == "EMPTY_INPUT");
    }
    CHECK_THROWS_AS(CostMatrix::from_rows({{1.0, -1.0}}), Error);
    CHECK_THROWS_AS(CostMatrix::from_rows({{1.0, 2.0}, {3.0}}), Error);
    CHECK_THROWS_AS(CostMatrix::from_rows({{INFINITY}}), Error);
}

TEST_CASE("solve_assignment examples")
{
    auto one = solve_assignment(CostMatrix::from_rows({{5.0}}));
    CHECK(one.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}});
    CHECK(one.total_cost == 5.0);

    auto diag = solve_assignment(CostMatrix::from_rows({{1, 2}, {2, 1}}));
    CHECK(diag.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}});
    CHECK(diag.total_cost == 2.0);

    auto wide = solve_assignment(CostMatrix::from_rows({{1, 9, 9}, {9, 1, 9}}));
    CHECK(wide.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}});
    CHECK(wide.total_cost == 2.0);

    // all-equal costs: lexicographic tie-break picks the identity
    auto flat = solve_assignment(CostMatrix(3, 3, 4.0));
    CHECK(flat.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}, {2, 2}});

    auto tall = solve_assignment(CostMatrix::from_rows({{3}, {1}, {1}}));
    CHECK(tall.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}});
}

TEST_CASE("solve_assignment matches exhaustive search on integer matrices")
{
    std::mt19937_64 rng(2024);
    for (int n = 0; n < 1500; ++n) {
        const auto c = random_matrix(rng, true);
        const auto got = solve_assignment(c);
        const auto ref = tuhr::testing::brute_force_assignment(c);
        CAPTURE(n);
        check_injective(got, c.rows(), c.cols());
        REQUIRE(got.total_cost == ref.best);
        REQUIRE(got.pairs == ref.lex_min);
    }
}

TEST_CASE("solve_assignment matches exhaustive search on real matrices")
{
    std::mt19937_64 rng(77);
    for (int n = 0; n < 1500; ++n) {
        const auto c = random_matrix(rng, false);
        const auto got = solve_assignment(c);
        const auto ref = tuhr::testing::brute_force_assignment(c);
        check_injective(got, c.rows(), c.cols());
        double recomputed = 0.0;
        for (auto [w, b] : got.pairs) recomputed += c(w, b);
        REQUIRE(recomputed == got.total_cost);
        REQUIRE(std::abs(got.total_cost - ref.best) <= 1e-9);
    }
}

TEST_CASE("assign_all examples")
{
    SUBCASE("one bin, one worker")
    {
        auto r = assign_all(std::vector{full_bin("b-1", 21.42, 39.82)}, std::vector{worker("w-1", 21.4, 39.8)});
        CHECK(r.bin_to_worker == std::map<std::string, std::string>{{"b-1", "w-1"}});
        CHECK_FALSE(r.capacity_exhausted);
    }
    SUBCASE("three bins, one worker with capacity 5")
    {
        std::vector bins{full_bin("b-1", 21.42, 39.82), full_bin("b-2", 21.43, 39.83), full_bin("b-3", 21.44, 39.84)};
        auto r = assign_all(bins, std::vector{worker("w-1", 21.4, 39.8)});
        CHECK(r.bin_to_worker.size() == 3);
        CHECK(r.worker_bins.at("w-1") == std::vector<std::string>{"b-1", "b-2", "b-3"});
        CHECK(r.unassigned.empty());
    }
    SUBCASE("four bins, two workers with capacity 1")
    {
        std::vector bins{full_bin("b-1", 21.42, 39.82), full_bin("b-2", 21.43, 39.83), full_bin("b-3", 21.44, 39.84),
                         full_bin("b-4", 21.45, 39.85)};
        auto r = assign_all(bins, std::vector{worker("w-1", 21.4, 39.8, 1), worker("w-2", 21.46, 39.86, 1)});
        CHECK(r.bin_to_worker.size() == 2);
        CHECK(r.unassigned.size() == 2);
        CHECK(r.capacity_exhausted);
        // nearest bins to each worker
        CHECK(r.bin_to_worker.at("b-1") == "w-1");
        CHECK(r.bin_to_worker.at("b-4") == "w-2");
    }
}

TEST_CASE("order_route_nn examples")
{
    const GeoPoint origin(0.0, 0.0);
    SUBCASE("single stop")
    {
        auto r = order_route_nn("w", origin, std::vector<Stop>{{"a", east_of(origin, 500)}});
        CHECK(r.stops == std::vector<std::string>{"a"});
        CHECK(r.length_m == doctest::Approx(500.0).epsilon(1e-9));
    }
    SUBCASE("collinear stops visited in distance order")
    {
        std::vector<Stop> stops{{"c", east_of(origin, 3000)}, {"a", east_of(origin, 1000)}, {"b", east_of(origin, 2000)}};
        auto r = order_route_nn("w", origin, stops);
        CHECK(r.stops == std::vector<std::string>{"a", "b", "c"});
        CHECK(r.length_m == doctest::Approx(3000.0).epsilon(1e-9));
    }
    SUBCASE("nearest first")
    {
        std::vector<Stop> stops{{"west", east_of(origin, -5000)}, {"east", east_of(origin, 1000)}};
        CHECK(order_route_nn("w", origin, stops).stops == std::vector<std::string>{"east", "west"});
    }
    SUBCASE("ties go to the smaller id")
    {
        std::vector<Stop> stops{{"z", east_of(origin, 1000)}, {"m", east_of(origin, -1000)}};
        CHECK(order_route_nn("w", origin, stops).stops.front() == "m");
    }
}

TEST_CASE("two_opt leaves 1- and 2-stop routes alone")
{
    const GeoPoint origin(0.0, 0.0);
    Coordinates coords{{"a", east_of(origin, 1000)}, {"b", east_of(origin, -3000)}};
    Route one{"w", {"a"}, 1000.0};
    CHECK(two_opt(one, coords, origin).stops == one.stops);
    Route two{"w", {"a", "b"}, path_length_m(origin, std::vector<std::string>{"a", "b"}, coords)};
    CHECK(two_opt(two, coords, origin).stops == two.stops);
}

TEST_CASE("two_opt on every ordering of a unit square")
{
    // Corners of a ~1 km square with the start off one corner.
    const GeoPoint start(0.0, -0.002);
    const double d = 1000.0 / kMetersPerDegree;
    Coordinates coords{{"a", GeoPoint(0.0, 0.0)}, {"b", GeoPoint(0.0, d)}, {"c", GeoPoint(d, d)}, {"d", GeoPoint(d, 0.0)}};
    std::vector<std::string> order{"a", "b", "c", "d"};
    const double best = tuhr::testing::brute_force_path(start, order, coords);
    int improved = 0;
    do {
        Route in{"w", order, path_length_m(start, order, coords)};
        auto out = two_opt(in, coords, start);
        CAPTURE(order);
        auto sorted = out.stops;
        std::sort(sorted.begin(), sorted.end());
        REQUIRE(sorted == std::vector<std::string>{"a", "b", "c", "d"});
        REQUIRE(out.length_m <= in.length_m + 1e-9);
        REQUIRE(out.length_m >= best - 1e-9);
        REQUIRE(tuhr::testing::two_opt_locally_optimal(start, out.stops, coords));
        REQUIRE(out.length_m == doctest::Approx(path_length_m(start, out.stops, coords)).epsilon(1e-12));
        if (out.length_m < in.length_m - 1e-6) ++improved;
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(improved > 0);

    // the diagonal-crossing tour a c b d gets uncrossed
    Route crossing{"w", {"a", "c", "b", "d"}, path_length_m(start, std::vector<std::string>{"a", "c", "b", "d"}, coords)};
    CHECK(two_opt(crossing, coords, start).length_m < crossing.length_m - 1.0);
}

TEST_CASE("two_opt(nn) against the exhaustive optimum")
{
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> jitter(-0.03, 0.03);
    std::uniform_int_distribution<int> count(1, 7);
    for (int trial = 0; trial < 300; ++trial) {
        const GeoPoint start(21.42 + jitter(rng), 39.82 + jitter(rng));
        const int n = count(rng);
        std::vector<Stop> stops;
        Coordinates coords;
        std::vector<std::string> ids;
        for (int k = 0; k < n; ++k) {
            std::string id = "b-" + std::to_string(k);
            GeoPoint p(21.42 + jitter(rng), 39.82 + jitter(rng));
            stops.push_back({id, p});
            coords.emplace(id, p);
            ids.push_back(id);
        }
        const auto nn = order_route_nn("w", start, stops);
        const auto improved = two_opt(nn, coords, start);
        const double opt = tuhr::testing::brute_force_path(start, ids, coords);
        REQUIRE(improved.length_m <= nn.length_m + 1e-9);
        REQUIRE(improved.length_m >= opt - 1e-6);
        REQUIRE(nn.length_m >= opt - 1e-6);
        REQUIRE(tuhr::testing::two_opt_locally_optimal(start, improved.stops, coords));
    }
}

TEST_CASE("plan_dispatch examples")
{
    const auto ts = at("2025-06-01T10:00:00Z");
    SUBCASE("no FULL bins")
    {
        auto b = make_bin_record(bin_config("b-1", "s-1"));
        auto plan = plan_dispatch(std::vector{b}, std::vector{worker("w-1", 21.4, 39.8)}, ts);
        CHECK(plan.routes.empty());
        CHECK(plan.created_ts == ts);
        CHECK_FALSE(plan.plan_id.empty());
    }
    SUBCASE("three levels, one worker")
    {
        auto empty = make_bin_record(bin_config("b-empty", "s-1", 21.421, 39.821));
        auto almost = make_bin_record(bin_config("b-almost", "s-2", 21.422, 39.822));
        almost.state = BinState::AlmostFull;
        almost.fill = 0.5;
        auto full = full_bin("b-full", 21.423, 39.823);
        auto plan = plan_dispatch(std::vector{empty, almost, full}, std::vector{worker("w-1", 21.42, 39.82)}, ts);
        REQUIRE(plan.routes.size() == 1);
        CHECK(plan.routes[0].stops == std::vector<std::string>{"b-full"});
    }
    SUBCASE("six FULL bins, two workers")
    {
        std::vector<BinRecord> bins;
        for (int k = 0; k < 6; ++k) bins.push_back(full_bin("b-" + std::to_string(k), 21.40 + 0.01 * k, 39.80));
        auto plan =
            plan_dispatch(bins, std::vector{worker("w-1", 21.40, 39.80), worker("w-2", 21.45, 39.80)}, ts);
        REQUIRE(plan.routes.size() == 2);
        std::multiset<std::string> all;
        for (const auto& r : plan.routes) all.insert(r.stops.begin(), r.stops.end());
        CHECK(all.size() == 6);
        CHECK(std::set<std::string>(all.begin(), all.end()).size() == 6);
        CHECK_FALSE(plan.capacity_exhausted);
    }
    SUBCASE("admins receive no stops")
    {
        auto plan = plan_dispatch(std::vector{full_bin("b-1", 21.42, 39.82)},
                                  std::vector{worker("admin", 21.42, 39.82, 5, Role::Admin), worker("w-1", 21.5, 39.9)},
                                  ts);
        REQUIRE(plan.routes.size() == 1);
        CHECK(plan.routes[0].worker_id == "w-1");
    }
    SUBCASE("capacity shortfall is annotated")
    {
        std::vector<BinRecord> bins;
        for (int k = 0; k < 4; ++k) bins.push_back(full_bin("b-" + std::to_string(k), 21.40 + 0.01 * k, 39.80));
        auto plan = plan_dispatch(bins, std::vector{worker("w-1", 21.40, 39.80, 3)}, ts);
        CHECK(plan.capacity_exhausted);
        CHECK(plan.unassigned.size() == 1);
        CHECK(plan.routes.at(0).stops.size() == 3);
    }
}

TEST_CASE("plan_dispatch covers each FULL bin once and ignores input order")
{
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> nbins(0, 25), nworkers(1, 5), cap(1, 8), state(0, 3);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<BinRecord> bins;
        const int nb = nbins(rng);
        for (int k = 0; k < nb; ++k) {
            auto r = make_bin_record(bin_config("b-" + std::to_string(k), "s-" + std::to_string(k),
                                                21.42 + jitter(rng), 39.82 + jitter(rng)));
            r.state = static_cast<BinState>(state(rng));
            bins.push_back(r);
        }
        std::vector<WorkerProfile> crew;
        const int nw = nworkers(rng);
        for (int k = 0; k < nw; ++k)
            crew.push_back(worker("w-" + std::to_string(k), 21.42 + jitter(rng), 39.82 + jitter(rng), cap(rng)));

        const auto ts = at("2025-06-01T10:00:00Z");
        const auto plan = plan_dispatch(bins, crew, ts);
        std::map<std::string, int> seen;
        for (const auto& r : plan.routes) {
            const auto& w = *std::find_if(crew.begin(), crew.end(), [&](auto& x) { return x.worker_id == r.worker_id; });
            REQUIRE(static_cast<int>(r.stops.size()) <= w.capacity);
            REQUIRE_FALSE(r.stops.empty());
            for (const auto& s : r.stops) ++seen[s];
        }
        for (const auto& u : plan.unassigned) ++seen[u];
        for (const auto& b : bins) {
            const int n = seen.count(b.config.bin_id) ? seen[b.config.bin_id] : 0;
            REQUIRE(n == (b.state == BinState::Full ? 1 : 0));
        }

        auto shuffled_bins = bins;
        auto shuffled_crew = crew;
        std::shuffle(shuffled_bins.begin(), shuffled_bins.end(), rng);
        std::shuffle(shuffled_crew.begin(), shuffled_crew.end(), rng);
        REQUIRE(plan_dispatch(shuffled_bins, shuffled_crew, ts) == plan);
    }
}
