#include "oracles.hpp"

#include "holab/error.hpp"
#include "holab/tracegen.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace holab::tracegen;

namespace {

RadioMap two_bs_map(double sigma)
{
    RadioMap map;
    map.bs_positions = {{200.0, 500.0}, {800.0, 500.0}};
    map.tx_power_dbm = {15.0, 15.0};
    map.shadow_sigma_db = sigma;
    return map;
}

RouteSpec straight_route(double speed = 50.0, double duration = 10.0, std::uint64_t seed = 3)
{
    RouteSpec r;
    r.waypoints = {{100.0, 500.0}, {900.0, 500.0}};
    r.speed_kmh = speed;
    r.duration_s = duration;
    r.seed = seed;
    return r;
}

std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("holab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_SUITE("tracegen")
{
    TEST_CASE("compute_sinr on hand-evaluated power sets")
    {
        auto s = compute_sinr(std::vector<double>{0.0, 0.0}, -200.0);
        CHECK(s[0] == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(s[1] == doctest::Approx(0.0).epsilon(1e-9));

        s = compute_sinr(std::vector<double>{10.0 * std::log10(2.0), 0.0, 0.0}, -200.0);
        CHECK(std::abs(s[0]) < 1e-9);

        s = compute_sinr(std::vector<double>{15.0, -300.0}, -110.0);
        CHECK(s[0] == doctest::Approx(125.0).epsilon(1e-9));
    }

    TEST_CASE("fourier_resample agrees with a naive DFT oracle")
    {
        CHECK(oracles::worst_resample_error(11, 64) < 1e-9);
    }

    TEST_CASE("fourier_resample keeps original samples and DC")
    {
        const auto c = fourier_resample(std::vector<double>{5, 5, 5, 5}, 3);
        REQUIRE(c.size() == 12);
        for (double v : c)
            CHECK(std::abs(v - 5.0) < 1e-9);

        const std::vector<double> x{1.0, -2.0, 3.5, 0.25, 7.0};
        CHECK(fourier_resample(x, 1) == x);
        const auto y = fourier_resample(x, 12);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::abs(y[i * 12] - x[i]) < 1e-9);

        CHECK_THROWS_AS(fourier_resample(x, 0), std::invalid_argument);
    }

    TEST_CASE("fourier_resample reproduces a periodic sinusoid below Nyquist")
    {
        const std::size_t n = 60;
        std::vector<double> x(n);
        auto f = [](double t) { return 3.0 * std::sin(2.0 * std::numbers::pi * 4.0 * t / 60.0 + 0.3); };
        for (std::size_t i = 0; i < n; ++i)
            x[i] = f(double(i));
        const auto y = fourier_resample(x, 12);
        for (std::size_t m = 0; m < y.size(); ++m)
            CHECK(std::abs(y[m] - f(double(m) / 12.0)) < 1e-6);
    }

    TEST_CASE("moving_average")
    {
        CHECK(moving_average(std::vector<double>{0, 0, 0, 3, 0, 0, 0}, 3) == std::vector<double>{0, 0, 1, 1, 1, 0, 0});
        const std::vector<double> x{1.0, 4.0, -2.0, 8.0};
        CHECK(moving_average(x, 1) == x);
        for (double v : moving_average(std::vector<double>(50, -81.5), 7))
            CHECK(v == -81.5);
        CHECK_THROWS_AS(moving_average(x, 0), std::invalid_argument);

        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(-120.0, -40.0);
        for (int trial = 0; trial < 200; ++trial)
        {
            std::vector<double> s(1 + rng() % 300);
            for (double& v : s)
                v = u(rng);
            const auto out = moving_average(s, 1 + rng() % 250);
            const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
            REQUIRE(out.size() == s.size());
            for (double v : out)
            {
                CHECK(v >= *lo);
                CHECK(v <= *hi);
            }
        }
    }

    TEST_CASE("generate_trace shape, symmetry and determinism")
    {
        RouteSpec route = straight_route(50.0, 180.0);
        route.waypoints = {{100.0, 400.0}, {900.0, 400.0}};
        RadioMap map = default_map();
        const auto t = generate_trace(map, route);
        CHECK(t.n_samples() == 1500);
        CHECK(t.n_bs() == 5);
        CHECK(generate_trace(map, route) == t);

        // UE exactly between two identical stations, no shadowing.
        RadioMap sym = two_bs_map(0.0);
        RouteSpec mid;
        mid.waypoints = {{500.0, 300.0}, {500.0, 700.0}};
        mid.duration_s = 1.0;
        const auto m = generate_trace(sym, mid);
        for (std::size_t i = 0; i < m.n_samples(); ++i)
            CHECK(m.rsrp_dbm(i, 0) == doctest::Approx(m.rsrp_dbm(i, 1)).epsilon(1e-12));
    }

    TEST_CASE("path loss decreases monotonically with distance when unshadowed")
    {
        RadioMap map = two_bs_map(0.0);
        RouteSpec route = straight_route(36.0, 10.0);
        route.waypoints = {{210.0, 500.0}, {790.0, 500.0}};
        const auto t = generate_trace(map, route);
        for (std::size_t i = 1; i < t.n_samples(); ++i)
        {
            CHECK(t.rsrp_dbm(i, 0) < t.rsrp_dbm(i - 1, 0));
            CHECK(t.rsrp_dbm(i, 1) > t.rsrp_dbm(i - 1, 1));
        }
    }

    TEST_CASE("SINR argmax follows RSRP argmax for two stations")
    {
        RadioMap map = two_bs_map(6.0);
        map.noise_floor_dbm = -250.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed)
        {
            const auto t = generate_trace(map, straight_route(50.0, 40.0, seed));
            for (std::size_t i = 0; i < t.n_samples(); ++i)
            {
                const bool rsrp0 = t.rsrp_dbm(i, 0) >= t.rsrp_dbm(i, 1);
                const bool sinr0 = t.sinr_db(i, 0) >= t.sinr_db(i, 1);
                CHECK(rsrp0 == sinr0);
            }
        }
    }

    TEST_CASE("generate_trace clamps the distance and rejects out-of-bounds routes")
    {
        RadioMap map = two_bs_map(0.0);
        RouteSpec through;
        through.waypoints = {{200.0, 500.0}, {200.0, 600.0}};
        through.duration_s = 0.24;
        const auto t = generate_trace(map, through);
        CHECK(std::isfinite(t.rsrp_dbm(0, 0)));
        CHECK(t.rsrp_dbm(0, 0) == doctest::Approx(15.0 - map.reference_loss_db));

        RouteSpec outside = straight_route();
        outside.waypoints.push_back({1500.0, 500.0});
        CHECK_THROWS_AS(generate_trace(map, outside), std::invalid_argument);
    }

    TEST_CASE("build_dataset split and resolution")
    {
        RadioMap map = default_map();
        RouteSetOptions opts;
        opts.n_routes = 15;
        opts.duration_s = 6.0;
        const auto routes = make_routes(map, 50.0, 4, opts);
        const auto traces = build_dataset(map, routes);
        REQUIRE(traces.size() == 15);
        std::size_t train = 0;
        for (const auto& t : traces)
        {
            train += t.split == Split::Train;
            CHECK(t.dt_s == doctest::Approx(0.01));
            CHECK(t.n_samples() == 600);
        }
        CHECK(train == 10);

        RadioTrace flat;
        flat.dt_s = 0.12;
        flat.rsrp_dbm = SampleMatrix(20, 2, -90.0);
        flat.sinr_db = SampleMatrix(20, 2, 0.0);
        const auto r = resample_trace(flat, 12, 2.0);
        CHECK(r.n_samples() == 240);
        for (double v : r.rsrp_dbm.data())
            CHECK(std::abs(v + 90.0) < 1e-9);
    }

    TEST_CASE("make_routes is deterministic and identical across speeds")
    {
        RadioMap map = default_map();
        const auto a = make_routes(map, 50.0, 9);
        const auto b = make_routes(map, 3.0, 9);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            REQUIRE(a[i].waypoints.size() == b[i].waypoints.size());
            for (std::size_t k = 0; k < a[i].waypoints.size(); ++k)
            {
                CHECK(a[i].waypoints[k].x == b[i].waypoints[k].x);
                CHECK(a[i].waypoints[k].y == b[i].waypoints[k].y);
                CHECK(map.bounds.contains(a[i].waypoints[k]));
            }
        }
        const auto c = make_routes(map, 50.0, 10);
        CHECK(c[0].seed != a[0].seed);
    }

    TEST_CASE("prefix and permute_columns")
    {
        RadioTrace t;
        t.dt_s = 0.01;
        t.rsrp_dbm = SampleMatrix(300, 3);
        t.sinr_db = SampleMatrix(300, 3);
        for (std::size_t i = 0; i < 300; ++i)
            for (std::size_t b = 0; b < 3; ++b)
            {
                t.rsrp_dbm(i, b) = double(i) + 1000.0 * double(b);
                t.sinr_db(i, b) = -double(b);
            }
        CHECK(prefix(t, 1.0).n_samples() == 100);
        CHECK(prefix(t, 10.0).n_samples() == 300);

        const std::vector<std::size_t> mapping{2, 0, 1};
        const auto p = permute_columns(t, mapping);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(p.rsrp_dbm(7, j) == t.rsrp_dbm(7, mapping[j]));
    }

    TEST_CASE("trace files round-trip bit-exactly")
    {
        const auto dir = temp_dir("trace_rt");
        RadioMap map = default_map();
        RouteSetOptions opts;
        opts.n_routes = 1;
        opts.duration_s = 3.0;
        auto t = build_dataset(map, make_routes(map, 30.0, 2, opts)).front();
        write_trace(dir / "a.csv", t);
        CHECK(read_trace(dir / "a.csv") == t);
    }

    TEST_CASE("trace reader rejects malformed files")
    {
        const auto dir = temp_dir("trace_bad");
        RadioTrace t;
        t.id = "x";
        t.dt_s = 0.01;
        t.rsrp_dbm = SampleMatrix(3, 2, -80.0);
        t.sinr_db = SampleMatrix(3, 2, 1.0);
        write_trace(dir / "ok.csv", t);

        auto rewrite = [&](const std::string& name, const std::string& body) {
            std::filesystem::copy_file(dir / "ok.json", dir / (name + ".json"));
            std::ofstream(dir / (name + ".csv")) << body;
            return dir / (name + ".csv");
        };
        auto message = [](const std::filesystem::path& p) {
            try
            {
                read_trace(p);
            }
            catch (const holab::ParseError& e)
            {
                return std::string(e.what());
            }
            return std::string();
        };

        const auto missing = rewrite("missing", "t,rsrp_0,rsrp_1\n0,-80,-80\n");
        CHECK(message(missing).find("column count mismatch") != std::string::npos);

        const auto ragged = rewrite("ragged", "t,rsrp_0,rsrp_1,sinr_0,sinr_1\n0,-80,-80,1,1\n0.01,-80,1,1\n");
        CHECK(message(ragged).find(":3:") != std::string::npos);

        const auto text = rewrite("text", "t,rsrp_0,rsrp_1,sinr_0,sinr_1\n0,-80,abc,1,1\n");
        CHECK(message(text).find("non-numeric") != std::string::npos);

        const auto spacing = rewrite("spacing", "t,rsrp_0,rsrp_1,sinr_0,sinr_1\n0,-80,-80,1,1\n0.02,-80,-80,1,1\n");
        CHECK(message(spacing).find("dt mismatch") != std::string::npos);

        const auto header = rewrite("header", "t,rsrp_0,rsrp_x,sinr_0,sinr_1\n");
        CHECK(message(header).find("malformed header") != std::string::npos);
    }
}
