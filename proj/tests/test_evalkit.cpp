#include "fixtures.hpp"

#include "holab/error.hpp"
#include "holab/evalkit.hpp"
#include "holab/ppo.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace holab::evalkit;
using holab::tracegen::SampleMatrix;

namespace {

SampleMatrix matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
{
    SampleMatrix m(rows, cols);
    auto it = values.begin();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(i, j) = *it++;
    return m;
}

EvalRow row(const std::string& policy, double speed, const std::string& id, double gamma, std::size_t hof = 0)
{
    EvalRow r;
    r.policy = policy;
    r.speed_kmh = speed;
    r.trace_id = id;
    r.gamma = gamma;
    r.hof = hof;
    return r;
}

} // namespace

TEST_SUITE("evalkit")
{
    TEST_CASE("gamma examples")
    {
        // Linear SINR 3 carries 2 bit/s/Hz, 1 carries 1.
        const auto all = matrix(2, 2, {3.0, 1.0, 3.0, 1.0});
        CHECK(gamma_metric(std::vector<double>{3.0, 3.0}, all) == doctest::Approx(1.0));
        CHECK(gamma_metric(std::vector<double>{3.0, 1.0}, all) == doctest::Approx(0.75));
        CHECK(gamma_metric(std::vector<double>{0.0, 0.0}, all) == 0.0);
        CHECK_THROWS_AS(gamma_metric(std::vector<double>{0.0, 0.0}, matrix(2, 2, {0, 0, 0, 0})), std::domain_error);
        CHECK_THROWS(gamma_metric(std::vector<double>{3.0}, all));
    }

    TEST_CASE("gamma is bounded and invariant to relabelling and tick order")
    {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(0.0, 50.0);
        for (int trial = 0; trial < 200; ++trial)
        {
            const std::size_t n = 5 + rng() % 50, b = 2 + rng() % 4;
            SampleMatrix all(n, b);
            std::vector<double> conn(n);
            for (std::size_t i = 0; i < n; ++i)
            {
                for (std::size_t j = 0; j < b; ++j)
                    all(i, j) = u(rng);
                conn[i] = rng() % 10 == 0 ? 0.0 : all(i, rng() % b);
            }
            const double g = gamma_metric(conn, all);
            CHECK(g >= 0.0);
            CHECK(g <= 1.0 + 1e-12);

            std::vector<std::size_t> cols(b), ticks(n);
            std::iota(cols.begin(), cols.end(), std::size_t{0});
            std::iota(ticks.begin(), ticks.end(), std::size_t{0});
            std::shuffle(cols.begin(), cols.end(), rng);
            std::shuffle(ticks.begin(), ticks.end(), rng);
            SampleMatrix shuffled(n, b);
            std::vector<double> conn_shuffled(n);
            for (std::size_t i = 0; i < n; ++i)
            {
                conn_shuffled[i] = conn[ticks[i]];
                for (std::size_t j = 0; j < b; ++j)
                    shuffled(i, j) = all(ticks[i], cols[j]);
            }
            CHECK(gamma_metric(conn_shuffled, shuffled) == doctest::Approx(g).epsilon(1e-12));
        }
    }

    TEST_CASE("summaries agree with the fixture schedules")
    {
        using holab::protocol::ProtocolConfig;
        using holab::protocol::run_baseline;
        const auto cross = fixtures::crossover(600, 100);
        const auto r1 = summarize("baseline", cross, run_baseline(cross, ProtocolConfig{}));
        CHECK(r1.ho == 1);
        CHECK(r1.hof == 0);
        CHECK(r1.pp == 0);
        CHECK(r1.outage_ticks == 4);
        CHECK(r1.gamma < 1.0);
        CHECK(r1.gamma > 0.9);

        const auto pp = fixtures::double_crossover(600, 100, 80);
        const auto r2 = summarize("baseline", pp, run_baseline(pp, ProtocolConfig{}));
        CHECK(r2.ho == 2);
        CHECK(r2.pp == 1);

        const auto rlf = fixtures::t310_expiry(250, 50);
        const auto r3 = summarize("baseline", rlf, run_baseline(rlf, ProtocolConfig{}));
        CHECK(r3.hof == 1);
        CHECK(r3.ho == 0);
        CHECK(r3.outage_ticks == 20);

        const auto dom = fixtures::dominant();
        CHECK(summarize("baseline", dom, run_baseline(dom, ProtocolConfig{})).gamma == doctest::Approx(1.0));
    }

    TEST_CASE("evaluation does not depend on the worker count")
    {
        std::mt19937_64 rng(4);
        std::vector<holab::tracegen::RadioTrace> traces;
        for (int i = 0; i < 6; ++i)
        {
            auto t = fixtures::random_walk(rng, 500, 3, -110.0, -70.0);
            t.id = "t" + std::to_string(i);
            t.speed_kmh = i % 2 ? 30.0 : 50.0;
            traces.push_back(std::move(t));
        }
        const auto agent = holab::ppo::Agent::create(3, 1);
        for (const Policy& p : {Policy{}, Policy{"agent", agent.actor}})
        {
            const auto serial = evaluate_policy(p, traces, holab::env::EnvConfig{}, 1);
            const auto parallel = evaluate_policy(p, traces, holab::env::EnvConfig{}, 4);
            CHECK(serial == parallel);
            REQUIRE(serial.size() == 6);
            for (std::size_t i = 0; i < 6; ++i)
            {
                CHECK(serial[i].trace_id == traces[i].id);
                CHECK(serial[i].policy == p.name);
                CHECK(serial[i].gamma >= 0.0);
                CHECK(serial[i].gamma <= 1.0);
            }
        }
        const auto wrong = holab::ppo::Agent::create(2, 1);
        CHECK_THROWS(evaluate_policy(Policy{"agent", wrong.actor}, traces, holab::env::EnvConfig{}, 2));
    }

    TEST_CASE("per-speed aggregation")
    {
        const EvalReport rep{row("a", 50, "x", 0.9, 1), row("a", 3, "y", 0.8), row("a", 50, "z", 0.7)};
        const auto s = by_speed(rep);
        REQUIRE(s.size() == 2);
        CHECK(s[0].speed_kmh == 3.0);
        CHECK(s[1].traces == 2);
        CHECK(s[1].mean_gamma == doctest::Approx(0.8));
        CHECK(s[1].hof == 1);
        CHECK(s[1].hof_free == 1);
    }

    TEST_CASE("comparison verdicts and key mismatches")
    {
        const EvalReport a{row("agent", 3, "p", 0.99), row("agent", 30, "q", 0.95), row("agent", 50, "r", 0.90)};
        const EvalReport b{row("baseline", 3, "p", 0.98), row("baseline", 30, "q", 0.95),
                           row("baseline", 50, "r", 0.93, 2)};
        const auto cmp = compare(a, b);
        REQUIRE(cmp.rows.size() == 3);
        CHECK(cmp.rows[0].verdict == "agent wins");
        CHECK(cmp.rows[1].verdict == "tie");
        CHECK(cmp.rows[2].verdict == "baseline wins");
        CHECK(cmp.rows[2].delta_hof == -2);
        CHECK(cmp.rows[0].delta_gamma == doctest::Approx(0.01));
        CHECK(format_comparison(cmp).find("agent wins") != std::string::npos);

        const EvalReport missing{row("baseline", 3, "p", 0.98), row("baseline", 50, "r", 0.93)};
        try
        {
            compare(a, missing);
            FAIL("expected a mismatch");
        }
        catch (const std::invalid_argument& e)
        {
            CHECK(std::string(e.what()).find("30") != std::string::npos);
        }
        const EvalReport other_ids{row("baseline", 3, "p", 0.98), row("baseline", 30, "s", 0.95),
                                   row("baseline", 50, "r", 0.93)};
        CHECK_THROWS_AS(compare(a, other_ids), std::invalid_argument);
        CHECK_THROWS_AS(compare(a, EvalReport{}), std::invalid_argument);
    }

    TEST_CASE("report files round-trip")
    {
        const auto dir = std::filesystem::temp_directory_path() / "holab_test_evalkit";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        EvalReport rep{row("baseline", 3, "test_3kmh_00", 1.0 / 3.0, 2), row("baseline", 50, "test_50kmh_01", 0.987)};
        rep[0].pp = 3;
        rep[1].ho = 17;
        rep[1].outage_ticks = 68;
        write_report_json(dir / "r.json", rep);
        CHECK(read_report_json(dir / "r.json") == rep);
        write_report_csv(dir / "r.csv", rep);
        std::ifstream csv(dir / "r.csv");
        std::string header;
        std::getline(csv, header);
        CHECK(header.find("gamma") != std::string::npos);

        const auto cmp = compare(rep, rep);
        write_comparison_json(dir / "c.json", cmp);
        write_comparison_csv(dir / "c.csv", cmp);
        CHECK(std::filesystem::file_size(dir / "c.json") > 0);

        std::ofstream(dir / "bad.json") << "[{\"policy\": 1}]";
        CHECK_THROWS_AS(read_report_json(dir / "bad.json"), holab::ParseError);
    }
}
