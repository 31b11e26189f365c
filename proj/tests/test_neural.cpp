#include "oracles.hpp"

#include "holab/neural.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace holab::neural;

TEST_SUITE("neural")
{
    TEST_CASE("architecture")
    {
        CHECK(architecture(7, 3) == std::vector<std::size_t>{7, 64, 128, 64, 3});
        const auto p = init(architecture(7, 3), 1, 0.01);
        CHECK(p.dims() == std::vector<std::size_t>{7, 64, 128, 64, 3});
        CHECK(p.parameter_count() == 7 * 64 + 64 + 64 * 128 + 128 + 128 * 64 + 64 + 64 * 3 + 3);
        CHECK_THROWS(init(std::vector<std::size_t>{4}, 1, 1.0));
    }

    TEST_CASE("orthogonal initialisation")
    {
        const auto p = init(architecture(9, 4), 5, 0.01);
        for (std::size_t l = 0; l < p.layers.size(); ++l)
        {
            const Matrix& w = p.layers[l].weights;
            const double gain = l + 1 == p.layers.size() ? 0.01 : std::sqrt(2.0);
            // Rows or columns are orthogonal with norm `gain`, whichever is fewer.
            const Matrix gram = w.rows() <= w.cols() ? Matrix(w * w.transpose()) : Matrix(w.transpose() * w);
            const Matrix expected = gain * gain * Matrix::Identity(gram.rows(), gram.cols());
            CHECK((gram - expected).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(p.layers[l].bias.isZero());
        }
        CHECK(init(architecture(9, 4), 5, 0.01) == p);
        CHECK_FALSE(init(architecture(9, 4), 6, 0.01) == p);
    }

    TEST_CASE("log-softmax")
    {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> n(0.0, 20.0);
        for (int trial = 0; trial < 200; ++trial)
        {
            Vector logits(2 + trial % 6);
            for (auto& v : logits)
                v = n(rng);
            const Vector lp = log_probs(logits);
            CHECK(std::abs(lp.array().exp().sum() - 1.0) < 1e-9);
            CHECK(lp.maxCoeff() <= 0.0);
        }
        Vector big(2);
        big << 1000.0, 0.0;
        CHECK(std::isfinite(log_probs(big)(1)));
    }

    TEST_CASE("forward matches batch columns")
    {
        const auto p = init(architecture(5, 3), 2, 1.0);
        Matrix x = Matrix::Random(5, 4);
        const Matrix y = forward_batch(p, x);
        for (int c = 0; c < 4; ++c)
            CHECK((forward(p, x.col(c)) - y.col(c)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK_THROWS(forward(p, Vector::Zero(4)));
    }

    TEST_CASE("backward agrees with central differences")
    {
        const auto r = oracles::check_backprop(11, 120);
        CHECK(r.nets == 120);
        CHECK(r.checks > 1000);
        CHECK(r.worst_rel < 1e-4);
    }

    TEST_CASE("gradient norm and scaling")
    {
        auto g = zeros_like(init(std::vector<std::size_t>{2, 2}, 1, 1.0));
        g.layers[0].weights(0, 0) = 3.0;
        g.layers[0].bias(1) = 4.0;
        CHECK(global_norm(g) == doctest::Approx(5.0));
        scale_in_place(g, 0.5);
        CHECK(global_norm(g) == doctest::Approx(2.5));
    }

    TEST_CASE("adaptive-moment step")
    {
        const auto start = init(architecture(3, 2), 4, 1.0);
        auto g = zeros_like(start);
        for (auto& layer : g.layers)
        {
            layer.weights.setConstant(0.3);
            layer.bias.setConstant(-2.0);
        }

        auto frozen = start;
        auto opt = OptState::for_params(frozen);
        adam_step(frozen, g, opt, 0.0);
        CHECK(frozen == start);
        CHECK(opt.step == 1);

        // A constant gradient moves every parameter by ~lr per step.
        auto p = start;
        opt = OptState::for_params(p);
        const double lr = 1e-3;
        for (int k = 0; k < 50; ++k)
        {
            const auto before = p;
            adam_step(p, g, opt, lr);
            const double dw = p.layers[1].weights(0, 0) - before.layers[1].weights(0, 0);
            const double db = p.layers[1].bias(0) - before.layers[1].bias(0);
            CHECK(dw == doctest::Approx(-lr).epsilon(1e-4));
            CHECK(db == doctest::Approx(lr).epsilon(1e-4));
        }
        auto bad = zeros_like(init(architecture(4, 2), 1, 1.0));
        CHECK_THROWS(adam_step(p, bad, opt, lr));
    }

    TEST_CASE("json round-trip is bit-exact")
    {
        auto p = init(architecture(5, 3), 9, 0.01);
        p.layers[0].bias(0) = 1.0 / 3.0;
        const auto back = params_from_json(nlohmann::json::parse(to_json(p).dump()));
        CHECK(back == p);

        auto opt = OptState::for_params(p);
        auto g = zeros_like(p);
        g.layers[2].weights.setConstant(std::acos(-1.0));
        adam_step(p, g, opt, 1e-3);
        CHECK(opt_from_json(nlohmann::json::parse(to_json(opt).dump())) == opt);

        CHECK_THROWS(params_from_json(nlohmann::json::parse("{\"layers\": 3}")));
    }
}
