#pragma once

#include "fixtures.hpp"

#include "holab/env.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

struct EnvPropertyReport
{
    std::size_t steps = 0;
    std::size_t obs_violations = 0;
    std::size_t reward_violations = 0;
    std::size_t equivariance_violations = 0;
    std::size_t outage_decisions = 0;
    std::string first_failure;

    bool ok() const { return obs_violations + reward_violations + equivariance_violations + outage_decisions == 0; }
};

/// Random traces and random policies. Each episode runs twice, unshuffled
/// and under a random relabelling, feeding the relabelled run the mapped
/// actions; observations must be permutations and rewards equal up to summation order.
inline EnvPropertyReport check_env_properties(std::uint64_t seed, std::size_t min_steps)
{
    using namespace holab::env;
    std::mt19937_64 rng(seed);
    EnvPropertyReport rep;
    auto fail = [&rep](std::size_t& counter, const std::string& what) {
        ++counter;
        if (rep.first_failure.empty())
            rep.first_failure = what;
    };

    while (rep.steps < min_steps)
    {
        const std::size_t n_bs = 2 + rng() % 4;
        auto trace = std::make_shared<const RadioTrace>(random_walk(rng, 400 + rng() % 400, n_bs, -115.0, -60.0));
        EnvConfig cfg;
        cfg.c = std::uniform_real_distribution<double>(0.6, 0.95)(rng);
        cfg.reset_on_hof = rng() % 2;
        cfg.reset_on_pp = rng() % 2;

        std::vector<std::size_t> identity(n_bs);
        for (std::size_t b = 0; b < n_bs; ++b)
            identity[b] = b;
        std::vector<std::size_t> sigma = identity;
        std::shuffle(sigma.begin(), sigma.end(), rng);
        // Position of original BS b in the relabelled episode.
        std::vector<std::size_t> inverse(n_bs);
        for (std::size_t j = 0; j < n_bs; ++j)
            inverse[sigma[j]] = j;

        HandoverEnv plain(cfg);
        HandoverEnv shuffled(cfg);
        Observation a = plain.reset(trace, identity);
        Observation b = shuffled.reset(trace, sigma);
        const double switch_prob = std::uniform_real_distribution<double>(0.0, 0.2)(rng);

        while (!plain.done())
        {
            for (const Observation* o : {&a, &b})
            {
                bool in_range = o->flatten().size() == 2 * n_bs + 1;
                std::size_t ones = 0;
                for (double v : o->flatten())
                    in_range = in_range && v >= 0.0 && v <= 1.0;
                for (double v : o->one_hot)
                    ones += v == 1.0;
                if (!in_range || ones != 1)
                    fail(rep.obs_violations, "observation outside [0,1]^(2B+1) or not one-hot");
            }
            for (std::size_t j = 0; j < n_bs; ++j)
                if (b.one_hot[j] != a.one_hot[sigma[j]] || std::abs(b.rsrq_norm[j] - a.rsrq_norm[sigma[j]]) > 1e-12)
                    fail(rep.equivariance_violations, "relabelled observation is not a permutation");
            if (a.s_add != b.s_add)
                fail(rep.equivariance_violations, "s_add differs under relabelling");

            for (const HandoverEnv* e : {&plain, &shuffled})
                if (!holab::protocol::accepts_decision(e->session().state()))
                    fail(rep.outage_decisions, "decision point during handover execution or recovery");

            std::size_t action = 0;
            const std::size_t serving = *plain.session().state().serving_bs;
            if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < switch_prob)
                action = rng() % n_bs;
            else
                action = serving;

            const StepResult ra = plain.step(action);
            const StepResult rb = shuffled.step(inverse[action]);
            ++rep.steps;
            for (const StepResult* r : {&ra, &rb})
                if (r->reward < -2.0 * cfg.c - 1e-12 || r->reward > 1.0 + cfg.c + 1e-12)
                    fail(rep.reward_violations, "reward outside [-2C, 1+C]");
            if (std::abs(ra.reward - rb.reward) > 1e-12 || ra.terminated != rb.terminated || ra.info.hof != rb.info.hof ||
                ra.info.pp != rb.info.pp || plain.done() != shuffled.done())
                fail(rep.equivariance_violations, "relabelled run diverged");
            if (ra.terminated && !((ra.info.hof && cfg.reset_on_hof) || (ra.info.pp && cfg.reset_on_pp)))
                fail(rep.reward_violations, "termination without an active reset rule");
            if (plain.done() || shuffled.done())
                break;
            a = ra.obs;
            b = rb.obs;
        }
    }
    return rep;
}

} // namespace fixtures
