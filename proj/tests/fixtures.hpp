#pragma once

#include "holab/tracegen.hpp"

#include <cstddef>
#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using holab::tracegen::RadioTrace;
using holab::tracegen::SampleMatrix;

/// Trace on the 10 ms grid whose row i is produced by `rsrp(i)` / `sinr(i)`.
inline RadioTrace make_trace(std::size_t n, std::size_t n_bs,
                             const std::function<std::vector<double>(std::size_t)>& rsrp,
                             const std::function<std::vector<double>(std::size_t)>& sinr,
                             const std::string& id = "fixture", double speed_kmh = 50.0)
{
    RadioTrace t;
    t.id = id;
    t.dt_s = 0.01;
    t.speed_kmh = speed_kmh;
    t.rsrp_dbm = SampleMatrix(n, n_bs);
    t.sinr_db = SampleMatrix(n, n_bs);
    for (std::size_t i = 0; i < n; ++i)
    {
        const auto r = rsrp(i);
        const auto s = sinr(i);
        for (std::size_t b = 0; b < n_bs; ++b)
        {
            t.rsrp_dbm(i, b) = r[b];
            t.sinr_db(i, b) = s[b];
        }
    }
    return t;
}

/// BS 0 dominant throughout.
inline RadioTrace dominant(std::size_t n = 500)
{
    return make_trace(
        n, 2, [](std::size_t) { return std::vector<double>{-70.0, -90.0}; },
        [](std::size_t) { return std::vector<double>{20.0, -20.0}; }, "dominant");
}

/// Step crossover from BS 0 to BS 1 at tick `c`.
inline RadioTrace crossover(std::size_t n, std::size_t c)
{
    return make_trace(
        n, 2,
        [c](std::size_t i) { return i < c ? std::vector<double>{-85.0, -92.0} : std::vector<double>{-92.0, -85.0}; },
        [c](std::size_t i) { return i < c ? std::vector<double>{7.0, -7.0} : std::vector<double>{-7.0, 7.0}; },
        "crossover");
}

/// BS 0 strong enough to keep A2 false, its SINR at -9 dB from tick `s`.
inline RadioTrace t310_expiry(std::size_t n, std::size_t s)
{
    return make_trace(
        n, 2, [](std::size_t) { return std::vector<double>{-70.0, -75.0}; },
        [s](std::size_t i) { return i < s ? std::vector<double>{5.0, 0.0} : std::vector<double>{-9.0, 0.0}; },
        "t310");
}

/// Crossover at tick `c`; the serving link (BS 0) degrades below Q_out 200 ms
/// later while the handover is still being prepared.
inline RadioTrace hof_during_prep(std::size_t n, std::size_t c)
{
    return make_trace(
        n, 2,
        [c](std::size_t i) { return i < c ? std::vector<double>{-85.0, -92.0} : std::vector<double>{-92.0, -85.0}; },
        [c](std::size_t i) {
            if (i < c)
                return std::vector<double>{7.0, -7.0};
            if (i < c + 20)
                return std::vector<double>{0.0, 3.0};
            return std::vector<double>{-9.0, 3.0};
        },
        "hof_prep");
}

/// Crossover to BS 1 at tick `c`, back to BS 0 at tick `c + back`.
inline RadioTrace double_crossover(std::size_t n, std::size_t c, std::size_t back)
{
    auto bs1 = [c, back](std::size_t i) { return i >= c && i < c + back; };
    return make_trace(
        n, 2,
        [bs1](std::size_t i) { return bs1(i) ? std::vector<double>{-92.0, -85.0} : std::vector<double>{-85.0, -92.0}; },
        [bs1](std::size_t i) { return bs1(i) ? std::vector<double>{-7.0, 7.0} : std::vector<double>{7.0, -7.0}; },
        "double_crossover");
}

/// Two BSs trading dominance every `period` ticks with smooth ramps.
inline RadioTrace alternating(std::size_t n, std::size_t period)
{
    auto level = [period](std::size_t i) {
        const double phase = static_cast<double>(i % (2 * period)) / static_cast<double>(period);
        // Triangle wave in [-1, 1]: positive favours BS 0.
        return phase < 1.0 ? 1.0 - 2.0 * phase : -3.0 + 2.0 * phase;
    };
    return make_trace(
        n, 2,
        [level](std::size_t i) {
            const double d = 8.0 * level(i);
            return std::vector<double>{-86.0 + d, -86.0 - d};
        },
        [level](std::size_t i) {
            const double d = 16.0 * level(i);
            return std::vector<double>{d, -d};
        },
        "alternating");
}

/// Walk step reflected at the bounds, so equal values stay improbable.
inline double reflect(double v, double lo, double hi)
{
    if (v > hi)
        return 2.0 * hi - v;
    if (v < lo)
        return 2.0 * lo - v;
    return v;
}

/// Bounded random walks for RSRP and SINR.
inline RadioTrace random_walk(std::mt19937_64& rng, std::size_t n, std::size_t n_bs, double rsrp_lo, double rsrp_hi)
{
    std::uniform_real_distribution<double> jump(-3.0, 3.0);
    std::uniform_real_distribution<double> start(rsrp_lo, rsrp_hi);
    std::vector<double> rsrp(n_bs), sinr(n_bs);
    for (std::size_t b = 0; b < n_bs; ++b)
    {
        rsrp[b] = start(rng);
        sinr[b] = jump(rng) * 4.0;
    }
    std::vector<std::vector<double>> rows_r, rows_s;
    for (std::size_t i = 0; i < n; ++i)
    {
        for (std::size_t b = 0; b < n_bs; ++b)
        {
            rsrp[b] = reflect(rsrp[b] + jump(rng), rsrp_lo, rsrp_hi);
            sinr[b] = reflect(sinr[b] + jump(rng), -20.0, 20.0);
        }
        rows_r.push_back(rsrp);
        rows_s.push_back(sinr);
    }
    return make_trace(
        n, n_bs, [&](std::size_t i) { return rows_r[i]; }, [&](std::size_t i) { return rows_s[i]; }, "random");
}

} // namespace fixtures
