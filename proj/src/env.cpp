#include "holab/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace holab::env {

using protocol::EventKind;

std::vector<double> Observation::flatten() const
{
    std::vector<double> flat;
    flat.reserve(2 * one_hot.size() + 1);
    flat.insert(flat.end(), one_hot.begin(), one_hot.end());
    flat.insert(flat.end(), rsrq_norm.begin(), rsrq_norm.end());
    flat.push_back(s_add);
    return flat;
}

void EnvConfig::validate() const
{
    if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("env config: C must be positive");
    protocol.validate();
    if (decision_dt_ms <= 0 || decision_dt_ms % protocol.dt_ms != 0)
        throw std::invalid_argument("env config: decision interval must be a positive multiple of the protocol tick");
}

double rsrq_norm(double rsrq_db)
{
    if (rsrq_db >= 10.0)
        return 1.0;
    if (rsrq_db <= -10.0)
        return 0.0;
    return (rsrq_db + 10.0) / 20.0;
}

Observation build_state(std::size_t serving_bs, std::span<const double> rsrp_mw, Millis t,
                        std::optional<Millis> last_ho_time, Millis mts)
{
    if (serving_bs >= rsrp_mw.size())
        throw std::out_of_range("build_state: serving BS out of range");
    Observation obs;
    obs.one_hot.assign(rsrp_mw.size(), 0.0);
    obs.one_hot[serving_bs] = 1.0;
    obs.rsrq_norm.resize(rsrp_mw.size());
    for (std::size_t b = 0; b < rsrp_mw.size(); ++b)
        obs.rsrq_norm[b] = rsrq_norm(10.0 * std::log10(protocol::pseudo_rsrq(rsrp_mw, b)));
    obs.s_add = last_ho_time && t - *last_ho_time < mts ? 1.0 : 0.0;
    return obs;
}

RewardCase classify(const RewardContext& context)
{
    if (context.rlf_recovery)
        return RewardCase::RlfRecovery;
    if (context.pp_detected)
        return RewardCase::PingPong;
    if (context.sinr_below_q_out)
        return RewardCase::LowSinr;
    if (context.on_strongest)
        return RewardCase::Strongest;
    return RewardCase::Other;
}

double reward(const RewardContext& context, double c)
{
    switch (classify(context))
    {
    case RewardCase::RlfRecovery: return -2.0 * c;
    case RewardCase::PingPong: return -c;
    case RewardCase::LowSinr: return -c;
    case RewardCase::Strongest: return context.rsrq_norm + c;
    case RewardCase::Other: return context.rsrq_norm;
    }
    return 0.0;
}

HandoverEnv::HandoverEnv(EnvConfig cfg) : cfg_(cfg)
{
    cfg_.validate();
}

std::size_t HandoverEnv::n_bs() const
{
    return source_ ? source_->n_bs() : 0;
}

Observation HandoverEnv::reset(std::shared_ptr<const tracegen::RadioTrace> trace, std::uint64_t seed,
                               bool shuffle_mapping)
{
    if (!trace)
        throw std::invalid_argument("reset: null trace");
    std::vector<std::size_t> mapping(trace->n_bs());
    std::iota(mapping.begin(), mapping.end(), std::size_t{0});
    if (shuffle_mapping)
    {
        std::mt19937_64 rng(seed);
        std::shuffle(mapping.begin(), mapping.end(), rng);
    }
    return reset(std::move(trace), std::move(mapping));
}

Observation HandoverEnv::reset(std::shared_ptr<const tracegen::RadioTrace> trace, std::vector<std::size_t> mapping)
{
    if (!trace)
        throw std::invalid_argument("reset: null trace");
    std::vector<std::size_t> sorted = mapping;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        if (sorted[i] != i)
            throw std::invalid_argument("reset: mapping is not a permutation");
    if (mapping.size() != trace->n_bs())
        throw std::invalid_argument("reset: mapping size mismatch");

    const bool identity = std::is_sorted(mapping.begin(), mapping.end());
    source_ = trace;
    episode_trace_ = identity ? trace : std::make_shared<const tracegen::RadioTrace>(
                                            tracegen::permute_columns(*trace, mapping));
    mapping_ = std::move(mapping);
    return restart();
}

Observation HandoverEnv::restart()
{
    if (!episode_trace_)
        throw std::logic_error("restart: no trace loaded");
    session_.emplace(episode_trace_, cfg_.protocol);
    done_ = false;
    while (true)
    {
        session_->begin_tick();
        if (decision_due())
            break;
        session_->end_tick();
        if (session_->finished())
        {
            done_ = true;
            break;
        }
    }
    obs_ = observe();
    return obs_;
}

Observation HandoverEnv::observe() const
{
    const auto& s = *session_;
    // After the last tick the most recent sample describes the link.
    const std::size_t row = s.finished() ? s.tick() - 1 : s.tick();
    const auto rsrp_dbm = s.trace().rsrp_dbm.row(row);
    std::vector<double> rsrp_mw(rsrp_dbm.size());
    std::transform(rsrp_dbm.begin(), rsrp_dbm.end(), rsrp_mw.begin(), [](double p) { return std::pow(10.0, p / 10.0); });
    const auto& state = s.state();
    if (!state.serving_bs)
    {
        Observation obs = build_state(0, rsrp_mw, s.now_ms(), std::nullopt, cfg_.protocol.mts_ms);
        obs.one_hot[0] = 0.0;
        return obs;
    }
    return build_state(*state.serving_bs, rsrp_mw, static_cast<Millis>(row) * cfg_.protocol.dt_ms,
                       state.last_ho_time_ms, cfg_.protocol.mts_ms);
}

bool HandoverEnv::decision_due() const
{
    return session_->at_decision_point() && session_->now_ms() % cfg_.decision_dt_ms == 0;
}

double HandoverEnv::decision_reward(bool rlf, bool pp, bool completed) const
{
    const auto& s = *session_;
    const std::size_t row = s.finished() ? s.tick() - 1 : s.tick();
    const auto& state = s.state();
    RewardContext ctx;
    ctx.rlf_recovery = rlf || !state.serving_bs;
    ctx.pp_detected = pp;
    if (state.serving_bs)
    {
        const std::size_t serving = *state.serving_bs;
        const auto rsrp = s.trace().rsrp_dbm.row(row);
        ctx.sinr_below_q_out = s.trace().sinr_db(row, serving) < cfg_.protocol.q_out_db;
        ctx.on_strongest = protocol::strongest_bs(rsrp) == serving;
        if (cfg_.bonus == BonusMode::OnHandover && !completed)
            ctx.on_strongest = false;
        ctx.rsrq_norm = obs_.rsrq_norm[serving];
    }
    return reward(ctx, cfg_.c);
}

StepResult HandoverEnv::step(std::size_t action)
{
    if (done_)
        throw std::logic_error("step: episode is over, call reset()");
    if (action >= n_bs())
        throw std::out_of_range("step: action out of range");

    auto& s = *session_;
    const std::size_t first_event = s.events().size();
    StepResult result;
    if (action != *s.state().serving_bs)
    {
        s.trigger_handover(action);
        result.info.ho_started = true;
    }
    s.end_tick();
    while (true)
    {
        if (s.finished())
        {
            result.info.truncated = true;
            break;
        }
        s.begin_tick();
        if (decision_due())
            break;
        s.end_tick();
        ++result.info.skipped_ticks;
    }

    bool completed = false;
    for (std::size_t i = first_event; i < s.events().size(); ++i)
    {
        switch (s.events()[i].kind)
        {
        case EventKind::Hof: result.info.hof = true; break;
        case EventKind::PingPong: result.info.pp = true; break;
        case EventKind::HoComplete: completed = true; break;
        default: break;
        }
    }

    obs_ = observe();
    result.obs = obs_;
    result.reward = decision_reward(result.info.hof, result.info.pp, completed);
    result.terminated = (result.info.hof && cfg_.reset_on_hof) || (result.info.pp && cfg_.reset_on_pp);
    done_ = result.terminated || result.info.truncated;
    return result;
}

} // namespace holab::env
