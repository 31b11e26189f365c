#pragma once

#include "holab/protocol.hpp"
#include "holab/tracegen.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace holab::env {

using protocol::Millis;

/// Agent input: serving-BS one-hot, clipped RSRQ per BS and the
/// ping-pong-possible flag. Flattened length is 2B + 1.
struct Observation
{
    std::vector<double> one_hot;
    std::vector<double> rsrq_norm;
    double s_add = 0.0;

    std::size_t n_bs() const { return one_hot.size(); }
    std::vector<double> flatten() const;

    bool operator==(const Observation&) const = default;
};

struct StepInfo
{
    bool hof = false;
    bool pp = false;
    bool ho_started = false;
    /// The trace ran out before the next decision point.
    bool truncated = false;
    /// Ticks simulated between the two decision points.
    std::size_t skipped_ticks = 0;
};

struct StepResult
{
    Observation obs;
    double reward = 0.0;
    bool terminated = false;
    StepInfo info;
};

enum class BonusMode
{
    /// +C on every decision point while attached to the strongest BS.
    WhileStrongest,
    /// +C only on the first decision point after a completed handover.
    OnHandover,
};

struct EnvConfig
{
    double c = 0.9405;
    protocol::ProtocolConfig protocol;
    bool reset_on_hof = true;
    bool reset_on_pp = false;
    /// Spacing of decision points; a multiple of the protocol tick.
    Millis decision_dt_ms = 10;
    BonusMode bonus = BonusMode::WhileStrongest;

    void validate() const;
};

/// 1 at >= 10 dB, 0 at <= -10 dB, linear in between.
double rsrq_norm(double rsrq_db);

Observation build_state(std::size_t serving_bs, std::span<const double> rsrp_mw, Millis t,
                        std::optional<Millis> last_ho_time, Millis mts);

enum class RewardCase
{
    RlfRecovery,
    PingPong,
    LowSinr,
    Strongest,
    Other,
};

struct RewardContext
{
    bool rlf_recovery = false;
    bool pp_detected = false;
    bool sinr_below_q_out = false;
    bool on_strongest = false;
    double rsrq_norm = 0.0;
};

/// Highest-priority case that applies: RLF > PP > SINR < Q_out > strongest > other.
RewardCase classify(const RewardContext& context);
double reward(const RewardContext& context, double c);

/// Tick-accurate handover environment. Decision points are the ticks on the
/// decision grid on which the link is idle; handover execution and RLF
/// recovery are skipped.
class HandoverEnv
{
  public:
    explicit HandoverEnv(EnvConfig cfg);

    /// Starts an episode at t = 0. With `shuffle_mapping`, BS columns are
    /// relabelled by a permutation drawn from `seed` for the whole episode.
    Observation reset(std::shared_ptr<const tracegen::RadioTrace> trace, std::uint64_t seed, bool shuffle_mapping);

    /// Starts an episode with an explicit column mapping (column j of the
    /// episode is column mapping[j] of the trace).
    Observation reset(std::shared_ptr<const tracegen::RadioTrace> trace, std::vector<std::size_t> mapping);

    /// Back to t = 0 on the same trace and mapping.
    Observation restart();

    StepResult step(std::size_t action);

    bool done() const { return done_; }
    std::size_t n_bs() const;
    std::size_t obs_size() const { return 2 * n_bs() + 1; }
    const std::vector<std::size_t>& mapping() const { return mapping_; }
    const EnvConfig& config() const { return cfg_; }
    const protocol::LinkSession& session() const { return *session_; }
    const Observation& observation() const { return obs_; }

  private:
    Observation observe() const;
    bool decision_due() const;
    double decision_reward(bool rlf, bool pp, bool completed) const;

    EnvConfig cfg_;
    std::shared_ptr<const tracegen::RadioTrace> source_;
    std::shared_ptr<const tracegen::RadioTrace> episode_trace_;
    std::vector<std::size_t> mapping_;
    std::optional<protocol::LinkSession> session_;
    Observation obs_;
    bool done_ = true;
};

} // namespace holab::env
