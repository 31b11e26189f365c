#pragma once

#include "holab/tracegen.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace holab::protocol {

using Millis = std::int64_t;
using BsIndex = std::optional<std::size_t>;

/// 3GPP handover and link-monitoring parameters. Durations are in ms and
/// must be positive multiples of `dt_ms`.
struct ProtocolConfig
{
    double a2_threshold_dbm = -80.0;
    double a2_hysteresis_db = 1.0;
    double a3_hysteresis_db = 1.0;
    double a3_offset_db = 2.0;
    Millis ttt_ms = 160;
    Millis ho_prep_ms = 50;
    Millis ho_exec_ms = 40;
    Millis t310_ms = 1000;
    double q_out_db = -8.0;
    double q_in_db = -6.0;
    Millis rlf_recovery_ms = 200;
    Millis mts_ms = 1000;
    Millis dt_ms = 10;

    void validate() const;
};

enum class Phase
{
    Idle,
    TttRunning,
    HoPrep,
    HoExec,
    RlfRecovery,
};

const char* to_string(Phase phase);

struct LinkMonitorState
{
    BsIndex serving_bs;
    Phase phase = Phase::Idle;
    Millis phase_elapsed_ms = 0;
    bool t310_running = false;
    Millis t310_elapsed_ms = 0;
    BsIndex target_bs;
    std::optional<Millis> last_ho_time_ms;
    BsIndex prev_serving_bs;
    // Set on the tick a handover completes; the next monitor step checks the
    // new cell's SINR and clears it.
    bool ho_completed = false;

    static LinkMonitorState attached_to(std::size_t bs);

    /// Throws std::logic_error naming the first violated invariant.
    void check_invariants(const ProtocolConfig& cfg) const;
};

/// True while the UE has no usable link (zero data rate).
bool in_outage(const LinkMonitorState& state);

/// True when the state machine accepts a handover decision this tick.
bool accepts_decision(const LinkMonitorState& state);

enum class EventKind
{
    HoTriggered,
    HoComplete,
    Hof,
    PingPong,
    RlfRecoveryStart,
    RlfRecoveryEnd,
};

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

struct EventRecord
{
    Millis t_ms = 0;
    EventKind kind = EventKind::HoTriggered;
    BsIndex from;
    BsIndex to;

    bool operator==(const EventRecord&) const = default;
};

using EventLog = std::vector<EventRecord>;

std::size_t count_events(const EventLog& log, EventKind kind);

/// RSRP_b / sum_{i != b} RSRP_i on linear powers.
double pseudo_rsrq(std::span<const double> rsrp_mw, std::size_t b);

/// One tick of the A2/A3 + time-to-trigger logic. Returns true when a
/// handover was triggered (the state is then in HoPrep).
bool step_a2a3(LinkMonitorState& state, std::span<const double> rsrp_dbm, const ProtocolConfig& cfg, Millis now,
               EventLog& log);

/// Latches `target` and enters handover preparation.
void begin_handover(LinkMonitorState& state, std::size_t target, Millis now, EventLog& log);

/// T310 / handover-failure monitor. Must run once per tick, before the
/// handover phases are advanced.
void step_monitor(LinkMonitorState& state, double sinr_serving_db, const ProtocolConfig& cfg, Millis now,
                  EventLog& log);

/// Advances HoPrep, HoExec or RlfRecovery by one tick. Recovery re-attaches
/// to the strongest base station in `rsrp_dbm`.
void advance_handover(LinkMonitorState& state, std::span<const double> rsrp_dbm, const ProtocolConfig& cfg, Millis now,
                      EventLog& log);

bool detect_pp(std::optional<Millis> last_ho_time, BsIndex prev_serving_bs, std::size_t new_target, Millis now,
               const ProtocolConfig& cfg);

std::size_t strongest_bs(std::span<const double> rsrp_dbm);

struct TimelineEntry
{
    BsIndex serving_bs;
    /// SINR of the serving link, -inf while in outage.
    double sinr_db = 0.0;

    bool operator==(const TimelineEntry&) const = default;
};

struct RunResult
{
    EventLog events;
    std::vector<TimelineEntry> timeline;
};

/// Tick driver shared by the 3GPP baseline and the learning environment.
/// Each tick is: begin_tick() (monitor, then phase advancement), an optional
/// decision while accepts_decision() holds, then end_tick().
class LinkSession
{
  public:
    LinkSession(std::shared_ptr<const tracegen::RadioTrace> trace, ProtocolConfig cfg);

    bool finished() const { return tick_ >= trace_->n_samples(); }
    std::size_t tick() const { return tick_; }
    Millis now_ms() const { return static_cast<Millis>(tick_) * cfg_.dt_ms; }

    void begin_tick();
    bool at_decision_point() const { return accepts_decision(state_); }
    void end_tick();

    void trigger_handover(std::size_t target);
    void run_a2a3();

    std::span<const double> rsrp_dbm() const { return trace_->rsrp_dbm.row(tick_); }
    std::span<const double> sinr_db() const { return trace_->sinr_db.row(tick_); }

    const LinkMonitorState& state() const { return state_; }
    const ProtocolConfig& config() const { return cfg_; }
    const tracegen::RadioTrace& trace() const { return *trace_; }
    const EventLog& events() const { return events_; }
    const std::vector<TimelineEntry>& timeline() const { return timeline_; }
    RunResult result() const { return {events_, timeline_}; }

  private:
    std::shared_ptr<const tracegen::RadioTrace> trace_;
    ProtocolConfig cfg_;
    LinkMonitorState state_;
    std::size_t tick_ = 0;
    bool tick_open_ = false;
    EventLog events_;
    std::vector<TimelineEntry> timeline_;
};

/// 3GPP baseline over a whole trace sampled at cfg.dt_ms.
RunResult run_baseline(const tracegen::RadioTrace& trace, const ProtocolConfig& cfg);

/// JSON lines {"t_ms", "kind", "from", "to"}; missing BS is null.
void write_event_log(std::ostream& out, const EventLog& log);
EventLog read_event_log(std::istream& in);

} // namespace holab::protocol
