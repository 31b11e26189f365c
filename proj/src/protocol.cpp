#include "holab/protocol.hpp"

#include "holab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace holab::protocol {

namespace {

void require_multiple(Millis value, Millis dt, const char* name)
{
    if (value <= 0 || value % dt != 0)
        throw std::invalid_argument(std::string("protocol config: ") + name + " must be a positive multiple of dt");
}

void trigger_hof(LinkMonitorState& state, Millis now, EventLog& log)
{
    log.push_back({now, EventKind::Hof, state.serving_bs, state.target_bs});
    log.push_back({now, EventKind::RlfRecoveryStart, state.serving_bs, std::nullopt});
    state.serving_bs.reset();
    state.target_bs.reset();
    state.phase = Phase::RlfRecovery;
    state.phase_elapsed_ms = 0;
    state.t310_running = false;
    state.t310_elapsed_ms = 0;
    state.ho_completed = false;
    // The re-established connection starts a fresh ping-pong history.
    state.last_ho_time_ms.reset();
    state.prev_serving_bs.reset();
}

void reset_t310(LinkMonitorState& state)
{
    state.t310_running = false;
    state.t310_elapsed_ms = 0;
}

nlohmann::json bs_to_json(BsIndex bs)
{
    return bs ? nlohmann::json(*bs) : nlohmann::json(nullptr);
}

BsIndex bs_from_json(const nlohmann::json& j)
{
    if (j.is_null())
        return std::nullopt;
    return j.get<std::size_t>();
}

} // namespace

void ProtocolConfig::validate() const
{
    if (dt_ms <= 0)
        throw std::invalid_argument("protocol config: dt must be positive");
    require_multiple(ttt_ms, dt_ms, "ttt");
    require_multiple(ho_prep_ms, dt_ms, "ho_prep");
    require_multiple(ho_exec_ms, dt_ms, "ho_exec");
    require_multiple(t310_ms, dt_ms, "t310");
    require_multiple(rlf_recovery_ms, dt_ms, "rlf_recovery");
    require_multiple(mts_ms, dt_ms, "mts");
    if (!(q_in_db > q_out_db))
        throw std::invalid_argument("protocol config: q_in must exceed q_out");
}

const char* to_string(Phase phase)
{
    switch (phase)
    {
    case Phase::Idle: return "IDLE";
    case Phase::TttRunning: return "TTT_RUNNING";
    case Phase::HoPrep: return "HO_PREP";
    case Phase::HoExec: return "HO_EXEC";
    case Phase::RlfRecovery: return "RLF_RECOVERY";
    }
    return "?";
}

LinkMonitorState LinkMonitorState::attached_to(std::size_t bs)
{
    LinkMonitorState state;
    state.serving_bs = bs;
    return state;
}

void LinkMonitorState::check_invariants(const ProtocolConfig& cfg) const
{
    auto fail = [](const char* what) { throw std::logic_error(std::string("link monitor invariant: ") + what); };
    Millis limit = 0;
    switch (phase)
    {
    case Phase::Idle: limit = 0; break;
    case Phase::TttRunning: limit = cfg.ttt_ms; break;
    case Phase::HoPrep: limit = cfg.ho_prep_ms; break;
    case Phase::HoExec: limit = cfg.ho_exec_ms; break;
    case Phase::RlfRecovery: limit = cfg.rlf_recovery_ms; break;
    }
    if (phase_elapsed_ms < 0 || phase_elapsed_ms > limit)
        fail("phase_elapsed exceeds phase duration");
    if (t310_elapsed_ms < 0 || t310_elapsed_ms > cfg.t310_ms)
        fail("t310_elapsed exceeds t310");
    if (!t310_running && t310_elapsed_ms != 0)
        fail("stopped T310 with elapsed time");
    if (target_bs && target_bs == serving_bs)
        fail("target equals serving");
    if (serving_bs.has_value() == (phase == Phase::RlfRecovery))
        fail("serving_bs must be NONE exactly during RLF recovery");
    if ((phase == Phase::HoPrep || phase == Phase::HoExec) != target_bs.has_value())
        fail("target set outside handover");
}

bool in_outage(const LinkMonitorState& state)
{
    return state.phase == Phase::HoExec || state.phase == Phase::RlfRecovery;
}

bool accepts_decision(const LinkMonitorState& state)
{
    return state.phase == Phase::Idle || state.phase == Phase::TttRunning;
}

std::string_view to_string(EventKind kind)
{
    switch (kind)
    {
    case EventKind::HoTriggered: return "HO_TRIGGERED";
    case EventKind::HoComplete: return "HO_COMPLETE";
    case EventKind::Hof: return "HOF";
    case EventKind::PingPong: return "PP";
    case EventKind::RlfRecoveryStart: return "RLF_RECOVERY_START";
    case EventKind::RlfRecoveryEnd: return "RLF_RECOVERY_END";
    }
    return "?";
}

EventKind parse_event_kind(std::string_view text)
{
    for (auto kind : {EventKind::HoTriggered, EventKind::HoComplete, EventKind::Hof, EventKind::PingPong,
                      EventKind::RlfRecoveryStart, EventKind::RlfRecoveryEnd})
        if (to_string(kind) == text)
            return kind;
    throw ParseError("unknown event kind '" + std::string(text) + "'");
}

std::size_t count_events(const EventLog& log, EventKind kind)
{
    return static_cast<std::size_t>(
        std::count_if(log.begin(), log.end(), [kind](const EventRecord& e) { return e.kind == kind; }));
}

double pseudo_rsrq(std::span<const double> rsrp_mw, std::size_t b)
{
    if (rsrp_mw.size() < 2)
        throw std::invalid_argument("pseudo_rsrq: at least two base stations required");
    if (b >= rsrp_mw.size())
        throw std::out_of_range("pseudo_rsrq: BS index out of range");
    double interference = 0.0;
    for (std::size_t i = 0; i < rsrp_mw.size(); ++i)
        if (i != b)
            interference += rsrp_mw[i];
    return rsrp_mw[b] / interference;
}

std::size_t strongest_bs(std::span<const double> rsrp_dbm)
{
    return static_cast<std::size_t>(std::max_element(rsrp_dbm.begin(), rsrp_dbm.end()) - rsrp_dbm.begin());
}

void begin_handover(LinkMonitorState& state, std::size_t target, Millis now, EventLog& log)
{
    if (!state.serving_bs || !accepts_decision(state))
        throw std::logic_error("begin_handover: no handover possible in phase " + std::string(to_string(state.phase)));
    if (target == *state.serving_bs)
        throw std::logic_error("begin_handover: target equals serving BS");
    log.push_back({now, EventKind::HoTriggered, state.serving_bs, target});
    state.phase = Phase::HoPrep;
    state.phase_elapsed_ms = 0;
    state.target_bs = target;
}

bool step_a2a3(LinkMonitorState& state, std::span<const double> rsrp_dbm, const ProtocolConfig& cfg, Millis now,
               EventLog& log)
{
    if (!accepts_decision(state) || !state.serving_bs)
        throw std::logic_error("step_a2a3: called outside IDLE/TTT_RUNNING");
    const std::size_t serving = *state.serving_bs;
    const double serving_rsrp = rsrp_dbm[serving];

    const bool a2 = serving_rsrp < cfg.a2_threshold_dbm - cfg.a2_hysteresis_db;
    const double a3_bar = serving_rsrp + cfg.a3_offset_db + cfg.a3_hysteresis_db;
    BsIndex candidate;
    for (std::size_t n = 0; n < rsrp_dbm.size(); ++n)
        if (n != serving && rsrp_dbm[n] > a3_bar && (!candidate || rsrp_dbm[n] > rsrp_dbm[*candidate]))
            candidate = n;

    if (!a2 || !candidate)
    {
        state.phase = Phase::Idle;
        state.phase_elapsed_ms = 0;
        return false;
    }
    if (state.phase == Phase::Idle)
    {
        state.phase = Phase::TttRunning;
        state.phase_elapsed_ms = 0;
    }
    else
    {
        state.phase_elapsed_ms += cfg.dt_ms;
    }
    if (state.phase_elapsed_ms >= cfg.ttt_ms)
    {
        begin_handover(state, *candidate, now, log);
        return true;
    }
    return false;
}

void step_monitor(LinkMonitorState& state, double sinr_serving_db, const ProtocolConfig& cfg, Millis now,
                  EventLog& log)
{
    // No link to monitor while recovering, and the execution interval is
    // covered by the pre-execution and post-completion checks.
    if (state.phase == Phase::RlfRecovery || state.phase == Phase::HoExec)
        return;

    const bool just_completed = state.ho_completed;
    state.ho_completed = false;

    if (state.t310_running)
    {
        state.t310_elapsed_ms += cfg.dt_ms;
        const bool execution_pending =
            state.phase == Phase::HoPrep && state.phase_elapsed_ms + cfg.dt_ms >= cfg.ho_prep_ms;
        if (state.t310_elapsed_ms >= cfg.t310_ms)
            trigger_hof(state, now, log);
        else if (execution_pending)
            trigger_hof(state, now, log);
        else if (sinr_serving_db > cfg.q_in_db)
            reset_t310(state);
        return;
    }

    if (just_completed)
    {
        if (sinr_serving_db < cfg.q_out_db)
            trigger_hof(state, now, log);
    }
    else if (sinr_serving_db < cfg.q_out_db)
    {
        state.t310_running = true;
        state.t310_elapsed_ms = 0;
    }
    else
    {
        reset_t310(state);
    }
}

bool detect_pp(std::optional<Millis> last_ho_time, BsIndex prev_serving_bs, std::size_t new_target, Millis now,
               const ProtocolConfig& cfg)
{
    return last_ho_time && prev_serving_bs && *prev_serving_bs == new_target && now - *last_ho_time < cfg.mts_ms;
}

void advance_handover(LinkMonitorState& state, std::span<const double> rsrp_dbm, const ProtocolConfig& cfg, Millis now,
                      EventLog& log)
{
    switch (state.phase)
    {
    case Phase::HoPrep:
        state.phase_elapsed_ms += cfg.dt_ms;
        if (state.phase_elapsed_ms >= cfg.ho_prep_ms)
        {
            state.phase = Phase::HoExec;
            state.phase_elapsed_ms = 0;
        }
        return;
    case Phase::HoExec:
        state.phase_elapsed_ms += cfg.dt_ms;
        if (state.phase_elapsed_ms >= cfg.ho_exec_ms)
        {
            const std::size_t target = *state.target_bs;
            log.push_back({now, EventKind::HoComplete, state.serving_bs, target});
            if (detect_pp(state.last_ho_time_ms, state.prev_serving_bs, target, now, cfg))
                log.push_back({now, EventKind::PingPong, state.serving_bs, target});
            state.prev_serving_bs = state.serving_bs;
            state.serving_bs = target;
            state.target_bs.reset();
            state.last_ho_time_ms = now;
            state.phase = Phase::Idle;
            state.phase_elapsed_ms = 0;
            state.ho_completed = true;
        }
        return;
    case Phase::RlfRecovery:
        state.phase_elapsed_ms += cfg.dt_ms;
        if (state.phase_elapsed_ms >= cfg.rlf_recovery_ms)
        {
            const std::size_t bs = strongest_bs(rsrp_dbm);
            state.serving_bs = bs;
            state.phase = Phase::Idle;
            state.phase_elapsed_ms = 0;
            log.push_back({now, EventKind::RlfRecoveryEnd, std::nullopt, bs});
        }
        return;
    case Phase::Idle:
    case Phase::TttRunning:
        break;
    }
    throw std::logic_error("advance_handover: no handover phase active");
}

LinkSession::LinkSession(std::shared_ptr<const tracegen::RadioTrace> trace, ProtocolConfig cfg)
    : trace_(std::move(trace)), cfg_(cfg)
{
    cfg_.validate();
    if (!trace_ || trace_->n_samples() == 0)
        throw std::invalid_argument("link session: empty trace");
    if (trace_->n_bs() < 2)
        throw std::invalid_argument("link session: at least two base stations required");
    if (std::abs(trace_->dt_s * 1000.0 - static_cast<double>(cfg_.dt_ms)) > 1e-6)
        throw std::invalid_argument("link session: trace sample interval does not match protocol dt");
    state_ = LinkMonitorState::attached_to(strongest_bs(trace_->rsrp_dbm.row(0)));
    timeline_.reserve(trace_->n_samples());
}

void LinkSession::begin_tick()
{
    if (finished())
        throw std::logic_error("link session: trace exhausted");
    if (tick_open_)
        throw std::logic_error("link session: tick already open");
    tick_open_ = true;
    const Millis now = now_ms();
    const Phase before = state_.phase;
    const double sinr = state_.serving_bs ? sinr_db()[*state_.serving_bs] : -std::numeric_limits<double>::infinity();
    step_monitor(state_, sinr, cfg_, now, events_);
    const bool failed_now = before != Phase::RlfRecovery && state_.phase == Phase::RlfRecovery;
    if (!failed_now && !accepts_decision(state_))
        advance_handover(state_, rsrp_dbm(), cfg_, now, events_);
}

void LinkSession::end_tick()
{
    if (!tick_open_)
        throw std::logic_error("link session: no open tick");
    TimelineEntry entry;
    entry.serving_bs = state_.serving_bs;
    entry.sinr_db = in_outage(state_) ? -std::numeric_limits<double>::infinity() : sinr_db()[*state_.serving_bs];
    timeline_.push_back(entry);
    tick_open_ = false;
    ++tick_;
}

void LinkSession::trigger_handover(std::size_t target)
{
    if (!tick_open_)
        throw std::logic_error("link session: decisions need an open tick");
    begin_handover(state_, target, now_ms(), events_);
}

void LinkSession::run_a2a3()
{
    if (!tick_open_)
        throw std::logic_error("link session: decisions need an open tick");
    step_a2a3(state_, rsrp_dbm(), cfg_, now_ms(), events_);
}

RunResult run_baseline(const tracegen::RadioTrace& trace, const ProtocolConfig& cfg)
{
    LinkSession session(std::make_shared<const tracegen::RadioTrace>(trace), cfg);
    while (!session.finished())
    {
        session.begin_tick();
        if (session.at_decision_point())
            session.run_a2a3();
        session.end_tick();
    }
    return session.result();
}

void write_event_log(std::ostream& out, const EventLog& log)
{
    for (const auto& e : log)
    {
        nlohmann::json j = {{"t_ms", e.t_ms},
                            {"kind", std::string(to_string(e.kind))},
                            {"from", bs_to_json(e.from)},
                            {"to", bs_to_json(e.to)}};
        out << j.dump() << '\n';
    }
}

EventLog read_event_log(std::istream& in)
{
    EventLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.empty())
            continue;
        try
        {
            const auto j = nlohmann::json::parse(line);
            log.push_back({j.at("t_ms").get<Millis>(), parse_event_kind(j.at("kind").get<std::string>()),
                           bs_from_json(j.at("from")), bs_from_json(j.at("to"))});
        }
        catch (const nlohmann::json::exception& e)
        {
            throw ParseError("event log line " + std::to_string(line_no) + ": " + e.what());
        }
        if (log.size() > 1 && log[log.size() - 1].t_ms < log[log.size() - 2].t_ms)
            throw ParseError("event log line " + std::to_string(line_no) + ": time goes backwards");
    }
    return log;
}

} // namespace holab::protocol
