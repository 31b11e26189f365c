#pragma once

#include "holab/env.hpp"
#include "holab/neural.hpp"
#include "holab/protocol.hpp"
#include "holab/tracegen.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace holab::evalkit {

/// Sum of log2(1 + connected SINR) over sum of per-tick max log2(1 + SINR).
/// Inputs are linear; outage ticks carry 0.
double gamma_metric(std::span<const double> connected_sinr, const tracegen::SampleMatrix& sinr_all);

/// Linear SINR of the serving link per tick, 0 while in outage.
std::vector<double> connected_sinr(const std::vector<protocol::TimelineEntry>& timeline);
tracegen::SampleMatrix linear_sinr(const tracegen::RadioTrace& trace);

struct EvalRow
{
    std::string policy;
    double speed_kmh = 0.0;
    std::string trace_id;
    double gamma = 0.0;
    std::size_t hof = 0;
    std::size_t pp = 0;
    std::size_t ho = 0;
    std::size_t outage_ticks = 0;

    bool operator==(const EvalRow&) const = default;
};

using EvalReport = std::vector<EvalRow>;

EvalRow summarize(const std::string& policy, const tracegen::RadioTrace& trace, const protocol::RunResult& run);

/// Greedy agent over the whole trace with the identity BS mapping. Handover
/// failures do not end the run.
protocol::RunResult run_agent(const neural::MlpParams& actor, const tracegen::RadioTrace& trace,
                              const env::EnvConfig& cfg);

/// The 3GPP baseline when `actor` is empty, otherwise the greedy agent.
struct Policy
{
    std::string name = "baseline";
    std::optional<neural::MlpParams> actor;
};

/// One row per trace in input order. `jobs` > 1 evaluates traces on worker
/// threads; results do not depend on it.
EvalReport evaluate_policy(const Policy& policy, const std::vector<tracegen::RadioTrace>& traces,
                           const env::EnvConfig& cfg, std::size_t jobs = 1,
                           std::vector<protocol::RunResult>* runs = nullptr);

struct SpeedSummary
{
    double speed_kmh = 0.0;
    std::size_t traces = 0;
    double mean_gamma = 0.0;
    std::size_t hof = 0;
    std::size_t pp = 0;
    std::size_t ho = 0;
    /// Traces without any handover failure.
    std::size_t hof_free = 0;
};

/// Per-speed aggregates in ascending speed order.
std::vector<SpeedSummary> by_speed(const EvalReport& report);

struct ComparisonRow
{
    double speed_kmh = 0.0;
    SpeedSummary a;
    SpeedSummary b;
    double delta_gamma = 0.0;
    long long delta_hof = 0;
    long long delta_pp = 0;
    std::string verdict;
};

struct Comparison
{
    std::string policy_a;
    std::string policy_b;
    std::vector<ComparisonRow> rows;
};

/// Per-speed deltas a - b. Both reports must cover the same (speed, trace)
/// keys; a mismatch throws naming the speed.
Comparison compare(const EvalReport& a, const EvalReport& b);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_json(const std::filesystem::path& path);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

void write_comparison_json(const std::filesystem::path& path, const Comparison& cmp);
void write_comparison_csv(const std::filesystem::path& path, const Comparison& cmp);
std::string format_comparison(const Comparison& cmp);

} // namespace holab::evalkit
