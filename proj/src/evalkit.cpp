#include "holab/evalkit.hpp"

#include "holab/error.hpp"
#include "holab/numfmt.hpp"
#include "holab/ppo.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace holab::evalkit {

namespace {

std::string speed_text(double speed)
{
    return format_double(speed) + " km/h";
}

} // namespace

double gamma_metric(std::span<const double> connected, const tracegen::SampleMatrix& sinr_all)
{
    if (connected.empty())
        throw std::invalid_argument("gamma: empty timeline");
    if (connected.size() != sinr_all.rows())
        throw std::invalid_argument("gamma: timeline length does not match the SINR matrix");
    double achieved = 0.0;
    double best = 0.0;
    for (std::size_t i = 0; i < connected.size(); ++i)
    {
        const auto row = sinr_all.row(i);
        achieved += std::log2(1.0 + connected[i]);
        best += std::log2(1.0 + *std::max_element(row.begin(), row.end()));
    }
    if (!(best > 0.0))
        throw std::domain_error("gamma: maximum achievable rate is zero");
    return achieved / best;
}

std::vector<double> connected_sinr(const std::vector<protocol::TimelineEntry>& timeline)
{
    std::vector<double> out(timeline.size());
    std::transform(timeline.begin(), timeline.end(), out.begin(), [](const protocol::TimelineEntry& e) {
        return std::isfinite(e.sinr_db) ? std::pow(10.0, e.sinr_db / 10.0) : 0.0;
    });
    return out;
}

tracegen::SampleMatrix linear_sinr(const tracegen::RadioTrace& trace)
{
    tracegen::SampleMatrix out(trace.n_samples(), trace.n_bs());
    for (std::size_t i = 0; i < trace.n_samples(); ++i)
        for (std::size_t b = 0; b < trace.n_bs(); ++b)
            out(i, b) = std::pow(10.0, trace.sinr_db(i, b) / 10.0);
    return out;
}

EvalRow summarize(const std::string& policy, const tracegen::RadioTrace& trace, const protocol::RunResult& run)
{
    EvalRow row;
    row.policy = policy;
    row.speed_kmh = trace.speed_kmh;
    row.trace_id = trace.id;
    row.gamma = gamma_metric(connected_sinr(run.timeline), linear_sinr(trace));
    row.hof = protocol::count_events(run.events, protocol::EventKind::Hof);
    row.pp = protocol::count_events(run.events, protocol::EventKind::PingPong);
    row.ho = protocol::count_events(run.events, protocol::EventKind::HoComplete);
    row.outage_ticks = static_cast<std::size_t>(std::count_if(
        run.timeline.begin(), run.timeline.end(), [](const auto& e) { return !std::isfinite(e.sinr_db); }));
    return row;
}

protocol::RunResult run_agent(const neural::MlpParams& actor, const tracegen::RadioTrace& trace,
                              const env::EnvConfig& cfg)
{
    env::EnvConfig ecfg = cfg;
    ecfg.reset_on_hof = false;
    ecfg.reset_on_pp = false;
    env::HandoverEnv env(ecfg);
    std::vector<std::size_t> identity(trace.n_bs());
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    env.reset(std::make_shared<const tracegen::RadioTrace>(trace), identity);
    if (actor.output_dim() != trace.n_bs())
        throw std::invalid_argument("run_agent: actor output size does not match the trace's BS count");
    while (!env.done())
        env.step(ppo::act_greedy(actor, env.observation()));
    return env.session().result();
}

EvalReport evaluate_policy(const Policy& policy, const std::vector<tracegen::RadioTrace>& traces,
                           const env::EnvConfig& cfg, std::size_t jobs, std::vector<protocol::RunResult>* runs)
{
    EvalReport report(traces.size());
    std::vector<protocol::RunResult> results(traces.size());
    auto evaluate_one = [&](std::size_t i) {
        results[i] = policy.actor ? run_agent(*policy.actor, traces[i], cfg)
                                  : protocol::run_baseline(traces[i], cfg.protocol);
        report[i] = summarize(policy.name, traces[i], results[i]);
    };

    const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), traces.size());
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < traces.size(); ++i)
            evaluate_one(i);
    }
    else
    {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
        {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < traces.size(); i = next++)
                {
                    try
                    {
                        evaluate_one(i);
                    }
                    catch (...)
                    {
                        std::lock_guard lock(failure_mutex);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool)
            t.join();
        if (failure)
            std::rethrow_exception(failure);
    }
    if (runs)
        *runs = std::move(results);
    return report;
}

std::vector<SpeedSummary> by_speed(const EvalReport& report)
{
    std::map<double, SpeedSummary> groups;
    for (const auto& row : report)
    {
        auto& s = groups[row.speed_kmh];
        s.speed_kmh = row.speed_kmh;
        ++s.traces;
        s.mean_gamma += row.gamma;
        s.hof += row.hof;
        s.pp += row.pp;
        s.ho += row.ho;
        s.hof_free += row.hof == 0 ? 1 : 0;
    }
    std::vector<SpeedSummary> out;
    for (auto& [speed, s] : groups)
    {
        s.mean_gamma /= static_cast<double>(s.traces);
        out.push_back(s);
    }
    return out;
}

Comparison compare(const EvalReport& a, const EvalReport& b)
{
    if (a.empty() || b.empty())
        throw std::invalid_argument("compare: empty report");
    auto keys = [](const EvalReport& r) {
        std::map<double, std::set<std::string>> k;
        for (const auto& row : r)
            k[row.speed_kmh].insert(row.trace_id);
        return k;
    };
    const auto ka = keys(a);
    const auto kb = keys(b);
    for (const auto& [speed, ids] : ka)
    {
        auto it = kb.find(speed);
        if (it == kb.end())
            throw std::invalid_argument("compare: speed " + speed_text(speed) + " missing from the second report");
        if (it->second != ids)
            throw std::invalid_argument("compare: traces at speed " + speed_text(speed) + " differ between reports");
    }
    for (const auto& [speed, ids] : kb)
        if (!ka.count(speed))
            throw std::invalid_argument("compare: speed " + speed_text(speed) + " missing from the first report");

    Comparison cmp;
    cmp.policy_a = a.front().policy;
    cmp.policy_b = b.front().policy;
    const auto sa = by_speed(a);
    const auto sb = by_speed(b);
    for (std::size_t i = 0; i < sa.size(); ++i)
    {
        ComparisonRow row;
        row.speed_kmh = sa[i].speed_kmh;
        row.a = sa[i];
        row.b = sb[i];
        row.delta_gamma = sa[i].mean_gamma - sb[i].mean_gamma;
        row.delta_hof = static_cast<long long>(sa[i].hof) - static_cast<long long>(sb[i].hof);
        row.delta_pp = static_cast<long long>(sa[i].pp) - static_cast<long long>(sb[i].pp);
        if (row.delta_gamma > 0.0)
            row.verdict = cmp.policy_a + " wins";
        else if (row.delta_gamma < 0.0)
            row.verdict = cmp.policy_b + " wins";
        else
            row.verdict = "tie";
        cmp.rows.push_back(std::move(row));
    }
    return cmp;
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : report)
        j.push_back({{"policy", r.policy},
                     {"speed_kmh", r.speed_kmh},
                     {"trace_id", r.trace_id},
                     {"gamma", r.gamma},
                     {"hof", r.hof},
                     {"pp", r.pp},
                     {"ho", r.ho},
                     {"outage_ticks", r.outage_ticks}});
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

EvalReport read_report_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open report " + path.string());
    try
    {
        const auto j = nlohmann::json::parse(in);
        EvalReport report;
        for (const auto& e : j)
        {
            EvalRow r;
            r.policy = e.at("policy").get<std::string>();
            r.speed_kmh = e.at("speed_kmh").get<double>();
            r.trace_id = e.at("trace_id").get<std::string>();
            r.gamma = e.at("gamma").get<double>();
            r.hof = e.at("hof").get<std::size_t>();
            r.pp = e.at("pp").get<std::size_t>();
            r.ho = e.at("ho").get<std::size_t>();
            r.outage_ticks = e.value("outage_ticks", std::size_t{0});
            report.push_back(std::move(r));
        }
        return report;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "policy,speed_kmh,trace_id,gamma,hof,pp,ho,outage_ticks\n";
    for (const auto& r : report)
        out << r.policy << ',' << format_double(r.speed_kmh) << ',' << r.trace_id << ',' << format_double(r.gamma)
            << ',' << r.hof << ',' << r.pp << ',' << r.ho << ',' << r.outage_ticks << '\n';
}

void write_comparison_json(const std::filesystem::path& path, const Comparison& cmp)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : cmp.rows)
        rows.push_back({{"speed_kmh", r.speed_kmh},
                        {"gamma_a", r.a.mean_gamma},
                        {"gamma_b", r.b.mean_gamma},
                        {"delta_gamma", r.delta_gamma},
                        {"hof_a", r.a.hof},
                        {"hof_b", r.b.hof},
                        {"delta_hof", r.delta_hof},
                        {"pp_a", r.a.pp},
                        {"pp_b", r.b.pp},
                        {"delta_pp", r.delta_pp},
                        {"verdict", r.verdict}});
    const nlohmann::json j = {{"policy_a", cmp.policy_a}, {"policy_b", cmp.policy_b}, {"rows", rows}};
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_comparison_csv(const std::filesystem::path& path, const Comparison& cmp)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << "speed_kmh,gamma_a,gamma_b,delta_gamma,hof_a,hof_b,delta_hof,pp_a,pp_b,delta_pp,verdict\n";
    for (const auto& r : cmp.rows)
        out << format_double(r.speed_kmh) << ',' << format_double(r.a.mean_gamma) << ','
            << format_double(r.b.mean_gamma) << ',' << format_double(r.delta_gamma) << ',' << r.a.hof << ','
            << r.b.hof << ',' << r.delta_hof << ',' << r.a.pp << ',' << r.b.pp << ',' << r.delta_pp << ','
            << r.verdict << '\n';
}

std::string format_comparison(const Comparison& cmp)
{
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-8s %12s %12s %10s %6s %6s %6s %6s  %s\n", "km/h",
                  ("G " + cmp.policy_a).substr(0, 12).c_str(), ("G " + cmp.policy_b).substr(0, 12).c_str(), "dG",
                  "HOF a", "HOF b", "PP a", "PP b", "verdict");
    out << line;
    for (const auto& r : cmp.rows)
    {
        std::snprintf(line, sizeof(line), "%-8s %11.4f%% %11.4f%% %+9.4f%% %6zu %6zu %6zu %6zu  %s\n",
                      format_double(r.speed_kmh).c_str(), 100.0 * r.a.mean_gamma, 100.0 * r.b.mean_gamma,
                      100.0 * r.delta_gamma, r.a.hof, r.b.hof, r.a.pp, r.b.pp, r.verdict.c_str());
        out << line;
    }
    return out.str();
}

} // namespace holab::evalkit
