#include "holab/cli.hpp"

#include "holab/config.hpp"
#include "holab/error.hpp"
#include "holab/evalkit.hpp"
#include "holab/numfmt.hpp"
#include "holab/ppo.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace holab::cli {

namespace fs = std::filesystem;

namespace {

struct Common
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

config::LabConfig load_lab_config(const Common& common)
{
    if (!common.config_path.empty())
        return config::load_config(common.config_path);
    std::istringstream empty;
    return config::parse_config(empty, "<defaults>");
}

/// --seed, then HOLAB_SEED, then the config file, then 0.
std::uint64_t resolve_seed(const Common& common, const config::LabConfig& cfg)
{
    if (common.seed)
        return *common.seed;
    if (const char* env = std::getenv("HOLAB_SEED"); env && *env)
    {
        std::uint64_t v = 0;
        const std::string_view text(env);
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size())
            throw ConfigError("HOLAB_SEED is not a non-negative integer: '" + std::string(text) + "'");
        return v;
    }
    return cfg.seed.value_or(0);
}

std::optional<tracegen::Split> parse_split_option(const std::string& text)
{
    if (text == "all")
        return std::nullopt;
    try
    {
        return tracegen::parse_split(text);
    }
    catch (const std::exception&)
    {
        throw ConfigError("--split must be train, test or all");
    }
}

env::EnvConfig env_config(const config::LabConfig& cfg)
{
    env::EnvConfig e = cfg.env;
    e.protocol = cfg.protocol;
    return e;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

int cmd_gen(const Common& common, const std::string& out_dir, const std::string& speeds_text, std::ostream& out)
{
    auto cfg = load_lab_config(common);
    const auto seed = resolve_seed(common, cfg);
    const auto speeds = speeds_text.empty() ? cfg.speeds : config::parse_speed_list(speeds_text);
    for (double s : speeds)
        if (s > cfg.routes.max_speed_kmh)
            throw ConfigError("speed " + format_double(s) + " km/h exceeds max_speed_kmh");

    fs::create_directories(out_dir);
    std::vector<ManifestEntry> entries;
    for (double speed : speeds)
    {
        const auto routes = tracegen::make_routes(cfg.map, speed, seed, cfg.routes);
        const auto traces = tracegen::build_dataset(cfg.map, routes, cfg.dataset);
        for (const auto& trace : traces)
        {
            const std::string file = trace.id + ".csv";
            tracegen::write_trace(fs::path(out_dir) / file, trace);
            entries.push_back({trace.id, file, trace.speed_kmh, trace.split});
        }
        out << "generated " << traces.size() << " traces at " << format_double(speed) << " km/h\n";
    }
    write_manifest(out_dir, seed, entries);
    write_text(fs::path(out_dir) / "config.ini", config::dump_config(cfg));
    return kExitOk;
}

int cmd_baseline(const Common& common, const std::string& traces_dir, const std::string& out_dir,
                 const std::string& split, const std::string& speeds_text, std::size_t jobs, std::ostream& out)
{
    const auto cfg = load_lab_config(common);
    const auto speeds = speeds_text.empty() ? std::vector<double>{} : config::parse_speed_list(speeds_text);
    const auto traces = load_traces(traces_dir, parse_split_option(split), speeds);
    std::vector<protocol::RunResult> runs;
    const auto report = evalkit::evaluate_policy({"baseline", std::nullopt}, traces, env_config(cfg), jobs, &runs);

    fs::create_directories(fs::path(out_dir) / "events");
    for (std::size_t i = 0; i < traces.size(); ++i)
    {
        std::ofstream log(fs::path(out_dir) / "events" / (traces[i].id + ".jsonl"));
        if (!log)
            throw std::runtime_error("cannot write event log for " + traces[i].id);
        protocol::write_event_log(log, runs[i].events);
    }
    evalkit::write_report_json(fs::path(out_dir) / "report.json", report);
    evalkit::write_report_csv(fs::path(out_dir) / "report.csv", report);
    for (const auto& s : evalkit::by_speed(report))
        out << format_double(s.speed_kmh) << " km/h: " << s.traces << " traces, mean gamma "
            << format_double(s.mean_gamma) << ", HOF " << s.hof << ", PP " << s.pp << ", HO " << s.ho << '\n';
    return kExitOk;
}

int cmd_train(const Common& common, const std::string& traces_dir, const std::string& out_dir, bool dry_run,
              bool resume, bool quiet, std::ostream& out, std::ostream& err)
{
    const auto cfg = load_lab_config(common);
    const auto seed = resolve_seed(common, cfg);
    if (dry_run)
    {
        out << "seed," << seed << '\n';
        out << "ent_coef," << format_double(cfg.ppo.ent_coef) << '\n';
        out << "c," << format_double(cfg.env.c) << '\n';
        out << "sample_hyperparams," << (cfg.ppo.sample_hyperparams ? "true" : "false") << '\n';
        out << ppo::describe_schedule(cfg.ppo);
        return kExitOk;
    }
    if (traces_dir.empty() || out_dir.empty())
        throw ConfigError("train needs --traces and --out");
    const auto traces = load_traces(traces_dir, tracegen::Split::Train, {cfg.train_speed_kmh});
    if (traces.empty())
        throw std::runtime_error("no training traces at " + format_double(cfg.train_speed_kmh) + " km/h");

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config.ini", config::dump_config(cfg));
    ppo::TrainOptions options;
    options.out_dir = out_dir;
    options.resume = resume;
    if (!quiet)
        options.on_epoch = [&err, &cfg](const ppo::MetricRow& row) {
            const auto total = cfg.ppo.schedule[row.iteration - 1].epochs;
            if ((row.epoch + 1) % 25 == 0 || row.epoch + 1 == total)
                err << "iteration " << row.iteration << " epoch " << (row.epoch + 1) << '/' << total << " reward "
                    << format_double(row.mean_reward) << " terminations " << row.terminations << " lr "
                    << format_double(row.lr) << std::endl;
        };
    const auto run = ppo::train(traces, cfg.ppo, env_config(cfg), seed, options);
    out << "trained on " << run.train_ids.size() << " traces, " << run.history.size() << " epochs, seed " << seed
        << '\n';
    for (const auto& cp : run.checkpoints)
        out << "checkpoint " << cp.string() << '\n';
    return kExitOk;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& traces_dir,
             const std::string& out_dir, const std::string& split, const std::string& speeds_text, std::size_t jobs,
             bool with_baseline, std::ostream& out)
{
    const auto cfg = load_lab_config(common);
    const auto speeds = speeds_text.empty() ? cfg.speeds : config::parse_speed_list(speeds_text);
    const auto cp = ppo::load_checkpoint(checkpoint);
    const auto traces = load_traces(traces_dir, parse_split_option(split), speeds);
    if (!traces.empty() && traces.front().n_bs() != cp.agent.actor.output_dim())
        throw std::runtime_error("checkpoint was trained for " + std::to_string(cp.agent.actor.output_dim()) +
                                 " base stations, traces have " + std::to_string(traces.front().n_bs()));
    const auto ecfg = env_config(cfg);
    fs::create_directories(out_dir);
    const auto agent = evalkit::evaluate_policy({"agent", cp.agent.actor}, traces, ecfg, jobs);
    evalkit::write_report_json(fs::path(out_dir) / "agent_report.json", agent);
    evalkit::write_report_csv(fs::path(out_dir) / "agent_report.csv", agent);
    if (!with_baseline)
    {
        for (const auto& s : evalkit::by_speed(agent))
            out << format_double(s.speed_kmh) << " km/h: mean gamma " << format_double(s.mean_gamma) << ", HOF "
                << s.hof << ", PP " << s.pp << '\n';
        return kExitOk;
    }
    const auto baseline = evalkit::evaluate_policy({"baseline", std::nullopt}, traces, ecfg, jobs);
    evalkit::write_report_json(fs::path(out_dir) / "baseline_report.json", baseline);
    evalkit::write_report_csv(fs::path(out_dir) / "baseline_report.csv", baseline);
    const auto cmp = evalkit::compare(agent, baseline);
    evalkit::write_comparison_json(fs::path(out_dir) / "comparison.json", cmp);
    evalkit::write_comparison_csv(fs::path(out_dir) / "comparison.csv", cmp);
    out << evalkit::format_comparison(cmp);
    return kExitOk;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& out_dir, std::ostream& out)
{
    const auto cmp = evalkit::compare(evalkit::read_report_json(a), evalkit::read_report_json(b));
    if (!out_dir.empty())
    {
        fs::create_directories(out_dir);
        evalkit::write_comparison_json(fs::path(out_dir) / "comparison.json", cmp);
        evalkit::write_comparison_csv(fs::path(out_dir) / "comparison.csv", cmp);
    }
    out << evalkit::format_comparison(cmp);
    return kExitOk;
}

} // namespace

void write_manifest(const fs::path& dir, std::uint64_t seed, const std::vector<ManifestEntry>& entries)
{
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : entries)
        list.push_back({{"id", e.id}, {"file", e.file}, {"speed_kmh", e.speed_kmh}, {"split", to_string(e.split)}});
    const nlohmann::json j = {{"seed", seed}, {"traces", list}};
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir)
{
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    try
    {
        const auto j = nlohmann::json::parse(in);
        std::vector<ManifestEntry> entries;
        for (const auto& e : j.at("traces"))
            entries.push_back({e.at("id").get<std::string>(), e.at("file").get<std::string>(),
                               e.at("speed_kmh").get<double>(), tracegen::parse_split(e.at("split").get<std::string>())});
        return entries;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::vector<tracegen::RadioTrace> load_traces(const fs::path& dir, std::optional<tracegen::Split> split,
                                              const std::vector<double>& speeds)
{
    const auto entries = read_manifest(dir);
    std::set<double> available;
    for (const auto& e : entries)
        available.insert(e.speed_kmh);
    for (double s : speeds)
        if (!available.count(s))
            throw std::runtime_error("no traces at " + format_double(s) + " km/h in " + dir.string());

    std::vector<tracegen::RadioTrace> traces;
    auto wanted = [&](const ManifestEntry& e) {
        if (split && e.split != *split)
            return false;
        return speeds.empty() || std::find(speeds.begin(), speeds.end(), e.speed_kmh) != speeds.end();
    };
    // Keep the requested speed order so reports group predictably.
    std::vector<double> order = speeds.empty() ? std::vector<double>(available.begin(), available.end()) : speeds;
    for (double s : order)
        for (const auto& e : entries)
            if (e.speed_kmh == s && wanted(e))
            {
                auto trace = tracegen::read_trace(dir / e.file);
                if (trace.id != e.id)
                    throw ParseError((dir / e.file).string() + ": id does not match the manifest");
                trace.split = e.split;
                traces.push_back(std::move(trace));
            }
    return traces;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Handover optimisation lab: 3GPP baseline vs. learned handover agent", "holab"};
    app.require_subcommand(1);

    Common common;
    std::uint64_t seed_value = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "Configuration file (key = value with [sections])");
        sub->add_option("--seed", seed_value, "Root seed (falls back to HOLAB_SEED, then the config file)");
    };

    std::string out_dir, traces_dir, speeds, checkpoint, report_a, report_b;
    std::string baseline_split = "all", eval_split = "test";
    std::size_t jobs = 1;
    bool dry_run = false, resume = false, quiet = false, with_baseline = false;

    auto* gen = app.add_subcommand("gen", "Generate synthetic radio traces and a manifest");
    add_common(gen);
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--speeds", speeds, "Comma-separated speeds in km/h");

    auto* baseline = app.add_subcommand("baseline", "Run the 3GPP baseline on traces");
    add_common(baseline);
    baseline->add_option("--traces", traces_dir, "Trace directory with manifest.json")->required();
    baseline->add_option("--out", out_dir, "Report directory")->required();
    baseline->add_option("--split", baseline_split, "train, test or all (default all)");
    baseline->add_option("--speeds", speeds, "Comma-separated speeds in km/h");
    baseline->add_option("--jobs", jobs, "Worker threads")->default_val(1)->check(CLI::PositiveNumber);

    auto* train = app.add_subcommand("train", "Train the agent with the iteration schedule");
    add_common(train);
    train->add_option("--traces", traces_dir, "Trace directory with manifest.json");
    train->add_option("--out", out_dir, "Checkpoint directory");
    train->add_flag("--dry-run", dry_run, "Print the resolved schedule and exit");
    train->add_flag("--resume", resume, "Continue after the last checkpoint in --out");
    train->add_flag("--quiet", quiet, "No progress output");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (greedy policy)");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--traces", traces_dir, "Trace directory with manifest.json")->required();
    eval->add_option("--out", out_dir, "Report directory")->required();
    eval->add_option("--split", eval_split, "train, test or all (default test)");
    eval->add_option("--speeds", speeds, "Comma-separated speeds in km/h");
    eval->add_option("--jobs", jobs, "Worker threads")->default_val(1)->check(CLI::PositiveNumber);
    eval->add_flag("--baseline", with_baseline, "Also run the baseline and write a comparison");

    auto* compare = app.add_subcommand("compare", "Compare two evaluation reports");
    compare->add_option("--a", report_a, "First report (JSON)")->required();
    compare->add_option("--b", report_b, "Second report (JSON)")->required();
    compare->add_option("--out", out_dir, "Directory for comparison.json and comparison.csv");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::Success& e)
    {
        app.exit(e, out, err);
        return kExitOk;
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e, out, err);
        return kExitConfig;
    }

    for (auto* sub : {gen, baseline, train, eval})
        if (sub->parsed() && sub->count("--seed"))
            common.seed = seed_value;

    try
    {
        if (gen->parsed())
            return cmd_gen(common, out_dir, speeds, out);
        if (baseline->parsed())
            return cmd_baseline(common, traces_dir, out_dir, baseline_split, speeds, jobs, out);
        if (train->parsed())
            return cmd_train(common, traces_dir, out_dir, dry_run, resume, quiet, out, err);
        if (eval->parsed())
            return cmd_eval(common, checkpoint, traces_dir, out_dir, eval_split, speeds, jobs, with_baseline, out);
        if (compare->parsed())
            return cmd_compare(report_a, report_b, out_dir, out);
    }
    catch (const ConfigError& e)
    {
        err << "holab: configuration error: " << e.what() << '\n';
        return kExitConfig;
    }
    catch (const std::exception& e)
    {
        err << "holab: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitRuntime;
}

} // namespace holab::cli
