#include "holab/config.hpp"

#include "holab/error.hpp"
#include "holab/numfmt.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace holab::config {

namespace {

using Setter = std::function<void(const std::string&)>;

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        items.push_back(trim(item));
    return items;
}

double to_number(const std::string& text)
{
    const auto v = parse_double(text);
    if (!v || !std::isfinite(*v))
        throw std::invalid_argument("expected a number, got '" + text + "'");
    return *v;
}

std::int64_t to_integer(const std::string& text)
{
    std::int64_t v = 0;
    const auto t = trim(text);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
        throw std::invalid_argument("expected an integer, got '" + text + "'");
    return v;
}

std::size_t to_count(const std::string& text)
{
    const auto v = to_integer(text);
    if (v < 0)
        throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& text)
{
    if (text == "true" || text == "1" || text == "yes")
        return true;
    if (text == "false" || text == "0" || text == "no")
        return false;
    throw std::invalid_argument("expected true or false, got '" + text + "'");
}

std::string bool_text(bool b)
{
    return b ? "true" : "false";
}

std::string list_text(const std::vector<double>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out += (i ? ", " : "") + format_double(values[i]);
    return out;
}

env::BonusMode to_bonus(const std::string& text)
{
    if (text == "while_strongest")
        return env::BonusMode::WhileStrongest;
    if (text == "on_handover")
        return env::BonusMode::OnHandover;
    throw std::invalid_argument("expected while_strongest or on_handover, got '" + text + "'");
}

const char* bonus_text(env::BonusMode mode)
{
    return mode == env::BonusMode::OnHandover ? "on_handover" : "while_strongest";
}

Setter number(double& field)
{
    return [&field](const std::string& v) { field = to_number(v); };
}

Setter millis(std::int64_t& field)
{
    return [&field](const std::string& v) { field = to_integer(v); };
}

Setter count(std::size_t& field)
{
    return [&field](const std::string& v) { field = to_count(v); };
}

Setter boolean(bool& field)
{
    return [&field](const std::string& v) { field = to_bool(v); };
}

std::map<std::string, Setter> section_keys(const std::string& section, LabConfig& cfg, bool& bs_cleared)
{
    if (section == "run")
        return {
            {"seed", [&cfg](const std::string& v) {
                 const auto s = to_integer(v);
                 if (s < 0)
                     throw std::invalid_argument("seed must be non-negative");
                 cfg.seed = static_cast<std::uint64_t>(s);
             }},
            {"speeds", [&cfg](const std::string& v) { cfg.speeds = parse_speed_list(v); }},
            {"train_speed_kmh", number(cfg.train_speed_kmh)},
        };
    if (section == "map")
        return {
            {"pathloss_exponent", number(cfg.map.pathloss_exponent)},
            {"reference_loss_db", number(cfg.map.reference_loss_db)},
            {"shadow_sigma_db", number(cfg.map.shadow_sigma_db)},
            {"shadow_corr_distance_m", number(cfg.map.shadow_corr_distance_m)},
            {"noise_floor_dbm", number(cfg.map.noise_floor_dbm)},
            {"bounds", [&cfg](const std::string& v) {
                 const auto items = split_list(v);
                 if (items.size() != 4)
                     throw std::invalid_argument("bounds needs min_x, min_y, max_x, max_y");
                 cfg.map.bounds = {to_number(items[0]), to_number(items[1]), to_number(items[2]),
                                   to_number(items[3])};
             }},
            {"bs", [&cfg, &bs_cleared](const std::string& v) {
                 const auto items = split_list(v);
                 if (items.size() != 3)
                     throw std::invalid_argument("bs needs x, y, tx_power_dbm");
                 if (!bs_cleared)
                 {
                     cfg.map.bs_positions.clear();
                     cfg.map.tx_power_dbm.clear();
                     bs_cleared = true;
                 }
                 cfg.map.bs_positions.push_back({to_number(items[0]), to_number(items[1])});
                 cfg.map.tx_power_dbm.push_back(to_number(items[2]));
             }},
        };
    if (section == "routes")
        return {
            {"n_routes", count(cfg.routes.n_routes)},
            {"duration_s", number(cfg.routes.duration_s)},
            {"block_m", number(cfg.routes.block_m)},
            {"max_speed_kmh", number(cfg.routes.max_speed_kmh)},
        };
    if (section == "dataset")
        return {
            {"n_train", count(cfg.dataset.n_train)},
            {"upsample_factor", count(cfg.dataset.upsample_factor)},
            {"smoothing_window_s", number(cfg.dataset.smoothing_window_s)},
            {"raw_dt_s", number(cfg.dataset.raw_dt_s)},
        };
    if (section == "protocol")
        return {
            {"a2_threshold_dbm", number(cfg.protocol.a2_threshold_dbm)},
            {"a2_hysteresis_db", number(cfg.protocol.a2_hysteresis_db)},
            {"a3_hysteresis_db", number(cfg.protocol.a3_hysteresis_db)},
            {"a3_offset_db", number(cfg.protocol.a3_offset_db)},
            {"ttt_ms", millis(cfg.protocol.ttt_ms)},
            {"ho_prep_ms", millis(cfg.protocol.ho_prep_ms)},
            {"ho_exec_ms", millis(cfg.protocol.ho_exec_ms)},
            {"t310_ms", millis(cfg.protocol.t310_ms)},
            {"q_out_db", number(cfg.protocol.q_out_db)},
            {"q_in_db", number(cfg.protocol.q_in_db)},
            {"rlf_recovery_ms", millis(cfg.protocol.rlf_recovery_ms)},
            {"mts_ms", millis(cfg.protocol.mts_ms)},
            {"dt_ms", millis(cfg.protocol.dt_ms)},
        };
    if (section == "env")
        return {
            {"c", number(cfg.env.c)},
            {"reset_on_hof", boolean(cfg.env.reset_on_hof)},
            {"reset_on_pp", boolean(cfg.env.reset_on_pp)},
            {"bonus", [&cfg](const std::string& v) { cfg.env.bonus = to_bonus(v); }},
            {"decision_dt_ms", millis(cfg.env.decision_dt_ms)},
        };
    if (section == "ppo")
        return {
            {"clip", number(cfg.ppo.clip)},
            {"ent_coef", number(cfg.ppo.ent_coef)},
            {"value_coef", number(cfg.ppo.value_coef)},
            {"gamma", number(cfg.ppo.gamma)},
            {"gae_lambda", number(cfg.ppo.gae_lambda)},
            {"epochs_per_rollout", count(cfg.ppo.epochs_per_rollout)},
            {"normalize_advantages", boolean(cfg.ppo.normalize_advantages)},
            {"max_grad_norm", number(cfg.ppo.max_grad_norm)},
            {"sample_hyperparams", boolean(cfg.ppo.sample_hyperparams)},
        };
    return {};
}

std::map<std::string, Setter> iteration_keys(ppo::IterationSpec& it)
{
    return {
        {"lr_start", number(it.lr_start)},
        {"epochs", count(it.epochs)},
        {"batch", count(it.batch)},
        {"rollout", count(it.rollout)},
        {"trace_seconds", number(it.trace_seconds)},
        {"reset_on_pp", boolean(it.reset_on_pp)},
    };
}

const std::set<std::string> kSections = {"run", "map", "routes", "dataset", "protocol", "env", "ppo"};

} // namespace

void LabConfig::validate() const
{
    try
    {
        map.validate();
        protocol.validate();
        env::EnvConfig e = env;
        e.protocol = protocol;
        e.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw ConfigError(e.what());
    }
    ppo.validate();
    if (routes.n_routes == 0)
        throw ConfigError("routes: n_routes must be positive");
    if (!(routes.duration_s > 0.0) || !(routes.block_m > 0.0) || !(routes.max_speed_kmh > 0.0))
        throw ConfigError("routes: duration, block size and max speed must be positive");
    if (dataset.n_train == 0 || dataset.n_train > routes.n_routes)
        throw ConfigError("dataset: n_train must lie in [1, n_routes]");
    if (dataset.upsample_factor == 0 || !(dataset.raw_dt_s > 0.0) || !(dataset.smoothing_window_s >= 0.0))
        throw ConfigError("dataset: invalid resampling parameters");
    const double fine_ms = dataset.raw_dt_s * 1000.0 / static_cast<double>(dataset.upsample_factor);
    if (std::abs(fine_ms - static_cast<double>(protocol.dt_ms)) > 1e-6)
        throw ConfigError("dataset: raw_dt_s / upsample_factor must equal protocol dt_ms");
    if (speeds.empty())
        throw ConfigError("run: speeds must not be empty");
    for (double s : speeds)
        if (!(s > 0.0) || s > routes.max_speed_kmh)
            throw ConfigError("run: speed " + format_double(s) + " km/h outside (0, max_speed_kmh]");
    if (!(train_speed_kmh > 0.0) || train_speed_kmh > routes.max_speed_kmh)
        throw ConfigError("run: train_speed_kmh outside (0, max_speed_kmh]");
}

std::vector<double> parse_speed_list(const std::string& text)
{
    std::vector<double> speeds;
    for (const auto& item : split_list(text))
    {
        const auto v = parse_double(item);
        if (!v || !(*v > 0.0) || !std::isfinite(*v))
            throw ConfigError("invalid speed '" + item + "'");
        speeds.push_back(*v);
    }
    if (speeds.empty())
        throw ConfigError("empty speed list");
    return speeds;
}

LabConfig parse_config(std::istream& in, const std::string& source)
{
    LabConfig cfg;
    bool bs_cleared = false;
    std::map<std::size_t, ppo::IterationSpec> iterations;
    std::set<std::string> seen;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        const auto hash = line.find('#');
        const std::string text = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (text.empty())
            continue;
        if (text.front() == '[')
        {
            if (text.back() != ']')
                throw ConfigError(where + "malformed section header");
            section = trim(text.substr(1, text.size() - 2));
            if (section.rfind("iteration.", 0) == 0)
            {
                std::size_t k = 0;
                try
                {
                    k = to_count(section.substr(10));
                }
                catch (const std::invalid_argument&)
                {
                    throw ConfigError(where + "bad iteration section '" + section + "'");
                }
                if (k == 0 || iterations.count(k))
                    throw ConfigError(where + "bad or repeated iteration section '" + section + "'");
                iterations[k] = ppo::IterationSpec{};
            }
            else if (!kSections.count(section))
                throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + "expected key = value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (section.empty())
            throw ConfigError(where + "key '" + key + "' outside of any section");

        std::map<std::string, Setter> keys;
        if (section.rfind("iteration.", 0) == 0)
            keys = iteration_keys(iterations[to_count(section.substr(10))]);
        else
            keys = section_keys(section, cfg, bs_cleared);
        const auto it = keys.find(key);
        if (it == keys.end())
            throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
        const std::string full = section + "." + key;
        if (key != "bs" && !seen.insert(full).second)
            throw ConfigError(where + "duplicate key '" + key + "' in [" + section + "]");
        try
        {
            it->second(value);
        }
        catch (const std::invalid_argument& e)
        {
            throw ConfigError(where + key + ": " + e.what());
        }
    }

    if (!iterations.empty())
    {
        cfg.ppo.schedule.clear();
        std::size_t expected = 1;
        for (const auto& [k, spec] : iterations)
        {
            if (k != expected++)
                throw ConfigError(source + ": iteration sections must be numbered 1.." +
                                  std::to_string(iterations.size()));
            cfg.ppo.schedule.push_back(spec);
        }
    }
    cfg.env.protocol = cfg.protocol;
    cfg.validate();
    return cfg;
}

LabConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.string());
}

std::string dump_config(const LabConfig& cfg)
{
    std::ostringstream out;
    auto kv = [&out](const std::string& key, const std::string& value) { out << key << " = " << value << '\n'; };
    auto num = [](double v) { return format_double(v); };

    out << "[run]\n";
    if (cfg.seed)
        kv("seed", std::to_string(*cfg.seed));
    kv("speeds", list_text(cfg.speeds));
    kv("train_speed_kmh", num(cfg.train_speed_kmh));

    out << "\n[map]\n";
    kv("pathloss_exponent", num(cfg.map.pathloss_exponent));
    kv("reference_loss_db", num(cfg.map.reference_loss_db));
    kv("shadow_sigma_db", num(cfg.map.shadow_sigma_db));
    kv("shadow_corr_distance_m", num(cfg.map.shadow_corr_distance_m));
    kv("noise_floor_dbm", num(cfg.map.noise_floor_dbm));
    kv("bounds", list_text({cfg.map.bounds.min_x, cfg.map.bounds.min_y, cfg.map.bounds.max_x, cfg.map.bounds.max_y}));
    for (std::size_t b = 0; b < cfg.map.n_bs(); ++b)
        kv("bs", list_text({cfg.map.bs_positions[b].x, cfg.map.bs_positions[b].y, cfg.map.tx_power_dbm[b]}));

    out << "\n[routes]\n";
    kv("n_routes", std::to_string(cfg.routes.n_routes));
    kv("duration_s", num(cfg.routes.duration_s));
    kv("block_m", num(cfg.routes.block_m));
    kv("max_speed_kmh", num(cfg.routes.max_speed_kmh));

    out << "\n[dataset]\n";
    kv("n_train", std::to_string(cfg.dataset.n_train));
    kv("upsample_factor", std::to_string(cfg.dataset.upsample_factor));
    kv("smoothing_window_s", num(cfg.dataset.smoothing_window_s));
    kv("raw_dt_s", num(cfg.dataset.raw_dt_s));

    const auto& p = cfg.protocol;
    out << "\n[protocol]\n";
    kv("a2_threshold_dbm", num(p.a2_threshold_dbm));
    kv("a2_hysteresis_db", num(p.a2_hysteresis_db));
    kv("a3_hysteresis_db", num(p.a3_hysteresis_db));
    kv("a3_offset_db", num(p.a3_offset_db));
    kv("ttt_ms", std::to_string(p.ttt_ms));
    kv("ho_prep_ms", std::to_string(p.ho_prep_ms));
    kv("ho_exec_ms", std::to_string(p.ho_exec_ms));
    kv("t310_ms", std::to_string(p.t310_ms));
    kv("q_out_db", num(p.q_out_db));
    kv("q_in_db", num(p.q_in_db));
    kv("rlf_recovery_ms", std::to_string(p.rlf_recovery_ms));
    kv("mts_ms", std::to_string(p.mts_ms));
    kv("dt_ms", std::to_string(p.dt_ms));

    out << "\n[env]\n";
    kv("c", num(cfg.env.c));
    kv("reset_on_hof", bool_text(cfg.env.reset_on_hof));
    kv("reset_on_pp", bool_text(cfg.env.reset_on_pp));
    kv("bonus", bonus_text(cfg.env.bonus));
    kv("decision_dt_ms", std::to_string(cfg.env.decision_dt_ms));

    const auto& q = cfg.ppo;
    out << "\n[ppo]\n";
    kv("clip", num(q.clip));
    kv("ent_coef", num(q.ent_coef));
    kv("value_coef", num(q.value_coef));
    kv("gamma", num(q.gamma));
    kv("gae_lambda", num(q.gae_lambda));
    kv("epochs_per_rollout", std::to_string(q.epochs_per_rollout));
    kv("normalize_advantages", bool_text(q.normalize_advantages));
    kv("max_grad_norm", num(q.max_grad_norm));
    kv("sample_hyperparams", bool_text(q.sample_hyperparams));

    for (std::size_t i = 0; i < q.schedule.size(); ++i)
    {
        const auto& it = q.schedule[i];
        out << "\n[iteration." << (i + 1) << "]\n";
        kv("lr_start", num(it.lr_start));
        kv("epochs", std::to_string(it.epochs));
        kv("batch", std::to_string(it.batch));
        kv("rollout", std::to_string(it.rollout));
        kv("trace_seconds", num(it.trace_seconds));
        kv("reset_on_pp", bool_text(it.reset_on_pp));
    }
    return out.str();
}

} // namespace holab::config
