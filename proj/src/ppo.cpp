#include "holab/ppo.hpp"

#include "holab/error.hpp"
#include "holab/numfmt.hpp"
#include "holab/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace holab::ppo {

namespace {

constexpr double kActorOutputGain = 0.01;
constexpr double kCriticOutputGain = 1.0;
constexpr double kStdFloor = 1e-8;

const char* const kMetricsHeader =
    "iteration,epoch,trace_id,lr,mean_reward,terminations,hof,pp,policy_loss,value_loss,entropy";

void clip_grad_norm(MlpParams& grads, double max_norm)
{
    if (max_norm <= 0.0)
        return;
    const double norm = neural::global_norm(grads);
    if (norm > max_norm)
        neural::scale_in_place(grads, max_norm / (norm + 1e-6));
}

std::size_t sample_categorical(const neural::Vector& log_probs, std::mt19937_64& rng)
{
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cumulative = 0.0;
    for (Eigen::Index i = 0; i < log_probs.size(); ++i)
    {
        cumulative += std::exp(log_probs(i));
        if (u < cumulative)
            return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(log_probs.size() - 1);
}

std::mt19937_64 iteration_rng(std::uint64_t seed, std::size_t iteration)
{
    return std::mt19937_64(derive_seed(derive_seed(seed, kStreamTraining), iteration));
}

} // namespace

std::vector<IterationSpec> default_schedule()
{
    return {
        {5e-5, 500, 150, 1500, 60.0, false},
        {1e-6, 300, 150, 1500, 60.0, false},
        {1e-6, 300, 550, 1650, 0.0, true},
    };
}

void PpoConfig::validate() const
{
    if (!(clip > 0.0 && clip < 1.0))
        throw ConfigError("ppo: clip must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw ConfigError("ppo: gamma must lie in [0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
        throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
    if (!std::isfinite(ent_coef) || !std::isfinite(value_coef) || value_coef < 0.0)
        throw ConfigError("ppo: invalid loss coefficients");
    if (epochs_per_rollout == 0)
        throw ConfigError("ppo: epochs_per_rollout must be positive");
    if (!(max_grad_norm >= 0.0))
        throw ConfigError("ppo: max_grad_norm must be non-negative");
    if (schedule.empty())
        throw ConfigError("ppo: empty schedule");
    for (std::size_t i = 0; i < schedule.size(); ++i)
    {
        const auto& it = schedule[i];
        const std::string where = "ppo: iteration " + std::to_string(i + 1) + ": ";
        if (!(it.lr_start >= 0.0) || !std::isfinite(it.lr_start))
            throw ConfigError(where + "lr must be non-negative");
        if (it.epochs == 0)
            throw ConfigError(where + "epochs must be positive");
        if (it.batch == 0 || it.rollout == 0)
            throw ConfigError(where + "batch and rollout must be positive");
        if (it.batch > it.rollout)
            throw ConfigError(where + "batch exceeds rollout length");
        if (it.rollout % it.batch != 0)
            throw ConfigError(where + "batch must divide the rollout length");
        if (!(it.trace_seconds >= 0.0))
            throw ConfigError(where + "trace_seconds must be non-negative");
    }
}

double scheduled_lr(const IterationSpec& iteration, std::size_t epoch)
{
    if (epoch >= iteration.epochs)
        return 0.0;
    return iteration.lr_start *
           (1.0 - static_cast<double>(epoch) / static_cast<double>(iteration.epochs));
}

RolloutMemory::RolloutMemory(std::size_t capacity, std::size_t obs_dim)
    : capacity_(capacity), observations_(static_cast<Eigen::Index>(obs_dim), static_cast<Eigen::Index>(capacity))
{
    if (capacity == 0)
        throw std::invalid_argument("rollout memory: zero capacity");
    actions_.reserve(capacity);
    log_probs_.reserve(capacity);
    rewards_.reserve(capacity);
    values_.reserve(capacity);
    dones_.reserve(capacity);
}

void RolloutMemory::push(std::span<const double> obs, std::size_t action, double log_prob, double reward,
                         double value, bool done)
{
    if (full())
        throw std::logic_error("rollout memory: full");
    if (obs.size() != obs_dim())
        throw std::invalid_argument("rollout memory: observation size mismatch");
    for (std::size_t i = 0; i < obs.size(); ++i)
        observations_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(size_)) = obs[i];
    actions_.push_back(action);
    log_probs_.push_back(log_prob);
    rewards_.push_back(reward);
    values_.push_back(value);
    dones_.push_back(done);
    ++size_;
}

void RolloutMemory::clear()
{
    size_ = 0;
    actions_.clear();
    log_probs_.clear();
    rewards_.clear();
    values_.clear();
    dones_.clear();
    bootstrap_value = 0.0;
}

Advantages compute_advantages(const RolloutMemory& memory, double gamma, double lambda)
{
    const std::size_t n = memory.size();
    if (n == 0)
        throw std::invalid_argument("compute_advantages: empty memory");
    Advantages out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    const auto& r = memory.rewards();
    const auto& v = memory.values();
    const auto& done = memory.dones();
    double gae = 0.0;
    for (std::size_t t = n; t-- > 0;)
    {
        const double next_value = done[t] ? 0.0 : (t + 1 < n ? v[t + 1] : memory.bootstrap_value);
        const double carry = done[t] ? 0.0 : gae;
        const double delta = r[t] + gamma * next_value - v[t];
        gae = delta + gamma * lambda * carry;
        out.advantages[t] = gae;
        out.returns[t] = gae + v[t];
    }
    return out;
}

double clipped_surrogate(double ratio, double advantage, double eps)
{
    return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

Batch make_batch(const RolloutMemory& memory, const Advantages& adv, std::size_t begin, std::size_t end)
{
    if (begin >= end || end > memory.size() || adv.advantages.size() != memory.size())
        throw std::out_of_range("make_batch: invalid range");
    Batch batch;
    const auto b = static_cast<Eigen::Index>(begin);
    const auto n = static_cast<Eigen::Index>(end - begin);
    batch.obs = memory.observations().middleCols(b, n);
    batch.actions.assign(memory.actions().begin() + b, memory.actions().begin() + b + n);
    batch.old_log_probs.assign(memory.log_probs().begin() + b, memory.log_probs().begin() + b + n);
    batch.advantages.assign(adv.advantages.begin() + b, adv.advantages.begin() + b + n);
    batch.returns.assign(adv.returns.begin() + b, adv.returns.begin() + b + n);
    return batch;
}

LossResult ppo_loss(const Batch& batch, const MlpParams& actor, const MlpParams& critic, const PpoConfig& cfg)
{
    const std::size_t n = batch.size();
    if (n == 0 || static_cast<std::size_t>(batch.obs.cols()) != n || batch.old_log_probs.size() != n ||
        batch.advantages.size() != n || batch.returns.size() != n)
        throw std::invalid_argument("ppo_loss: inconsistent batch");

    std::vector<double> adv = batch.advantages;
    if (cfg.normalize_advantages)
    {
        double mean = 0.0;
        for (double a : adv)
            mean += a;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double a : adv)
            var += (a - mean) * (a - mean);
        const double std = std::max(std::sqrt(var / static_cast<double>(n)), kStdFloor);
        for (double& a : adv)
            a = (a - mean) / std;
    }

    neural::ForwardCache actor_cache;
    neural::ForwardCache critic_cache;
    const Matrix logits = neural::forward_batch(actor, batch.obs, &actor_cache);
    const Matrix values = neural::forward_batch(critic, batch.obs, &critic_cache);
    const auto n_actions = logits.rows();

    Matrix g_logits = Matrix::Zero(n_actions, static_cast<Eigen::Index>(n));
    Matrix g_values = Matrix::Zero(1, static_cast<Eigen::Index>(n));
    const double inv_n = 1.0 / static_cast<double>(n);

    LossResult out;
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const auto col = static_cast<Eigen::Index>(i);
        const std::size_t a = batch.actions[i];
        if (a >= static_cast<std::size_t>(n_actions))
            throw std::out_of_range("ppo_loss: action out of range");
        const neural::Vector lp = neural::log_probs(logits.col(col));
        const neural::Vector p = lp.array().exp();
        const auto ai = static_cast<Eigen::Index>(a);

        const double ratio = std::exp(lp(ai) - batch.old_log_probs[i]);
        const double unclipped = ratio * adv[i];
        const double clipped_term = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv[i];
        out.policy_loss -= std::min(unclipped, clipped_term) * inv_n;
        if (std::abs(ratio - 1.0) > cfg.clip)
            ++clipped;

        // d(-surrogate)/d(log pi(a)) is -ratio * A on the unclipped branch, 0 otherwise.
        double g_lp = 0.0;
        if (unclipped <= clipped_term)
            g_lp = -ratio * adv[i] * inv_n;
        for (Eigen::Index j = 0; j < n_actions; ++j)
            g_logits(j, col) = g_lp * ((j == ai ? 1.0 : 0.0) - p(j));

        const double entropy = -(p.array() * lp.array()).sum();
        out.entropy += entropy * inv_n;
        for (Eigen::Index j = 0; j < n_actions; ++j)
            g_logits(j, col) += cfg.ent_coef * inv_n * p(j) * (lp(j) + entropy);

        const double err = values(0, col) - batch.returns[i];
        out.value_loss += err * err * inv_n;
        g_values(0, col) = cfg.value_coef * 2.0 * err * inv_n;
    }

    out.loss = out.policy_loss + cfg.value_coef * out.value_loss - cfg.ent_coef * out.entropy;
    out.clip_fraction = static_cast<double>(clipped) * inv_n;
    out.actor_grad = neural::backward(actor, actor_cache, g_logits);
    out.critic_grad = neural::backward(critic, critic_cache, g_values);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> minibatch_ranges(std::size_t m, std::size_t n)
{
    if (n == 0 || n > m)
        throw std::invalid_argument("minibatch_ranges: batch size must lie in [1, m]");
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t begin = 0; begin < m; begin += n)
        ranges.emplace_back(begin, std::min(begin + n, m));
    return ranges;
}

Agent Agent::create(std::size_t n_bs, std::uint64_t seed)
{
    const std::size_t obs_dim = 2 * n_bs + 1;
    Agent agent;
    const auto actor_dims = neural::architecture(obs_dim, n_bs);
    const auto critic_dims = neural::architecture(obs_dim, 1);
    agent.actor = neural::init(actor_dims, derive_seed(seed, 0), kActorOutputGain);
    agent.critic = neural::init(critic_dims, derive_seed(seed, 1), kCriticOutputGain);
    agent.actor_opt = OptState::for_params(agent.actor);
    agent.critic_opt = OptState::for_params(agent.critic);
    return agent;
}

UpdateStats update(RolloutMemory& memory, Agent& agent, const PpoConfig& cfg, std::size_t batch, double lr)
{
    if (batch == 0 || batch > memory.size())
        throw std::invalid_argument("update: batch size exceeds memory");
    const Advantages adv = compute_advantages(memory, cfg.gamma, cfg.gae_lambda);
    const auto ranges = minibatch_ranges(memory.size(), batch);
    std::vector<Batch> batches;
    batches.reserve(ranges.size());
    for (const auto& [begin, end] : ranges)
        batches.push_back(make_batch(memory, adv, begin, end));

    UpdateStats stats;
    for (std::size_t pass = 0; pass < cfg.epochs_per_rollout; ++pass)
    {
        for (const auto& b : batches)
        {
            LossResult loss = ppo_loss(b, agent.actor, agent.critic, cfg);
            clip_grad_norm(loss.actor_grad, cfg.max_grad_norm);
            clip_grad_norm(loss.critic_grad, cfg.max_grad_norm);
            neural::adam_step(agent.actor, loss.actor_grad, agent.actor_opt, lr);
            neural::adam_step(agent.critic, loss.critic_grad, agent.critic_opt, lr);
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.clip_fraction += loss.clip_fraction;
            ++stats.minibatches;
        }
    }
    const double k = static_cast<double>(stats.minibatches);
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    memory.clear();
    return stats;
}

neural::Vector to_vector(std::span<const double> values)
{
    neural::Vector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = values[i];
    return v;
}

RolloutStats collect_rollout(env::HandoverEnv& env, const Agent& agent, std::size_t m, std::mt19937_64& rng,
                             RolloutMemory& memory)
{
    if (m > memory.capacity() - memory.size())
        throw std::invalid_argument("collect_rollout: memory too small");
    if (env.done())
        env.restart();
    if (env.done())
        throw std::runtime_error("collect_rollout: trace has no decision point");

    RolloutStats stats;
    double reward_sum = 0.0;
    std::vector<double> obs = env.observation().flatten();
    for (std::size_t k = 0; k < m; ++k)
    {
        const neural::Vector x = to_vector(obs);
        const neural::Vector lp = neural::log_probs(neural::forward(agent.actor, x));
        const double value = neural::forward(agent.critic, x)(0);
        const std::size_t action = sample_categorical(lp, rng);

        const env::StepResult step = env.step(action);
        const bool done = step.terminated || step.info.truncated;
        memory.push(obs, action, lp(static_cast<Eigen::Index>(action)), step.reward, value, done);
        reward_sum += step.reward;
        stats.hof += step.info.hof ? 1 : 0;
        stats.pp += step.info.pp ? 1 : 0;
        if (done)
        {
            stats.terminations += step.terminated ? 1 : 0;
            env.restart();
            if (env.done())
                throw std::runtime_error("collect_rollout: trace has no decision point");
            obs = env.observation().flatten();
        }
        else
        {
            obs = step.obs.flatten();
        }
    }
    memory.bootstrap_value = neural::forward(agent.critic, to_vector(obs))(0);
    stats.mean_reward = reward_sum / static_cast<double>(m);
    return stats;
}

std::size_t argmax(std::span<const double> values)
{
    if (values.empty())
        throw std::invalid_argument("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best])
            best = i;
    return best;
}

std::size_t act_greedy(const MlpParams& actor, const env::Observation& obs)
{
    const neural::Vector logits = neural::forward(actor, to_vector(obs.flatten()));
    return argmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << kMetricsHeader << '\n';
    for (const auto& r : rows)
    {
        out << r.iteration << ',' << r.epoch << ',' << r.trace_id << ',' << format_double(r.lr) << ','
            << format_double(r.mean_reward) << ',' << r.terminations << ',' << r.hof << ',' << r.pp << ','
            << format_double(r.policy_loss) << ',' << format_double(r.value_loss) << ','
            << format_double(r.entropy) << '\n';
    }
    if (!out)
        throw std::runtime_error("write failed: " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw ParseError(path.string() + ": malformed metrics header");
    std::vector<MetricRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        if (cells.size() != 11)
            throw ParseError(where + "column count mismatch");
        auto num = [&](const std::string& s) {
            auto v = parse_double(s);
            if (!v)
                throw ParseError(where + "non-numeric cell '" + s + "'");
            return *v;
        };
        auto count = [&](const std::string& s) {
            const double v = num(s);
            if (v < 0.0 || v != std::floor(v))
                throw ParseError(where + "expected a count, got '" + s + "'");
            return static_cast<std::size_t>(v);
        };
        MetricRow r;
        r.iteration = count(cells[0]);
        r.epoch = count(cells[1]);
        r.trace_id = cells[2];
        r.lr = num(cells[3]);
        r.mean_reward = num(cells[4]);
        r.terminations = count(cells[5]);
        r.hof = count(cells[6]);
        r.pp = count(cells[7]);
        r.policy_loss = num(cells[8]);
        r.value_loss = num(cells[9]);
        r.entropy = num(cells[10]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string describe_schedule(const PpoConfig& cfg)
{
    std::ostringstream out;
    out << "iteration,lr_start,epochs,batch,rollout,trace,reset_on\n";
    for (std::size_t i = 0; i < cfg.schedule.size(); ++i)
    {
        const auto& it = cfg.schedule[i];
        out << (i + 1) << ',' << format_double(it.lr_start) << ',' << it.epochs << ',' << it.batch << ','
            << it.rollout << ',' << (it.trace_seconds > 0.0 ? format_double(it.trace_seconds) + "s" : "full") << ','
            << (it.reset_on_pp ? "hof+pp" : "hof") << '\n';
    }
    return out.str();
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t iteration)
{
    return dir / ("checkpoint_iter" + std::to_string(iteration) + ".json");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint)
{
    nlohmann::json j = {
        {"format", "holab-checkpoint"},
        {"version", 1},
        {"iteration", checkpoint.iteration},
        {"seed", checkpoint.seed},
        {"ent_coef", checkpoint.ent_coef},
        {"c", checkpoint.c},
        {"actor", neural::to_json(checkpoint.agent.actor)},
        {"critic", neural::to_json(checkpoint.agent.critic)},
        {"actor_opt", neural::to_json(checkpoint.agent.actor_opt)},
        {"critic_opt", neural::to_json(checkpoint.agent.critic_opt)},
    };
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot write " + tmp);
        out << j.dump() << '\n';
        if (!out)
            throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open checkpoint " + path.string());
    try
    {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format").get<std::string>() != "holab-checkpoint" || j.at("version").get<int>() != 1)
            throw ParseError(path.string() + ": unsupported checkpoint format");
        Checkpoint cp;
        cp.iteration = j.at("iteration").get<std::size_t>();
        cp.seed = j.at("seed").get<std::uint64_t>();
        cp.ent_coef = j.at("ent_coef").get<double>();
        cp.c = j.at("c").get<double>();
        cp.agent.actor = neural::params_from_json(j.at("actor"));
        cp.agent.critic = neural::params_from_json(j.at("critic"));
        cp.agent.actor_opt = neural::opt_from_json(j.at("actor_opt"));
        cp.agent.critic_opt = neural::opt_from_json(j.at("critic_opt"));
        if (cp.agent.critic.output_dim() != 1 || cp.agent.actor.input_dim() != cp.agent.critic.input_dim() ||
            cp.agent.actor.input_dim() != 2 * cp.agent.actor.output_dim() + 1)
            throw ParseError(path.string() + ": actor and critic shapes are inconsistent");
        return cp;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ParseError(path.string() + ": " + e.what());
    }
}

TrainRun train(const std::vector<tracegen::RadioTrace>& traces, const PpoConfig& cfg, const env::EnvConfig& env_cfg,
               std::uint64_t seed, const TrainOptions& options)
{
    cfg.validate();
    if (traces.empty())
        throw std::invalid_argument("train: no training traces");
    const std::size_t n_bs = traces.front().n_bs();
    for (const auto& t : traces)
        if (t.n_bs() != n_bs)
            throw std::invalid_argument("train: traces disagree on the number of BSs");

    TrainRun run;
    run.seed = seed;
    run.ent_coef = cfg.ent_coef;
    run.c = env_cfg.c;
    if (cfg.sample_hyperparams)
    {
        std::mt19937_64 hp(derive_seed(seed, kStreamHyperparams));
        static constexpr double kEntChoices[] = {0.1, 0.01, 0.001};
        run.ent_coef = kEntChoices[std::uniform_int_distribution<std::size_t>(0, 2)(hp)];
        run.c = std::uniform_real_distribution<double>(0.6, 0.95)(hp);
    }
    for (const auto& t : traces)
        run.train_ids.push_back(t.id);
    run.agent = Agent::create(n_bs, derive_seed(seed, kStreamInit));

    PpoConfig effective = cfg;
    effective.ent_coef = run.ent_coef;

    const bool persist = !options.out_dir.empty();
    if (persist)
        std::filesystem::create_directories(options.out_dir);
    const auto metrics_path = options.out_dir / "metrics.csv";

    std::size_t first_iteration = 0;
    if (persist && options.resume)
    {
        for (std::size_t k = cfg.schedule.size(); k >= 1; --k)
        {
            const auto path = checkpoint_path(options.out_dir, k);
            if (!std::filesystem::exists(path))
                continue;
            Checkpoint cp = load_checkpoint(path);
            if (cp.seed != seed || cp.iteration != k)
                throw std::runtime_error("resume: " + path.string() + " belongs to a different run");
            if (cp.agent.actor.output_dim() != n_bs)
                throw std::runtime_error("resume: checkpoint BS count does not match the traces");
            run.agent = std::move(cp.agent);
            run.ent_coef = cp.ent_coef;
            run.c = cp.c;
            effective.ent_coef = cp.ent_coef;
            first_iteration = k;
            for (std::size_t i = 1; i <= k; ++i)
                run.checkpoints.push_back(checkpoint_path(options.out_dir, i));
            if (std::filesystem::exists(metrics_path))
                for (auto& row : read_metrics_csv(metrics_path))
                    if (row.iteration <= k)
                        run.history.push_back(std::move(row));
            break;
        }
    }

    std::vector<std::shared_ptr<const tracegen::RadioTrace>> full;
    for (const auto& t : traces)
        full.push_back(std::make_shared<const tracegen::RadioTrace>(t));

    std::size_t completed = 0;
    for (std::size_t k = first_iteration; k < cfg.schedule.size(); ++k)
    {
        if (options.stop_after_iterations && completed >= options.stop_after_iterations)
            break;
        const IterationSpec& spec = cfg.schedule[k];
        std::vector<std::shared_ptr<const tracegen::RadioTrace>> pool;
        for (std::size_t i = 0; i < traces.size(); ++i)
        {
            if (spec.trace_seconds > 0.0 && spec.trace_seconds < traces[i].duration_s())
                pool.push_back(std::make_shared<const tracegen::RadioTrace>(tracegen::prefix(traces[i], spec.trace_seconds)));
            else
                pool.push_back(full[i]);
        }

        env::EnvConfig ecfg = env_cfg;
        ecfg.c = run.c;
        ecfg.reset_on_hof = true;
        ecfg.reset_on_pp = spec.reset_on_pp;
        env::HandoverEnv env(ecfg);
        RolloutMemory memory(spec.rollout, 2 * n_bs + 1);
        std::mt19937_64 rng = iteration_rng(seed, k + 1);
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);

        for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch)
        {
            const std::size_t idx = pick(rng);
            const std::uint64_t mapping_seed = rng();
            env.reset(pool[idx], mapping_seed, true);
            const RolloutStats rs = collect_rollout(env, run.agent, spec.rollout, rng, memory);
            const double lr = scheduled_lr(spec, epoch);
            const UpdateStats us = update(memory, run.agent, effective, spec.batch, lr);

            MetricRow row;
            row.iteration = k + 1;
            row.epoch = epoch;
            row.trace_id = traces[idx].id;
            row.lr = lr;
            row.mean_reward = rs.mean_reward;
            row.terminations = rs.terminations;
            row.hof = rs.hof;
            row.pp = rs.pp;
            row.policy_loss = us.policy_loss;
            row.value_loss = us.value_loss;
            row.entropy = us.entropy;
            run.history.push_back(row);
            if (options.on_epoch)
                options.on_epoch(row);
        }

        if (persist)
        {
            const auto path = checkpoint_path(options.out_dir, k + 1);
            save_checkpoint(path, {k + 1, seed, run.ent_coef, run.c, run.agent});
            run.checkpoints.push_back(path);
            write_metrics_csv(metrics_path, run.history);
        }
        ++completed;
    }
    return run;
}

} // namespace holab::ppo
