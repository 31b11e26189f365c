#pragma once

#include "holab/env.hpp"
#include "holab/neural.hpp"
#include "holab/tracegen.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace holab::ppo {

using neural::Matrix;
using neural::MlpParams;
using neural::OptState;

/// One stage of the training schedule. The learning rate decays linearly
/// from `lr_start` to zero over `epochs`.
struct IterationSpec
{
    double lr_start = 5e-5;
    std::size_t epochs = 500;
    std::size_t batch = 150;
    std::size_t rollout = 1500;
    /// Length of the trace prefix used for training; 0 means the whole trace.
    double trace_seconds = 60.0;
    bool reset_on_pp = false;

    bool operator==(const IterationSpec&) const = default;
};

/// 1-minute prefixes at 5e-5 for 500 epochs, then 300 epochs at 1e-6, then
/// 300 epochs at 1e-6 on full traces with ping-pong resets and batch 550.
std::vector<IterationSpec> default_schedule();

struct PpoConfig
{
    double clip = 0.2;
    double ent_coef = 0.1;
    double value_coef = 0.5;
    double gamma = 0.99;
    double gae_lambda = 0.95;
    std::size_t epochs_per_rollout = 10;
    bool normalize_advantages = true;
    /// Per-network gradient norm clip; 0 disables.
    double max_grad_norm = 0.5;
    /// Draw ent_coef from {0.1, 0.01, 0.001} and C from U[0.6, 0.95].
    bool sample_hyperparams = false;
    std::vector<IterationSpec> schedule = default_schedule();

    void validate() const;
};

double scheduled_lr(const IterationSpec& iteration, std::size_t epoch);

/// Transitions in trajectory order. Observations are stored as columns.
class RolloutMemory
{
  public:
    RolloutMemory(std::size_t capacity, std::size_t obs_dim);

    void push(std::span<const double> obs, std::size_t action, double log_prob, double reward, double value,
              bool done);
    void clear();

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t obs_dim() const { return static_cast<std::size_t>(observations_.rows()); }
    bool full() const { return size_ == capacity_; }

    const Matrix& observations() const { return observations_; }
    const std::vector<std::size_t>& actions() const { return actions_; }
    const std::vector<double>& log_probs() const { return log_probs_; }
    const std::vector<double>& rewards() const { return rewards_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<bool>& dones() const { return dones_; }

    /// V(s) of the state following the last transition, used when that
    /// transition did not end an episode.
    double bootstrap_value = 0.0;

  private:
    std::size_t capacity_;
    std::size_t size_ = 0;
    Matrix observations_;
    std::vector<std::size_t> actions_;
    std::vector<double> log_probs_;
    std::vector<double> rewards_;
    std::vector<double> values_;
    std::vector<bool> dones_;
};

struct Advantages
{
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// Generalized advantage estimation; done flags cut the bootstrap.
Advantages compute_advantages(const RolloutMemory& memory, double gamma, double lambda);

/// min(r A, clip(r, 1 - eps, 1 + eps) A).
double clipped_surrogate(double ratio, double advantage, double eps);

struct Batch
{
    Matrix obs;
    std::vector<std::size_t> actions;
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    std::vector<double> returns;

    std::size_t size() const { return actions.size(); }
};

Batch make_batch(const RolloutMemory& memory, const Advantages& adv, std::size_t begin, std::size_t end);

struct LossResult
{
    double loss = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    MlpParams actor_grad;
    MlpParams critic_grad;
};

/// Clipped surrogate + value_coef * MSE - ent_coef * entropy, with gradients
/// for both networks.
LossResult ppo_loss(const Batch& batch, const MlpParams& actor, const MlpParams& critic, const PpoConfig& cfg);

/// Sequential, unshuffled mini-batch bounds: [0, n), [n, 2n), ...
std::vector<std::pair<std::size_t, std::size_t>> minibatch_ranges(std::size_t m, std::size_t n);

struct Agent
{
    MlpParams actor;
    MlpParams critic;
    OptState actor_opt;
    OptState critic_opt;

    static Agent create(std::size_t n_bs, std::uint64_t seed);

    bool operator==(const Agent&) const = default;
};

struct UpdateStats
{
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    std::size_t minibatches = 0;
};

/// Runs `cfg.epochs_per_rollout` passes over the memory in `batch`-sized
/// chunks, then clears it.
UpdateStats update(RolloutMemory& memory, Agent& agent, const PpoConfig& cfg, std::size_t batch, double lr);

struct RolloutStats
{
    double mean_reward = 0.0;
    std::size_t terminations = 0;
    std::size_t hof = 0;
    std::size_t pp = 0;
};

/// Samples from the categorical policy until the memory holds `m`
/// transitions; terminated or exhausted episodes restart at t = 0.
RolloutStats collect_rollout(env::HandoverEnv& env, const Agent& agent, std::size_t m, std::mt19937_64& rng,
                             RolloutMemory& memory);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);
std::size_t act_greedy(const MlpParams& actor, const env::Observation& obs);

neural::Vector to_vector(std::span<const double> values);

struct MetricRow
{
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    std::string trace_id;
    double lr = 0.0;
    double mean_reward = 0.0;
    std::size_t terminations = 0;
    std::size_t hof = 0;
    std::size_t pp = 0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;

    bool operator==(const MetricRow&) const = default;
};

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct TrainRun
{
    std::uint64_t seed = 0;
    double ent_coef = 0.0;
    double c = 0.0;
    std::vector<std::string> train_ids;
    Agent agent;
    std::vector<MetricRow> history;
    std::vector<std::filesystem::path> checkpoints;
};

struct TrainOptions
{
    /// When set, per-iteration checkpoints and metrics.csv go here.
    std::filesystem::path out_dir;
    /// Continue after the last checkpoint found in out_dir.
    bool resume = false;
    /// Stop after this many iterations (0 = all); used to simulate interruption.
    std::size_t stop_after_iterations = 0;
    std::function<void(const MetricRow&)> on_epoch;
};

std::string describe_schedule(const PpoConfig& cfg);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t iteration);

struct Checkpoint
{
    std::size_t iteration = 0;
    std::uint64_t seed = 0;
    double ent_coef = 0.0;
    double c = 0.0;
    Agent agent;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The full training schedule over `traces` (all treated as training data).
TrainRun train(const std::vector<tracegen::RadioTrace>& traces, const PpoConfig& cfg, const env::EnvConfig& env_cfg,
               std::uint64_t seed, const TrainOptions& options = {});

} // namespace holab::ppo
