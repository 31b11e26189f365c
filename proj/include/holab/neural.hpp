#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace holab::neural {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer
{
    Matrix weights; // out x in
    Vector bias;    // out

    bool operator==(const DenseLayer& other) const
    {
        return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
               bias.size() == other.bias.size() && weights == other.weights && bias == other.bias;
    }
};

/// Dense network: rectifier after every layer except the last. Gradients
/// use the same type, one entry per parameter.
struct MlpParams
{
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols()); }
    std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weights.rows()); }
    std::vector<std::size_t> dims() const;
    std::size_t parameter_count() const;
    void validate() const;

    bool operator==(const MlpParams&) const = default;
};

/// Hidden widths used for both actor and critic.
inline constexpr std::size_t kHidden[] = {64, 128, 64};

std::vector<std::size_t> architecture(std::size_t input_dim, std::size_t output_dim);

/// Orthogonal weights (gain sqrt(2) on hidden layers, `output_gain` on the
/// last), zero biases.
MlpParams init(std::span<const std::size_t> dims, std::uint64_t seed, double output_gain);

MlpParams zeros_like(const MlpParams& params);

Vector forward(const MlpParams& params, const Vector& x);

/// Inputs of every layer, kept for the backward pass. Columns are samples.
struct ForwardCache
{
    std::vector<Matrix> inputs;
};

Matrix forward_batch(const MlpParams& params, const Matrix& x, ForwardCache* cache = nullptr);

/// Reverse-mode gradients of a scalar loss given dLoss/dOutput for each
/// sample column. Per-sample contributions are summed.
MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream);

Vector log_probs(const Vector& logits);

double global_norm(const MlpParams& grads);
void scale_in_place(MlpParams& grads, double factor);

struct OptState
{
    MlpParams first_moment;
    MlpParams second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptState for_params(const MlpParams& params);

    bool operator==(const OptState&) const = default;
};

/// Bias-corrected adaptive-moment descent step (params -= lr * update).
void adam_step(MlpParams& params, const MlpParams& grads, OptState& opt, double lr);

nlohmann::json to_json(const MlpParams& params);
MlpParams params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OptState& opt);
OptState opt_from_json(const nlohmann::json& j);

} // namespace holab::neural
