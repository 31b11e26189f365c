#include "holab/neural.hpp"

#include "holab/error.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace holab::neural {

namespace {

Matrix orthogonal(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto tall = static_cast<Eigen::Index>(std::max(rows, cols));
    const auto thin = static_cast<Eigen::Index>(std::min(rows, cols));
    Matrix a(tall, thin);
    for (Eigen::Index j = 0; j < thin; ++j)
        for (Eigen::Index i = 0; i < tall; ++i)
            a(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(tall, thin);
    const Matrix r = qr.matrixQR().topRows(thin).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < thin; ++j)
        if (r(j, j) < 0.0)
            q.col(j) *= -1.0;
    Matrix w = rows < cols ? Matrix(q.transpose()) : q;
    return gain * w;
}

template <typename Fn>
void for_each_pair(MlpParams& a, const MlpParams& b, Fn&& fn)
{
    if (a.layers.size() != b.layers.size())
        throw std::invalid_argument("parameter structures differ");
    for (std::size_t l = 0; l < a.layers.size(); ++l)
    {
        if (a.layers[l].weights.rows() != b.layers[l].weights.rows() ||
            a.layers[l].weights.cols() != b.layers[l].weights.cols() ||
            a.layers[l].bias.size() != b.layers[l].bias.size())
            throw std::invalid_argument("parameter shapes differ");
        fn(a.layers[l].weights, b.layers[l].weights);
        fn(a.layers[l].bias, b.layers[l].bias);
    }
}

} // namespace

std::vector<std::size_t> MlpParams::dims() const
{
    std::vector<std::size_t> d;
    if (layers.empty())
        return d;
    d.push_back(input_dim());
    for (const auto& layer : layers)
        d.push_back(static_cast<std::size_t>(layer.weights.rows()));
    return d;
}

std::size_t MlpParams::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& layer : layers)
        n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    return n;
}

void MlpParams::validate() const
{
    if (layers.empty())
        throw std::invalid_argument("mlp: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l)
    {
        if (layers[l].bias.size() != layers[l].weights.rows())
            throw std::invalid_argument("mlp: bias length does not match layer width");
        if (l > 0 && layers[l].weights.cols() != layers[l - 1].weights.rows())
            throw std::invalid_argument("mlp: layer dimensions do not chain");
        if (!layers[l].weights.allFinite() || !layers[l].bias.allFinite())
            throw std::invalid_argument("mlp: non-finite parameter");
    }
}

std::vector<std::size_t> architecture(std::size_t input_dim, std::size_t output_dim)
{
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), std::begin(kHidden), std::end(kHidden));
    dims.push_back(output_dim);
    return dims;
}

MlpParams init(std::span<const std::size_t> dims, std::uint64_t seed, double output_gain)
{
    if (dims.size() < 2)
        throw std::invalid_argument("init: need at least input and output dimensions");
    for (std::size_t d : dims)
        if (d == 0)
            throw std::invalid_argument("init: zero-width layer");
    std::mt19937_64 rng(seed);
    MlpParams params;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    {
        const bool last = l + 2 == dims.size();
        DenseLayer layer;
        layer.weights = orthogonal(dims[l + 1], dims[l], last ? output_gain : std::sqrt(2.0), rng);
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(dims[l + 1]));
        params.layers.push_back(std::move(layer));
    }
    return params;
}

MlpParams zeros_like(const MlpParams& params)
{
    MlpParams z;
    for (const auto& layer : params.layers)
        z.layers.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()), Vector::Zero(layer.bias.size())});
    return z;
}

Vector forward(const MlpParams& params, const Vector& x)
{
    if (static_cast<std::size_t>(x.size()) != params.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    Vector a = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l)
    {
        Vector z = params.layers[l].weights * a + params.layers[l].bias;
        a = l + 1 < params.layers.size() ? Vector(z.cwiseMax(0.0)) : z;
    }
    return a;
}

Matrix forward_batch(const MlpParams& params, const Matrix& x, ForwardCache* cache)
{
    if (static_cast<std::size_t>(x.rows()) != params.input_dim())
        throw std::invalid_argument("forward_batch: input dimension mismatch");
    if (cache)
        cache->inputs.clear();
    Matrix a = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l)
    {
        if (cache)
            cache->inputs.push_back(a);
        Matrix z = params.layers[l].weights * a;
        z.colwise() += params.layers[l].bias;
        a = l + 1 < params.layers.size() ? Matrix(z.cwiseMax(0.0)) : std::move(z);
    }
    return a;
}

MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream)
{
    if (cache.inputs.size() != params.layers.size())
        throw std::invalid_argument("backward: cache does not match network");
    if (static_cast<std::size_t>(upstream.rows()) != params.output_dim() ||
        upstream.cols() != cache.inputs.front().cols())
        throw std::invalid_argument("backward: upstream gradient shape mismatch");
    MlpParams grads;
    grads.layers.resize(params.layers.size());
    Matrix delta = upstream;
    for (std::size_t l = params.layers.size(); l-- > 0;)
    {
        const Matrix& input = cache.inputs[l];
        grads.layers[l].weights = delta * input.transpose();
        grads.layers[l].bias = delta.rowwise().sum();
        if (l > 0)
        {
            Matrix back = params.layers[l].weights.transpose() * delta;
            // input = relu(z), so relu'(z) is 1 exactly where input > 0.
            delta = back.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
        }
    }
    return grads;
}

Vector log_probs(const Vector& logits)
{
    const double max = logits.maxCoeff();
    const Vector shifted = logits.array() - max;
    const double log_sum = std::log(shifted.array().exp().sum());
    return shifted.array() - log_sum;
}

double global_norm(const MlpParams& grads)
{
    double sq = 0.0;
    for (const auto& layer : grads.layers)
        sq += layer.weights.squaredNorm() + layer.bias.squaredNorm();
    return std::sqrt(sq);
}

void scale_in_place(MlpParams& grads, double factor)
{
    for (auto& layer : grads.layers)
    {
        layer.weights *= factor;
        layer.bias *= factor;
    }
}

OptState OptState::for_params(const MlpParams& params)
{
    OptState opt;
    opt.first_moment = zeros_like(params);
    opt.second_moment = zeros_like(params);
    return opt;
}

void adam_step(MlpParams& params, const MlpParams& grads, OptState& opt, double lr)
{
    ++opt.step;
    const double b1 = opt.beta1;
    const double b2 = opt.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));

    for_each_pair(opt.first_moment, grads, [&](auto& m, const auto& g) { m = b1 * m + (1.0 - b1) * g; });
    for_each_pair(opt.second_moment, grads,
                  [&](auto& v, const auto& g) { v = b2 * v + (1.0 - b2) * g.cwiseProduct(g); });

    for (std::size_t l = 0; l < params.layers.size(); ++l)
    {
        auto update = [&](auto& p, const auto& m, const auto& v) {
            p.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + opt.epsilon);
        };
        update(params.layers[l].weights, opt.first_moment.layers[l].weights, opt.second_moment.layers[l].weights);
        update(params.layers[l].bias, opt.first_moment.layers[l].bias, opt.second_moment.layers[l].bias);
    }
}

nlohmann::json to_json(const MlpParams& params)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : params.layers)
    {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                w.push_back(layer.weights(r, c));
        std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
        layers.push_back({{"rows", layer.weights.rows()}, {"cols", layer.weights.cols()}, {"weights", w}, {"bias", b}});
    }
    return {{"format", "holab-mlp"}, {"version", 1}, {"layers", layers}};
}

MlpParams params_from_json(const nlohmann::json& j)
{
    try
    {
        if (j.at("format").get<std::string>() != "holab-mlp" || j.at("version").get<int>() != 1)
            throw ParseError("checkpoint: unsupported network format");
        MlpParams params;
        for (const auto& entry : j.at("layers"))
        {
            const auto rows = entry.at("rows").get<Eigen::Index>();
            const auto cols = entry.at("cols").get<Eigen::Index>();
            const auto w = entry.at("weights").get<std::vector<double>>();
            const auto b = entry.at("bias").get<std::vector<double>>();
            if (rows <= 0 || cols <= 0 || w.size() != static_cast<std::size_t>(rows * cols) ||
                b.size() != static_cast<std::size_t>(rows))
                throw ParseError("checkpoint: layer shape does not match its data");
            DenseLayer layer{Matrix(rows, cols), Vector(rows)};
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
            for (Eigen::Index r = 0; r < rows; ++r)
                layer.bias(r) = b[static_cast<std::size_t>(r)];
            params.layers.push_back(std::move(layer));
        }
        params.validate();
        return params;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    catch (const std::invalid_argument& e)
    {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

nlohmann::json to_json(const OptState& opt)
{
    return {{"step", opt.step},
            {"beta1", opt.beta1},
            {"beta2", opt.beta2},
            {"epsilon", opt.epsilon},
            {"m", to_json(opt.first_moment)},
            {"v", to_json(opt.second_moment)}};
}

OptState opt_from_json(const nlohmann::json& j)
{
    try
    {
        OptState opt;
        opt.step = j.at("step").get<std::int64_t>();
        opt.beta1 = j.at("beta1").get<double>();
        opt.beta2 = j.at("beta2").get<double>();
        opt.epsilon = j.at("epsilon").get<double>();
        opt.first_moment = params_from_json(j.at("m"));
        opt.second_moment = params_from_json(j.at("v"));
        return opt;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ParseError(std::string("optimizer state: ") + e.what());
    }
}

} // namespace holab::neural
