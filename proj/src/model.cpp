#include "cadv/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "text_util.hpp"

namespace cadv {

Vector Predictor::input_gradient(std::span<const double>, int, const std::vector<bool>&) const
{
    throw ModelError("predictor does not provide input gradients");
}

void ClassifierThreshold::validate() const
{
    if (!(t > 0.0 && t < 1.0)) {
        throw ConfigError("classification threshold must lie in (0, 1)");
    }
}

namespace {

double sigmoid(double z)
{
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void affine(const DenseLayer& layer, std::span<const double> in, Vector& out)
{
    out.resize(layer.outputs);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double* w = &layer.weights[o * layer.inputs];
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < layer.inputs; ++i) {
            acc += w[i] * in[i];
        }
        out[o] = acc;
    }
}

std::string_view activation_name(Activation a) { return a == Activation::Relu ? "relu" : "sigmoid"; }

/// Forward pass keeping every layer's pre-activation and activation.
struct Trace {
    std::vector<Vector> pre;
    std::vector<Vector> post;
};

double forward(const std::vector<DenseLayer>& layers, std::span<const double> x, Trace* trace)
{
    Vector current(x.begin(), x.end());
    Vector z;
    if (trace) {
        trace->pre.resize(layers.size());
        trace->post.resize(layers.size() + 1);
        trace->post[0] = current;
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        affine(layers[l], current, z);
        const bool last = l + 1 == layers.size();
        if (trace) {
            trace->pre[l] = z;
        }
        if (last) {
            // Head: return the logit; the sigmoid is applied by callers.
            if (trace) {
                trace->post[l + 1] = {sigmoid(z[0])};
            }
            return z[0];
        }
        for (auto& v : z) {
            v = layers[l].activation == Activation::Relu ? std::max(0.0, v) : sigmoid(v);
        }
        if (trace) {
            trace->post[l + 1] = z;
        }
        std::swap(current, z);
    }
    return 0.0;
}

/// Backpropagates dL/dlogit.  Accumulates parameter gradients when given and
/// returns dL/dx.
Vector backward(const std::vector<DenseLayer>& layers, const Trace& trace, double dlogit,
                std::vector<DenseLayer>* param_grad, double weight)
{
    Vector delta{dlogit};
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& layer = layers[l];
        const bool last = l + 1 == layers.size();
        if (!last) {
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                const double a = trace.post[l + 1][o];
                delta[o] *= layer.activation == Activation::Relu ? (trace.pre[l][o] > 0.0 ? 1.0 : 0.0) : a * (1.0 - a);
            }
        }
        const Vector& input = trace.post[l];
        if (param_grad) {
            auto& g = (*param_grad)[l];
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                const double d = weight * delta[o];
                if (d == 0.0) continue;
                double* gw = &g.weights[o * layer.inputs];
                for (std::size_t i = 0; i < layer.inputs; ++i) {
                    gw[i] += d * input[i];
                }
                g.bias[o] += d;
            }
        }
        Vector prev(layer.inputs, 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const double* w = &layer.weights[o * layer.inputs];
            for (std::size_t i = 0; i < layer.inputs; ++i) {
                prev[i] += w[i] * d;
            }
        }
        delta = std::move(prev);
    }
    return delta;
}

} // namespace

MLP::MLP(std::vector<DenseLayer> layers, std::string schema_hash)
    : layers_(std::move(layers)), schema_hash_(std::move(schema_hash))
{
    if (layers_.empty()) {
        throw ModelError("model has no layers");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.inputs == 0 || layer.outputs == 0) {
            throw ModelError("layer " + std::to_string(l) + " has a zero dimension");
        }
        if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
            throw ModelError("layer " + std::to_string(l) + " parameter shapes are inconsistent");
        }
        if (l > 0 && layers_[l - 1].outputs != layer.inputs) {
            throw ModelError("layer " + std::to_string(l) + " input size does not match previous layer");
        }
        auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite)
            || !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
            throw ModelError("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
    if (layers_.back().outputs != 1 || layers_.back().activation != Activation::Sigmoid) {
        throw ModelError("final layer must be a single sigmoid unit");
    }
}

MLP MLP::initialize(std::size_t input_dim, std::span<const std::size_t> hidden, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    std::size_t in = input_dim;
    auto make = [&](std::size_t out, Activation act, double limit) {
        DenseLayer layer{in, out, Vector(in * out), Vector(out, 0.0), act};
        for (auto& w : layer.weights) {
            w = rng.uniform(-limit, limit);
        }
        layers.push_back(std::move(layer));
        in = out;
    };
    for (auto h : hidden) {
        make(h, Activation::Relu, std::sqrt(6.0 / static_cast<double>(in)));
    }
    make(1, Activation::Sigmoid, std::sqrt(6.0 / static_cast<double>(in + 1)));
    return MLP(std::move(layers));
}

std::size_t MLP::input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs; }

void MLP::check_input(std::span<const double> x) const
{
    if (layers_.empty()) {
        throw ModelError("model has no layers");
    }
    if (x.size() != input_dim()) {
        throw ModelError("input has " + std::to_string(x.size()) + " features, model expects "
                         + std::to_string(input_dim()));
    }
}

double MLP::logit(std::span<const double> x) const
{
    check_input(x);
    return forward(layers_, x, nullptr);
}

double MLP::predict_proba(std::span<const double> x) const { return sigmoid(logit(x)); }

double MLP::loss(std::span<const double> x, int y) const
{
    const double z = logit(x);
    return softplus(z) - static_cast<double>(y) * z;
}

Vector MLP::input_gradient(std::span<const double> x, int y, const std::vector<bool>& mask) const
{
    check_input(x);
    if (mask.size() != x.size()) {
        throw ModelError("mask length does not match input");
    }
    Trace trace;
    const double z = forward(layers_, x, &trace);
    auto g = backward(layers_, trace, sigmoid(z) - static_cast<double>(y), nullptr, 1.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!mask[i]) {
            g[i] = 0.0;
        }
    }
    return g;
}

std::vector<std::size_t> MLP::hidden_sizes() const
{
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        out.push_back(layers_[l].outputs);
    }
    return out;
}

void TrainConfig::validate() const
{
    if (epochs == 0 || batch_size == 0) {
        throw ConfigError("epochs and batch size must be positive");
    }
    if (!(learning_rate > 0.0) || !(adam_epsilon > 0.0)) {
        throw ConfigError("learning rate and Adam epsilon must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam moments must lie in [0, 1)");
    }
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout fraction must lie in [0, 1)");
    }
}

TrainResult train(const Dataset& data, std::span<const std::size_t> hidden, const TrainConfig& cfg)
{
    cfg.validate();
    if (data.empty()) {
        throw ModelError("cannot train on an empty dataset");
    }
    const std::size_t dim = data.samples.front().size();
    for (const auto& s : data.samples) {
        if (s.size() != dim) {
            throw ModelError("dataset rows have inconsistent dimensions");
        }
    }
    const auto positives = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
    if (positives == 0 || positives == data.size()) {
        throw ModelError("training data must contain both classes");
    }

    Rng rng(mix_seed(cfg.seed, 1));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto n_holdout = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> fit(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_holdout));
    std::vector<std::size_t> holdout(order.end() - static_cast<std::ptrdiff_t>(n_holdout), order.end());
    std::sort(fit.begin(), fit.end());

    double w_pos = 1.0;
    double w_neg = 1.0;
    if (cfg.class_weighting) {
        std::size_t fit_pos = 0;
        for (auto i : fit) fit_pos += data.labels[i] == 1 ? 1 : 0;
        const auto n = static_cast<double>(fit.size());
        if (fit_pos > 0 && fit_pos < fit.size()) {
            w_pos = n / (2.0 * static_cast<double>(fit_pos));
            w_neg = n / (2.0 * static_cast<double>(fit.size() - fit_pos));
        }
    }

    TrainResult result{MLP::initialize(dim, hidden, mix_seed(cfg.seed, 2)), {}, 0.0};
    auto& layers = result.model.mutable_layers();

    auto zeros_like = [&] {
        auto g = layers;
        for (auto& layer : g) {
            std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
            std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
        }
        return g;
    };
    auto m = zeros_like();
    auto v = zeros_like();
    std::size_t step = 0;

    auto adam_update = [&](Vector& param, const Vector& grad, Vector& m1, Vector& m2, double lr_t) {
        for (std::size_t k = 0; k < param.size(); ++k) {
            m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * grad[k];
            m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            param[k] -= lr_t * m1[k] / (std::sqrt(m2[k]) + cfg.adam_epsilon);
        }
    };

    Trace trace;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(fit);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < fit.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(fit.size(), start + cfg.batch_size);
            auto grad = zeros_like();
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const auto idx = fit[b];
                const int y = data.labels[idx];
                const double w = y == 1 ? w_pos : w_neg;
                const double z = forward(layers, data.samples[idx], &trace);
                epoch_loss += w * (softplus(z) - static_cast<double>(y) * z);
                backward(layers, trace, sigmoid(z) - static_cast<double>(y), &grad, w * inv_batch);
            }
            ++step;
            const double correction = std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(step)))
                                      / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
            const double lr_t = cfg.learning_rate * correction;
            for (std::size_t l = 0; l < layers.size(); ++l) {
                adam_update(layers[l].weights, grad[l].weights, m[l].weights, v[l].weights, lr_t);
                adam_update(layers[l].bias, grad[l].bias, m[l].bias, v[l].bias, lr_t);
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(fit.size()));
    }

    result.model = MLP(std::move(layers));
    if (holdout.empty()) {
        result.holdout_auroc = std::numeric_limits<double>::quiet_NaN();
    } else {
        Vector scores;
        std::vector<int> labels;
        for (auto i : holdout) {
            scores.push_back(result.model.predict_proba(data.samples[i]));
            labels.push_back(data.labels[i]);
        }
        result.holdout_auroc = auroc(scores, labels);
    }
    return result;
}

double auroc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) {
        throw DataError("auroc: scores and labels differ in length");
    }
    const auto n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    Vector rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }
    double pos = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == 1) {
            pos += 1.0;
            rank_sum += rank[i];
        }
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auroc(const Predictor& model, const Dataset& data)
{
    Vector scores;
    scores.reserve(data.size());
    for (const auto& s : data.samples) {
        scores.push_back(model.predict_proba(s));
    }
    return auroc(scores, data.labels);
}

double accuracy(const Predictor& model, const Dataset& data, ClassifierThreshold t)
{
    if (data.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        correct += t(model.predict_proba(data.samples[i])) == data.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string model_to_json(const MLP& model)
{
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : model.layers()) {
        nlohmann::json w = nlohmann::json::array();
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            w.push_back(Vector(layer.weights.begin() + static_cast<std::ptrdiff_t>(o * layer.inputs),
                               layer.weights.begin() + static_cast<std::ptrdiff_t>((o + 1) * layer.inputs)));
        }
        j["layers"].push_back({{"w", w}, {"b", layer.bias}, {"act", activation_name(layer.activation)}});
    }
    j["schema_hash"] = model.schema_hash();
    return j.dump() + "\n";
}

MLP model_from_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelError(std::string("malformed model file: ") + e.what());
    }
    try {
        if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array()) {
            throw ModelError("model file needs a 'layers' array");
        }
        std::vector<DenseLayer> layers;
        for (const auto& jl : j["layers"]) {
            DenseLayer layer;
            const auto rows = jl.at("w").get<std::vector<Vector>>();
            layer.bias = jl.at("b").get<Vector>();
            const auto act = jl.at("act").get<std::string>();
            if (act == "relu") layer.activation = Activation::Relu;
            else if (act == "sigmoid") layer.activation = Activation::Sigmoid;
            else throw ModelError("unknown activation '" + act + "'");
            layer.outputs = rows.size();
            layer.inputs = rows.empty() ? 0 : rows.front().size();
            for (const auto& row : rows) {
                if (row.size() != layer.inputs) {
                    throw ModelError("ragged weight matrix");
                }
                layer.weights.insert(layer.weights.end(), row.begin(), row.end());
            }
            layers.push_back(std::move(layer));
        }
        std::string hash = j.contains("schema_hash") && j["schema_hash"].is_string() ? j["schema_hash"].get<std::string>() : "";
        return MLP(std::move(layers), std::move(hash));
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const MLP& model)
{
    detail::write_file(path, model_to_json(model));
}

MLP load_model(const std::filesystem::path& path) { return model_from_json(detail::read_file(path)); }

} // namespace cadv
