#ifndef CADV_MODEL_HPP
#define CADV_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cadv/common.hpp"
#include "cadv/schema.hpp"

namespace cadv {

/// Probability-scoring model h: X -> [0,1].  Gradient access is optional;
/// gradient-free models can only be attacked by the genetic search.
class Predictor {
public:
    virtual ~Predictor() = default;

    [[nodiscard]] virtual std::size_t input_dim() const = 0;
    [[nodiscard]] virtual double predict_proba(std::span<const double> x) const = 0;

    [[nodiscard]] virtual bool has_input_gradient() const { return false; }
    /// Gradient of the binary cross-entropy loss at label y with respect to x;
    /// coordinates with mask[i] == false are zero.
    [[nodiscard]] virtual Vector input_gradient(std::span<const double> x, int y, const std::vector<bool>& mask) const;
};

/// H(x) = 1 iff h(x) >= t.
struct ClassifierThreshold {
    double t{0.5};

    [[nodiscard]] int operator()(double probability) const { return probability >= t ? 1 : 0; }
    void validate() const;
};

enum class Activation { Relu, Sigmoid };

struct DenseLayer {
    std::size_t inputs{0};
    std::size_t outputs{0};
    Vector weights; // row-major, outputs x inputs
    Vector bias;
    Activation activation{Activation::Relu};
};

class MLP final : public Predictor {
public:
    MLP() = default;
    /// Checks that dimensions chain, the head is a single sigmoid unit and
    /// every parameter is finite.  Throws ModelError.
    explicit MLP(std::vector<DenseLayer> layers, std::string schema_hash = {});

    /// Randomly initialized network (He-uniform hidden layers, Glorot head).
    static MLP initialize(std::size_t input_dim, std::span<const std::size_t> hidden, std::uint64_t seed);

    [[nodiscard]] std::size_t input_dim() const override;
    [[nodiscard]] double predict_proba(std::span<const double> x) const override;
    [[nodiscard]] bool has_input_gradient() const override { return true; }
    [[nodiscard]] Vector input_gradient(std::span<const double> x, int y, const std::vector<bool>& mask) const override;

    /// Pre-sigmoid output.
    [[nodiscard]] double logit(std::span<const double> x) const;
    /// Unweighted binary cross-entropy at label y.
    [[nodiscard]] double loss(std::span<const double> x, int y) const;

    [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { return layers_; }
    [[nodiscard]] std::vector<std::size_t> hidden_sizes() const;
    [[nodiscard]] const std::string& schema_hash() const { return schema_hash_; }
    void set_schema_hash(std::string h) { schema_hash_ = std::move(h); }

private:
    void check_input(std::span<const double> x) const;

    std::vector<DenseLayer> layers_;
    std::string schema_hash_;
};

struct TrainConfig {
    std::size_t epochs{20};
    std::size_t batch_size{256};
    double learning_rate{1e-3};
    double beta1{0.9};
    double beta2{0.999};
    double adam_epsilon{1e-8};
    std::uint64_t seed{0};
    /// Inverse-frequency class weights in the loss.
    bool class_weighting{true};
    /// Fraction of the data held out for the reported AUROC (0 disables).
    double holdout_fraction{0.2};

    void validate() const;
};

struct TrainResult {
    MLP model;
    /// Mean weighted training loss after each epoch.
    std::vector<double> epoch_loss;
    /// NaN when the holdout is empty or single-class.
    double holdout_auroc{0.0};
};

/// Mini-batch Adam on binary cross-entropy.  Deterministic given cfg.seed.
TrainResult train(const Dataset& data, std::span<const std::size_t> hidden, const TrainConfig& cfg);

/// Area under the ROC curve with mid-rank tie handling.
double auroc(std::span<const double> scores, std::span<const int> labels);
double auroc(const Predictor& model, const Dataset& data);
double accuracy(const Predictor& model, const Dataset& data, ClassifierThreshold t = {});

/// JSON: {"layers":[{"w":[[..]],"b":[..],"act":"relu"|"sigmoid"}],"schema_hash":".."}.
std::string model_to_json(const MLP& model);
MLP model_from_json(std::string_view text);
void save_model(const std::filesystem::path& path, const MLP& model);
MLP load_model(const std::filesystem::path& path);

} // namespace cadv

#endif
