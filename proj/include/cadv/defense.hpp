#ifndef CADV_DEFENSE_HPP
#define CADV_DEFENSE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cadv/cpgd.hpp"
#include "cadv/moeva.hpp"
#include "cadv/model.hpp"

namespace cadv {

/// Permutation importance: mean AUROC drop over `repeats` shuffles of each
/// column of `data`.  Immutable features score 0; scores are clamped at 0.
Vector feature_importance(const Predictor& model, const FeatureSchema& schema, const Dataset& data,
                          std::uint64_t seed, std::size_t repeats = 5);

/// Binary feature f_e = (mean_a <= x_a) XOR (mean_b <= x_b), thresholds in
/// original units.
struct EngineeredFeature {
    std::string name;
    std::string source_a;
    std::string source_b;
    double mean_a{0.0};
    double mean_b{0.0};

    [[nodiscard]] int value(double a, double b) const { return ((mean_a <= a) != (mean_b <= b)) ? 1 : 0; }
    /// The constraint tying the bit to its sources, in the constraint language.
    [[nodiscard]] std::string constraint_text() const;
};

struct AugmentationPlan {
    std::vector<EngineeredFeature> features;
    Vector importance;
};

/// Largest k with C(k,2) < n_features / 4.
std::size_t pair_budget(std::size_t n_features);

/// Picks the top-k movable features by importance (ties by schema order, k
/// capped by the movable count) and pairs them all; means come from `train`.
AugmentationPlan build_plan(const FeatureSchema& schema, const Vector& importance, const Dataset& train);

FeatureSchema augment_schema(const FeatureSchema& schema, const AugmentationPlan& plan);
Dataset augment_dataset(const FeatureSchema& schema, const Dataset& data, const AugmentationPlan& plan);
/// Original constraints followed by one constraint per engineered feature.
ConstraintSet augment_constraints(const ConstraintSet& omega, const AugmentationPlan& plan);

std::string plan_to_json(const AugmentationPlan& plan);
AugmentationPlan plan_from_json(std::string_view text);
void save_plan(const std::filesystem::path& path, const AugmentationPlan& plan);
AugmentationPlan load_plan(const std::filesystem::path& path);

enum class RetrainAttack { Cpgd, Moeva };

struct RetrainConfig {
    RetrainAttack attack{RetrainAttack::Moeva};
    /// Budget of the attack run on training data.
    double eps_def{0.05};
    /// Cap on attacked training examples (0 = all eligible).
    std::size_t max_examples{0};
    std::uint64_t seed{0};
    GAConfig ga{};
    GradAttackConfig grad{};
    TrainConfig train{};
};

struct RetrainResult {
    MLP model;
    std::size_t eligible{0};
    std::size_t attacked{0};
    std::size_t appended{0};
    double holdout_auroc{0.0};
    /// The appended adversarial examples (all labeled 1).
    Dataset adversarial;
};

/// Attacks correctly classified class-1 training rows with budget eps_def,
/// appends the successful adversarial examples with label 1, and retrains
/// from scratch with the same architecture and cfg.train.
RetrainResult adversarial_retrain(const MLP& model, const Dataset& train_set, const FeatureSchema& schema,
                                  const ConstraintSet& omega, const RetrainConfig& cfg);

} // namespace cadv

#endif
