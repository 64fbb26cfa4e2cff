#ifndef CADV_CPGD_HPP
#define CADV_CPGD_HPP

#include <functional>
#include <optional>
#include <vector>

#include "cadv/attack.hpp"

namespace cadv {

struct GradAttackConfig {
    /// Budget in scaled space.
    double eps{0.2};
    NormOrder p{NormOrder::L2};
    /// Step size; eps / 10 when unset.
    std::optional<double> alpha;
    std::size_t n_iter{100};
    bool random_init{false};
    ClassifierThreshold threshold{};
    /// Multiplier on the summed penalty gradient.
    double penalty_weight{1.0};
    PenaltyConfig penalty{};
    std::uint64_t seed{0};
    /// Workers for attack_batch; 0 = hardware concurrency.
    std::size_t threads{0};
    /// Called with (iteration, iterate) after every step; for inspection.
    std::function<void(std::size_t, const Sample&)> on_iterate;

    [[nodiscard]] double step() const { return alpha.value_or(eps / 10.0); }
    void validate() const;
};

/// Sign-gradient ascent on the loss, projected onto the eps-ball.  Constraints
/// play no part in the search; they are only reported.  Returns the first
/// misclassified iterate, or the last one.
AttackResult pgd(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                 std::span<const double> x, int y, const GradAttackConfig& cfg);

/// Constrained PGD: ascent on loss minus weighted penalty of the smooth
/// constraints, with repair of repairable ones and integer snapping before
/// projection.  Returns the best iterate by (success, lower penalty, lower h).
AttackResult cpgd(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                  std::span<const double> x, int y, const GradAttackConfig& cfg);

enum class GradAttack { Pgd, Cpgd };

/// Attacks every sample (label 1) independently and in parallel; order-preserving.
std::vector<AttackResult> attack_batch(GradAttack kind, const Predictor& model, const FeatureSchema& schema,
                                       const ConstraintSet& omega, const std::vector<Sample>& samples,
                                       const GradAttackConfig& cfg);

} // namespace cadv

#endif
