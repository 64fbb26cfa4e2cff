#ifndef CADV_ATTACK_HPP
#define CADV_ATTACK_HPP

#include <cstdint>
#include <span>

#include "cadv/model.hpp"
#include "cadv/penalty.hpp"
#include "cadv/schema.hpp"

namespace cadv {

/// Outcome of attacking one original example.
struct AttackResult {
    Sample original;
    Sample best;
    bool misclassified{false};
    bool constraints_ok{false};
    bool within_eps{false};
    /// misclassified && constraints_ok && within_eps.
    bool success{false};
    std::size_t iterations_used{0};
    /// Objectives of `best`: h(best), distance to original, total penalty.
    double g1{0.0};
    double g2{0.0};
    double g3{0.0};
    /// Some generated candidate within eps satisfied every constraint.
    bool feasible_found{false};
    /// Some generated candidate within eps was misclassified.
    bool misclassified_found{false};
};

/// Fills the per-candidate fields of a result for `candidate`.
void assess(AttackResult& r, const Predictor& model, const ConstraintEvaluator& omega, std::span<const double> candidate,
            double eps, NormOrder p, ClassifierThreshold t);

/// Seed for attacking `sample`: depends on its contents only, so duplicate
/// samples get identical attacks wherever they sit in a batch.
std::uint64_t sample_seed(std::uint64_t seed, std::span<const double> sample);

} // namespace cadv

#endif
