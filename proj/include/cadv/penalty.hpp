#ifndef CADV_PENALTY_HPP
#define CADV_PENALTY_HPP

#include <optional>
#include <span>

#include "cadv/dsl.hpp"
#include "cadv/schema.hpp"

namespace cadv {

struct PenaltyConfig {
    /// Margin for strict inequalities and !=, in original units.
    double tau{1e-6};
    /// Penalty of a constraint whose expressions cannot be evaluated
    /// (x/0, 0^negative, overflow).
    double invalid_sentinel{1e6};

    void validate() const;
};

/// Candidate and original vectors, both in original units.
struct EvalContext {
    std::span<const double> x;
    std::span<const double> x0;
    const FeatureSchema* schema{nullptr};
};

/// Value of a numeric expression; nullopt at singular points.
std::optional<double> evaluate(const NumericExpr& e, const EvalContext& ctx);

/// Exact truth value.  Comparisons with an unevaluable side are false.
bool eval_bool(const ConstraintExpr& c, const EvalContext& ctx);

/// Non-negative distance to satisfaction.
///
///   a and b   ->  p(a) + p(b)
///   a or b    ->  min(p(a), p(b))
///   f in {..} ->  min_i |f - c_i|
///   a <= b    ->  max(0, a - b)          a < b  ->  max(0, a - b + tau)
///   a = b     ->  |a - b|                a != b ->  max(0, tau - |a - b|)
///   >=, > mirror <=, < with operands swapped.
double penalty(const ConstraintExpr& c, const EvalContext& ctx, const PenaltyConfig& cfg = {});

double total_penalty(const ConstraintSet& omega, const EvalContext& ctx, const PenaltyConfig& cfg = {});
bool all_satisfied(const ConstraintSet& omega, const EvalContext& ctx);

/// Subgradient of penalty() with respect to the scaled candidate vector.
/// Kinks take the zero (or left-branch) subgradient; immutable coordinates are
/// zero.  Throws Error unless classify(c) is Smooth.
Vector grad_penalty(const ConstraintExpr& c, const EvalContext& ctx, const PenaltyConfig& cfg = {});

/// Applies the repair rule of a Repairable constraint to a scaled sample.
///
///  - membership: the feature takes the closest candidate (first on ties);
///  - `f = expr`: f takes the value of expr;
///  - guarded assignment: f takes the constant of the first guard that holds
///    (the guard with the smallest penalty if none does).
/// Integer and binary targets are rounded; immutable targets are left alone.
/// Values are encoded so that the constraint holds exactly in original units
/// whenever the scaled grid allows it.  No box clipping is done here.
/// Throws Error for constraints without a repair rule.
Sample repair(std::span<const double> x, const ConstraintExpr& c, std::span<const double> x0_original,
              const FeatureSchema& schema);

/// Constraint set bound to one original example, operating on scaled vectors.
/// This is the view the attacks use.
class ConstraintEvaluator {
public:
    ConstraintEvaluator(const FeatureSchema& schema, const ConstraintSet& omega, std::span<const double> x0_scaled,
                        PenaltyConfig cfg = {});

    [[nodiscard]] double total_penalty(std::span<const double> x) const;
    [[nodiscard]] bool satisfied(std::span<const double> x) const;
    /// Sum of grad_penalty over the Smooth constraints.
    [[nodiscard]] Vector smooth_gradient(std::span<const double> x) const;
    /// Applies every repairable constraint in set order, then once more.
    [[nodiscard]] Sample repair_all(std::span<const double> x) const;
    [[nodiscard]] bool has_repairs() const { return !repairable_.empty(); }

    [[nodiscard]] const FeatureSchema& schema() const { return *schema_; }
    [[nodiscard]] const ConstraintSet& constraints() const { return omega_; }

private:
    const FeatureSchema* schema_;
    ConstraintSet omega_;
    Vector x0_original_;
    PenaltyConfig cfg_;
    std::vector<std::size_t> smooth_;
    std::vector<std::size_t> repairable_;
};

} // namespace cadv

#endif
