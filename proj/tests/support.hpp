#ifndef CADV_TESTS_SUPPORT_HPP
#define CADV_TESTS_SUPPORT_HPP

// Test-only oracles and generators.  Nothing here calls into the library
// code it is used to check: the evaluator, the Pareto sort and the mutation
// CDF are written from their definitions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cadv/common.hpp"
#include "cadv/dsl.hpp"
#include "cadv/model.hpp"
#include "cadv/moeva.hpp"
#include "cadv/schema.hpp"

namespace cadv::testing {

inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("cadv_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline FeatureSchema unit_schema(std::size_t n, bool all_mutable = true)
{
    std::vector<FeatureSpec> f;
    for (std::size_t i = 0; i < n; ++i) {
        f.push_back({"f" + std::to_string(i + 1), FeatureKind::Continuous, 0.0, 1.0, all_mutable});
    }
    return FeatureSchema(std::move(f));
}

// ---- plain evaluator -------------------------------------------------------

struct Point {
    const std::vector<double>* x;
    const std::vector<double>* x0;
    const FeatureSchema* schema;

    [[nodiscard]] double at(const std::string& name, bool original) const
    {
        const auto i = *schema->index_of(name);
        return original ? (*x0)[i] : (*x)[i];
    }
};

inline std::optional<double> value_of(const NumericExpr& e, const Point& pt)
{
    if (const auto* c = std::get_if<NumericExpr::Const>(&e.node)) {
        return c->value;
    }
    if (const auto* f = std::get_if<NumericExpr::Feature>(&e.node)) {
        return pt.at(f->name, false);
    }
    if (const auto* o = std::get_if<NumericExpr::Original>(&e.node)) {
        return pt.at(o->name, true);
    }
    const auto& b = std::get<NumericExpr::Binary>(e.node);
    const auto l = value_of(*b.lhs, pt);
    const auto r = value_of(*b.rhs, pt);
    if (!l || !r) {
        return std::nullopt;
    }
    double v = 0.0;
    switch (b.op) {
    case BinaryOp::Add: v = *l + *r; break;
    case BinaryOp::Sub: v = *l - *r; break;
    case BinaryOp::Mul: v = *l * *r; break;
    case BinaryOp::Div:
        if (*r == 0.0) {
            return std::nullopt;
        }
        v = *l / *r;
        break;
    case BinaryOp::Pow: v = std::pow(*l, *r); break;
    }
    if (!std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline bool truth_of(const ConstraintExpr& c, const Point& pt)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return truth_of(*a->lhs, pt) && truth_of(*a->rhs, pt);
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        return truth_of(*o->lhs, pt) || truth_of(*o->rhs, pt);
    }
    if (const auto* m = std::get_if<ConstraintExpr::Membership>(&c.node)) {
        const auto f = value_of(*m->feature, pt);
        for (const auto& cand : m->candidates) {
            const auto v = value_of(*cand, pt);
            if (f && v && *f == *v) {
                return true;
            }
        }
        return false;
    }
    const auto& cmp = std::get<ConstraintExpr::Compare>(c.node);
    const auto l = value_of(*cmp.lhs, pt);
    const auto r = value_of(*cmp.rhs, pt);
    if (!l || !r) {
        return false;
    }
    switch (cmp.rel) {
    case Relation::Less: return *l < *r;
    case Relation::LessEqual: return *l <= *r;
    case Relation::Equal: return *l == *r;
    case Relation::NotEqual: return *l != *r;
    case Relation::GreaterEqual: return *l >= *r;
    case Relation::Greater: return *l > *r;
    }
    return false;
}

// True when some strict comparison or != sits within tau of its boundary
// without being on it; penalty and truth legitimately disagree there.
inline bool near_strict_boundary(const ConstraintExpr& c, const Point& pt, double tau)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return near_strict_boundary(*a->lhs, pt, tau) || near_strict_boundary(*a->rhs, pt, tau);
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        return near_strict_boundary(*o->lhs, pt, tau) || near_strict_boundary(*o->rhs, pt, tau);
    }
    const auto* cmp = std::get_if<ConstraintExpr::Compare>(&c.node);
    if (cmp == nullptr) {
        return false;
    }
    if (cmp->rel != Relation::Less && cmp->rel != Relation::Greater && cmp->rel != Relation::NotEqual) {
        return false;
    }
    const auto l = value_of(*cmp->lhs, pt);
    const auto r = value_of(*cmp->rhs, pt);
    if (!l || !r) {
        return false;
    }
    const double gap = std::abs(*l - *r);
    return gap > 0.0 && gap <= tau;
}

// Penalty written out from the compilation table, used to locate kinks.
inline double plain_penalty(const ConstraintExpr& c, const Point& pt, double tau)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return plain_penalty(*a->lhs, pt, tau) + plain_penalty(*a->rhs, pt, tau);
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        return std::min(plain_penalty(*o->lhs, pt, tau), plain_penalty(*o->rhs, pt, tau));
    }
    const auto& cmp = std::get<ConstraintExpr::Compare>(c.node);
    const double l = *value_of(*cmp.lhs, pt);
    const double r = *value_of(*cmp.rhs, pt);
    switch (cmp.rel) {
    case Relation::Less: return std::max(0.0, l - r + tau);
    case Relation::LessEqual: return std::max(0.0, l - r);
    case Relation::Equal: return std::abs(l - r);
    case Relation::NotEqual: return std::max(0.0, tau - std::abs(l - r));
    case Relation::GreaterEqual: return std::max(0.0, r - l);
    case Relation::Greater: return std::max(0.0, r - l + tau);
    }
    return 0.0;
}

// Smallest distance to a point where the penalty is not differentiable:
// the zero of a max(0, .) or |.| argument, or a tie between or-branches.
inline double kink_margin(const ConstraintExpr& c, const Point& pt, double tau)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return std::min(kink_margin(*a->lhs, pt, tau), kink_margin(*a->rhs, pt, tau));
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        const double tie = std::abs(plain_penalty(*o->lhs, pt, tau) - plain_penalty(*o->rhs, pt, tau));
        return std::min({tie, kink_margin(*o->lhs, pt, tau), kink_margin(*o->rhs, pt, tau)});
    }
    const auto& cmp = std::get<ConstraintExpr::Compare>(c.node);
    const double d = *value_of(*cmp.lhs, pt) - *value_of(*cmp.rhs, pt);
    switch (cmp.rel) {
    case Relation::Less: return std::abs(d + tau);
    case Relation::Greater: return std::abs(d - tau);
    default: return std::abs(d);
    }
}

// ---- random trees ----------------------------------------------------------

struct TreeGen {
    Rng& rng;
    std::vector<std::string> names;
    /// Smooth trees avoid membership and !=; their divisions and powers are
    /// shaped so the value stays finite and differentiable.
    bool smooth{false};
    /// Integer-valued constants only (for exact-equality fuzzing).
    bool integer_constants{false};
    bool allow_orig{true};

    double constant()
    {
        if (integer_constants) {
            return static_cast<double>(static_cast<int>(rng.below(7)) - 3);
        }
        static constexpr std::array<double, 8> pool{0.5, 1.0, 2.0, 3.0, -1.5, 0.25, 4.0, -2.0};
        return pool[rng.below(pool.size())];
    }

    NumericPtr leaf()
    {
        const auto pick = rng.below(allow_orig ? 5 : 4);
        const auto& name = names[rng.below(names.size())];
        if (pick < 2) {
            return expr::feature(name);
        }
        if (pick < 4) {
            return expr::constant(constant());
        }
        return expr::original(name);
    }

    NumericPtr numeric(int depth)
    {
        if (depth <= 0 || rng.below(3) == 0) {
            return leaf();
        }
        const auto op = static_cast<BinaryOp>(rng.below(5));
        auto lhs = numeric(depth - 1);
        if (op == BinaryOp::Div) {
            if (smooth) {
                // lhs / (g^2 + 1)
                auto g = numeric(depth - 1);
                auto den = expr::binary(BinaryOp::Add, expr::binary(BinaryOp::Pow, g, expr::constant(2.0)),
                                        expr::constant(1.0));
                return expr::binary(BinaryOp::Div, lhs, den);
            }
            return expr::binary(op, lhs, numeric(depth - 1));
        }
        if (op == BinaryOp::Pow) {
            const double k = static_cast<double>(2 + rng.below(2));
            return expr::binary(op, lhs, expr::constant(k));
        }
        return expr::binary(op, lhs, numeric(depth - 1));
    }

    ConstraintPtr constraint(int depth)
    {
        const auto pick = rng.below(depth > 0 ? 10 : 6);
        if (pick >= 8) {
            return expr::conj(constraint(depth - 1), constraint(depth - 1));
        }
        if (pick >= 6) {
            return expr::disj(constraint(depth - 1), constraint(depth - 1));
        }
        if (pick == 5 && !smooth) {
            std::vector<NumericPtr> cands;
            const auto k = 1 + rng.below(3);
            for (std::size_t i = 0; i < k; ++i) {
                cands.push_back(rng.below(2) == 0 ? expr::constant(constant()) : numeric(1));
            }
            return expr::member(expr::feature(names[rng.below(names.size())]), std::move(cands));
        }
        auto rel = static_cast<Relation>(rng.below(6));
        if (smooth && rel == Relation::NotEqual) {
            rel = Relation::LessEqual;
        }
        return expr::compare(rel, numeric(2), numeric(2));
    }
};

// ---- Pareto sort by definition ---------------------------------------------

inline bool dominates_by_definition(const Objectives& a, const Objectives& b)
{
    bool strictly = false;
    for (std::size_t k = 0; k < 3; ++k) {
        if (a[k] > b[k]) {
            return false;
        }
        strictly = strictly || a[k] < b[k];
    }
    return strictly;
}

// Repeatedly peels the set of points not dominated by any remaining point.
inline std::vector<std::vector<std::size_t>> brute_force_fronts(const std::vector<Objectives>& objs)
{
    std::vector<bool> taken(objs.size(), false);
    std::vector<std::vector<std::size_t>> fronts;
    std::size_t left = objs.size();
    while (left > 0) {
        std::vector<std::size_t> front;
        for (std::size_t i = 0; i < objs.size(); ++i) {
            if (taken[i]) {
                continue;
            }
            bool dominated = false;
            for (std::size_t j = 0; j < objs.size() && !dominated; ++j) {
                dominated = !taken[j] && j != i && dominates_by_definition(objs[j], objs[i]);
            }
            if (!dominated) {
                front.push_back(i);
            }
        }
        for (auto i : front) {
            taken[i] = true;
        }
        left -= front.size();
        fronts.push_back(std::move(front));
    }
    return fronts;
}

inline std::vector<Objectives> random_objectives(Rng& rng, std::size_t n, int levels)
{
    std::vector<Objectives> out(n);
    for (auto& o : out) {
        for (auto& v : o) {
            v = static_cast<double>(rng.below(static_cast<std::size_t>(levels)));
        }
    }
    return out;
}

// ---- polynomial mutation, analytic CDF ---------------------------------------

// CDF of the mutated value of gene y in [0,1] with distribution index eta,
// obtained by inverting the perturbation formula for the uniform draw.
inline double polynomial_mutation_cdf(double z, double y, double eta)
{
    if (z <= 0.0) {
        return 0.0;
    }
    if (z >= 1.0) {
        return 1.0;
    }
    const double e = eta + 1.0;
    const double dq = z - y;
    if (dq <= 0.0) {
        const double a = std::pow(1.0 - y, e);
        return (std::pow(1.0 + dq, e) - a) / (2.0 * (1.0 - a));
    }
    const double b = std::pow(y, e);
    const double v = std::pow(1.0 - dq, e);
    return (2.0 - b - v) / (2.0 * (1.0 - b));
}

// Two-sided Kolmogorov-Smirnov statistic of a sample against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf)
{
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

// ---- small networks --------------------------------------------------------

inline MLP linear_unit(std::vector<double> w, double b)
{
    DenseLayer l;
    l.inputs = w.size();
    l.outputs = 1;
    l.weights = std::move(w);
    l.bias = {b};
    l.activation = Activation::Sigmoid;
    return MLP({l});
}

// Forward pass written from the layer definition, with the BCE gradient
// obtained by central differences; used as an oracle for input_gradient.
inline double plain_loss(const MLP& m, const std::vector<double>& x, int y)
{
    std::vector<double> a = x;
    double z = 0.0;
    for (const auto& l : m.layers()) {
        std::vector<double> out(l.outputs);
        for (std::size_t o = 0; o < l.outputs; ++o) {
            double s = l.bias[o];
            for (std::size_t i = 0; i < l.inputs; ++i) {
                s += l.weights[o * l.inputs + i] * a[i];
            }
            z = s;
            out[o] = l.activation == Activation::Relu ? std::max(0.0, s) : s;
        }
        a = std::move(out);
    }
    // log(1 + e^-z) for y = 1, log(1 + e^z) for y = 0
    const double t = y == 1 ? -z : z;
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double min_hidden_preactivation(const MLP& m, const std::vector<double>& x)
{
    std::vector<double> a = x;
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& l : m.layers()) {
        std::vector<double> out(l.outputs);
        for (std::size_t o = 0; o < l.outputs; ++o) {
            double s = l.bias[o];
            for (std::size_t i = 0; i < l.inputs; ++i) {
                s += l.weights[o * l.inputs + i] * a[i];
            }
            if (l.activation == Activation::Relu) {
                margin = std::min(margin, std::abs(s));
            }
            out[o] = l.activation == Activation::Relu ? std::max(0.0, s) : s;
        }
        a = std::move(out);
    }
    return margin;
}

// Max-norm relative error between two vectors.
inline double relative_error(const std::vector<double>& got, const std::vector<double>& want)
{
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        diff = std::max(diff, std::abs(got[i] - want[i]));
        scale = std::max(scale, std::abs(want[i]));
    }
    return diff / std::max(scale, 1e-8);
}

} // namespace cadv::testing

#endif
