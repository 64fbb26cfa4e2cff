#include "cadv/penalty.hpp"

#include <algorithm>
#include <cmath>

namespace cadv {

void PenaltyConfig::validate() const
{
    if (!(tau > 0.0)) {
        throw ConfigError("penalty tau must be positive");
    }
    if (!(invalid_sentinel > 0.0) || !std::isfinite(invalid_sentinel)) {
        throw ConfigError("invalid_sentinel must be positive and finite");
    }
}

namespace {

template <typename Ref>
std::size_t resolve(const Ref& ref, const EvalContext& ctx)
{
    if (ref.index != unbound) {
        return ref.index;
    }
    if (ctx.schema) {
        if (auto idx = ctx.schema->index_of(ref.name)) {
            return *idx;
        }
    }
    throw SchemaError("unresolved feature " + ref.name);
}

std::optional<double> checked(double v)
{
    if (!std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::optional<double> apply(BinaryOp op, double a, double b)
{
    switch (op) {
    case BinaryOp::Add: return checked(a + b);
    case BinaryOp::Sub: return checked(a - b);
    case BinaryOp::Mul: return checked(a * b);
    case BinaryOp::Div:
        if (b == 0.0) {
            return std::nullopt;
        }
        return checked(a / b);
    case BinaryOp::Pow: return checked(std::pow(a, b));
    }
    return std::nullopt;
}

/// Value plus gradient in original units.
struct Dual {
    double value;
    Vector grad;
};

std::optional<Dual> evaluate_dual(const NumericExpr& e, const EvalContext& ctx)
{
    const std::size_t n = ctx.x.size();
    if (const auto* c = std::get_if<NumericExpr::Const>(&e.node)) {
        return Dual{c->value, Vector(n, 0.0)};
    }
    if (const auto* f = std::get_if<NumericExpr::Feature>(&e.node)) {
        const auto i = resolve(*f, ctx);
        Dual d{ctx.x[i], Vector(n, 0.0)};
        d.grad[i] = 1.0;
        return d;
    }
    if (const auto* o = std::get_if<NumericExpr::Original>(&e.node)) {
        return Dual{ctx.x0[resolve(*o, ctx)], Vector(n, 0.0)};
    }
    const auto& b = std::get<NumericExpr::Binary>(e.node);
    auto lhs = evaluate_dual(*b.lhs, ctx);
    if (!lhs) return std::nullopt;
    auto rhs = evaluate_dual(*b.rhs, ctx);
    if (!rhs) return std::nullopt;
    auto value = apply(b.op, lhs->value, rhs->value);
    if (!value) return std::nullopt;

    const double u = lhs->value;
    const double v = rhs->value;
    Dual out{*value, Vector(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const double du = lhs->grad[i];
        const double dv = rhs->grad[i];
        double g = 0.0;
        switch (b.op) {
        case BinaryOp::Add: g = du + dv; break;
        case BinaryOp::Sub: g = du - dv; break;
        case BinaryOp::Mul: g = du * v + u * dv; break;
        case BinaryOp::Div: g = (du * v - u * dv) / (v * v); break;
        case BinaryOp::Pow:
            if (du != 0.0) {
                g += v * std::pow(u, v - 1.0) * du;
            }
            if (dv != 0.0 && u > 0.0) {
                g += *value * std::log(u) * dv;
            }
            break;
        }
        out.grad[i] = std::isfinite(g) ? g : 0.0;
    }
    return out;
}

struct Operands {
    std::optional<double> lhs;
    std::optional<double> rhs;
};

Relation mirrored(Relation r)
{
    switch (r) {
    case Relation::Greater: return Relation::Less;
    case Relation::GreaterEqual: return Relation::LessEqual;
    default: return r;
    }
}

bool swaps(Relation r) { return r == Relation::Greater || r == Relation::GreaterEqual; }

// Penalty of `a rel b` given operand values; rel already mirrored to <, <=, =, !=.
double compare_penalty(Relation rel, double a, double b, const PenaltyConfig& cfg)
{
    double p = 0.0;
    switch (rel) {
    case Relation::LessEqual: p = std::max(0.0, a - b); break;
    case Relation::Less: p = std::max(0.0, a - b + cfg.tau); break;
    case Relation::Equal: p = std::abs(a - b); break;
    case Relation::NotEqual: p = std::max(0.0, cfg.tau - std::abs(a - b)); break;
    default: break;
    }
    return std::isfinite(p) ? p : cfg.invalid_sentinel;
}

struct PenaltyDual {
    double value;
    Vector grad;
};

PenaltyDual penalty_dual(const ConstraintExpr& c, const EvalContext& ctx, const PenaltyConfig& cfg)
{
    const std::size_t n = ctx.x.size();
    auto invalid = [&] { return PenaltyDual{cfg.invalid_sentinel, Vector(n, 0.0)}; };

    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        auto l = penalty_dual(*a->lhs, ctx, cfg);
        auto r = penalty_dual(*a->rhs, ctx, cfg);
        for (std::size_t i = 0; i < n; ++i) {
            l.grad[i] += r.grad[i];
        }
        l.value += r.value;
        return l;
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        auto l = penalty_dual(*o->lhs, ctx, cfg);
        auto r = penalty_dual(*o->rhs, ctx, cfg);
        return r.value < l.value ? r : l;
    }
    if (const auto* m = std::get_if<ConstraintExpr::Membership>(&c.node)) {
        auto f = evaluate_dual(*m->feature, ctx);
        std::optional<PenaltyDual> best;
        for (const auto& cand : m->candidates) {
            auto v = evaluate_dual(*cand, ctx);
            if (!v) continue;
            const double diff = f->value - v->value;
            const double p = std::abs(diff);
            if (!std::isfinite(p)) continue;
            if (!best || p < best->value) {
                const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                Vector g(n);
                for (std::size_t i = 0; i < n; ++i) {
                    g[i] = s * (f->grad[i] - v->grad[i]);
                }
                best = PenaltyDual{p, std::move(g)};
            }
        }
        return best ? *best : invalid();
    }

    const auto& cmp = std::get<ConstraintExpr::Compare>(c.node);
    auto lhs = evaluate_dual(*cmp.lhs, ctx);
    auto rhs = evaluate_dual(*cmp.rhs, ctx);
    if (!lhs || !rhs) {
        return invalid();
    }
    if (swaps(cmp.rel)) {
        std::swap(lhs, rhs);
    }
    const Relation rel = mirrored(cmp.rel);
    const double a = lhs->value;
    const double b = rhs->value;
    const double p = compare_penalty(rel, a, b, cfg);
    if (p == cfg.invalid_sentinel && !std::isfinite(a - b)) {
        return invalid();
    }

    // d(a - b) scaled by the active branch of the outer max/abs.
    double factor = 0.0;
    switch (rel) {
    case Relation::LessEqual: factor = (a - b) > 0.0 ? 1.0 : 0.0; break;
    case Relation::Less: factor = (a - b + cfg.tau) > 0.0 ? 1.0 : 0.0; break;
    case Relation::Equal: factor = (a > b) ? 1.0 : (a < b ? -1.0 : 0.0); break;
    case Relation::NotEqual:
        factor = (cfg.tau - std::abs(a - b)) > 0.0 ? ((a > b) ? -1.0 : (a < b ? 1.0 : 0.0)) : 0.0;
        break;
    default: break;
    }
    PenaltyDual out{p, Vector(n, 0.0)};
    if (factor != 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            out.grad[i] = factor * (lhs->grad[i] - rhs->grad[i]);
        }
    }
    return out;
}

} // namespace

std::optional<double> evaluate(const NumericExpr& e, const EvalContext& ctx)
{
    if (const auto* c = std::get_if<NumericExpr::Const>(&e.node)) {
        return c->value;
    }
    if (const auto* f = std::get_if<NumericExpr::Feature>(&e.node)) {
        return ctx.x[resolve(*f, ctx)];
    }
    if (const auto* o = std::get_if<NumericExpr::Original>(&e.node)) {
        return ctx.x0[resolve(*o, ctx)];
    }
    const auto& b = std::get<NumericExpr::Binary>(e.node);
    auto lhs = evaluate(*b.lhs, ctx);
    if (!lhs) return std::nullopt;
    auto rhs = evaluate(*b.rhs, ctx);
    if (!rhs) return std::nullopt;
    return apply(b.op, *lhs, *rhs);
}

bool eval_bool(const ConstraintExpr& c, const EvalContext& ctx)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return eval_bool(*a->lhs, ctx) && eval_bool(*a->rhs, ctx);
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        return eval_bool(*o->lhs, ctx) || eval_bool(*o->rhs, ctx);
    }
    if (const auto* m = std::get_if<ConstraintExpr::Membership>(&c.node)) {
        const double f = *evaluate(*m->feature, ctx);
        return std::any_of(m->candidates.begin(), m->candidates.end(), [&](const NumericPtr& cand) {
            auto v = evaluate(*cand, ctx);
            return v && *v == f;
        });
    }
    const auto& cmp = std::get<ConstraintExpr::Compare>(c.node);
    auto lhs = evaluate(*cmp.lhs, ctx);
    auto rhs = evaluate(*cmp.rhs, ctx);
    if (!lhs || !rhs) {
        return false;
    }
    switch (cmp.rel) {
    case Relation::Less: return *lhs < *rhs;
    case Relation::LessEqual: return *lhs <= *rhs;
    case Relation::Equal: return *lhs == *rhs;
    case Relation::NotEqual: return *lhs != *rhs;
    case Relation::GreaterEqual: return *lhs >= *rhs;
    case Relation::Greater: return *lhs > *rhs;
    }
    return false;
}

double penalty(const ConstraintExpr& c, const EvalContext& ctx, const PenaltyConfig& cfg)
{
    if (const auto* a = std::get_if<ConstraintExpr::And>(&c.node)) {
        return penalty(*a->lhs, ctx, cfg) + penalty(*a->rhs, ctx, cfg);
    }
    if (const auto* o = std::get_if<ConstraintExpr::Or>(&c.node)) {
        return std::min(penalty(*o->lhs, ctx, cfg), penalty(*o->rhs, ctx, cfg));
    }
    if (const auto* m = std::get_if<ConstraintExpr::Membership>(&c.node)) {
        const double f = *evaluate(*m->feature, ctx);
        std::optional<double> best;
        for (const auto& cand : m->candidates) {
            auto v = evaluate(*cand, ctx);
            if (!v) continue;
            const double p = std::abs(f - *v);
            if (std::isfinite(p) && (!best || p < *best)) {
                best = p;
            }
        }
        return best ? *best : cfg.invalid_sentinel;
    }
    const auto& cmp = std::get<ConstraintExpr::Compare>(c.node);
    auto lhs = evaluate(*cmp.lhs, ctx);
    auto rhs = evaluate(*cmp.rhs, ctx);
    if (!lhs || !rhs) {
        return cfg.invalid_sentinel;
    }
    if (swaps(cmp.rel)) {
        std::swap(lhs, rhs);
    }
    return compare_penalty(mirrored(cmp.rel), *lhs, *rhs, cfg);
}

double total_penalty(const ConstraintSet& omega, const EvalContext& ctx, const PenaltyConfig& cfg)
{
    double sum = 0.0;
    for (const auto& item : omega) {
        sum += penalty(*item.expr, ctx, cfg);
    }
    return sum;
}

bool all_satisfied(const ConstraintSet& omega, const EvalContext& ctx)
{
    return std::all_of(omega.begin(), omega.end(),
                       [&](const NamedConstraint& item) { return eval_bool(*item.expr, ctx); });
}

Vector grad_penalty(const ConstraintExpr& c, const EvalContext& ctx, const PenaltyConfig& cfg)
{
    if (classify(c) != ConstraintClass::Smooth) {
        throw Error("grad_penalty: constraint '" + to_string(c) + "' is " + std::string(to_string(classify(c)))
                    + ", not smooth");
    }
    if (!ctx.schema) {
        throw Error("grad_penalty: context needs a schema");
    }
    auto pd = penalty_dual(c, ctx, cfg);
    const auto& schema = *ctx.schema;
    for (std::size_t i = 0; i < pd.grad.size(); ++i) {
        pd.grad[i] = schema.movable(i) ? pd.grad[i] * (schema[i].max - schema[i].min) : 0.0;
    }
    return pd.grad;
}

namespace {

// Writes an original-unit value into a scaled sample, rounding discrete targets.
void assign(Sample& x, std::size_t i, double value, const FeatureSchema& schema)
{
    if (!schema.movable(i)) {
        return;
    }
    if (schema[i].discrete()) {
        value = std::round(value);
    }
    x[i] = schema.encode_exact(i, value);
}

} // namespace

Sample repair(std::span<const double> x, const ConstraintExpr& c, std::span<const double> x0_original,
              const FeatureSchema& schema)
{
    Sample out(x.begin(), x.end());
    const Vector orig = schema.to_original(x);
    const EvalContext ctx{orig, x0_original, &schema};

    if (const auto* m = std::get_if<ConstraintExpr::Membership>(&c.node)) {
        const auto& f = std::get<NumericExpr::Feature>(m->feature->node);
        const std::size_t i = resolve(f, ctx);
        std::optional<double> best;
        double best_gap = 0.0;
        for (const auto& cand : m->candidates) {
            auto v = evaluate(*cand, ctx);
            if (!v) continue;
            const double gap = std::abs(orig[i] - *v);
            if (!best || gap < best_gap) {
                best = v;
                best_gap = gap;
            }
        }
        if (best) {
            assign(out, i, *best, schema);
        }
        return out;
    }
    if (auto a = match_assignment(c)) {
        const auto& f = std::get<NumericExpr::Feature>(a->first->node);
        if (auto v = evaluate(*a->second, ctx)) {
            assign(out, resolve(f, ctx), *v, schema);
        }
        return out;
    }
    if (auto g = match_guarded_assignment(c)) {
        const auto& f = std::get<NumericExpr::Feature>(g->target->node);
        const std::size_t i = resolve(f, ctx);
        const std::pair<double, ConstraintPtr>* chosen = nullptr;
        for (const auto& branch : g->branches) {
            if (eval_bool(*branch.second, ctx)) {
                chosen = &branch;
                break;
            }
        }
        if (!chosen) {
            double best = 0.0;
            for (const auto& branch : g->branches) {
                const double p = penalty(*branch.second, ctx);
                if (!chosen || p < best) {
                    chosen = &branch;
                    best = p;
                }
            }
        }
        assign(out, i, chosen->first, schema);
        return out;
    }
    throw Error("repair: no repair rule for '" + to_string(c) + "'");
}

ConstraintEvaluator::ConstraintEvaluator(const FeatureSchema& schema, const ConstraintSet& omega,
                                         std::span<const double> x0_scaled, PenaltyConfig cfg)
    : schema_(&schema), omega_(omega.bind(schema)), x0_original_(schema.to_original(x0_scaled)), cfg_(cfg)
{
    cfg_.validate();
    for (std::size_t k = 0; k < omega_.size(); ++k) {
        switch (omega_[k].cls) {
        case ConstraintClass::Smooth: smooth_.push_back(k); break;
        case ConstraintClass::Repairable: repairable_.push_back(k); break;
        case ConstraintClass::Opaque: break;
        }
    }
}

double ConstraintEvaluator::total_penalty(std::span<const double> x) const
{
    const Vector orig = schema_->to_original(x);
    return cadv::total_penalty(omega_, {orig, x0_original_, schema_}, cfg_);
}

bool ConstraintEvaluator::satisfied(std::span<const double> x) const
{
    const Vector orig = schema_->to_original(x);
    return all_satisfied(omega_, {orig, x0_original_, schema_});
}

Vector ConstraintEvaluator::smooth_gradient(std::span<const double> x) const
{
    const Vector orig = schema_->to_original(x);
    const EvalContext ctx{orig, x0_original_, schema_};
    Vector sum(x.size(), 0.0);
    for (auto k : smooth_) {
        auto g = grad_penalty(*omega_[k].expr, ctx, cfg_);
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += g[i];
        }
    }
    return sum;
}

Sample ConstraintEvaluator::repair_all(std::span<const double> x) const
{
    Sample out(x.begin(), x.end());
    for (int pass = 0; pass < 2; ++pass) {
        for (auto k : repairable_) {
            out = repair(out, *omega_[k].expr, x0_original_, *schema_);
        }
    }
    return out;
}

} // namespace cadv
