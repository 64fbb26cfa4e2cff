#include "cadv/cpgd.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace cadv {

void GradAttackConfig::validate() const
{
    if (!(eps > 0.0)) {
        throw ConfigError("eps must be positive");
    }
    const double a = step();
    if (!(a >= 0.0 && a <= eps)) {
        throw ConfigError("step size must lie in [0, eps]");
    }
    if (n_iter == 0) {
        throw ConfigError("n_iter must be at least 1");
    }
    if (!std::isfinite(penalty_weight) || penalty_weight < 0.0) {
        throw ConfigError("penalty weight must be finite and non-negative");
    }
    threshold.validate();
    penalty.validate();
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<bool> movable_mask(const FeatureSchema& schema)
{
    std::vector<bool> mask(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        mask[i] = schema.movable(i);
    }
    return mask;
}

void check_inputs(const Predictor& model, const FeatureSchema& schema, std::span<const double> x)
{
    if (!model.has_input_gradient()) {
        throw ModelError("gradient attacks need a predictor with input gradients");
    }
    if (x.size() != schema.size() || model.input_dim() != schema.size()) {
        throw DataError("sample, schema and model dimensions disagree");
    }
}

Sample starting_point(std::span<const double> x0, const FeatureSchema& schema, const GradAttackConfig& cfg)
{
    Sample x(x0.begin(), x0.end());
    if (!cfg.random_init) {
        return x;
    }
    Rng rng(sample_seed(cfg.seed, x0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (schema.movable(i)) {
            x[i] = schema.snap(i, std::clamp(x[i] + rng.uniform(-cfg.eps, cfg.eps), 0.0, 1.0));
        }
    }
    return project_ball(x, x0, cfg.eps, cfg.p, schema);
}

void snap_all(Sample& x, const FeatureSchema& schema)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (schema.movable(i) && schema[i].discrete()) {
            x[i] = schema.snap(i, x[i]);
        }
    }
}

// Rounds discrete coordinates toward the original value; never lengthens
// any coordinate of the perturbation.
void snap_toward(Sample& x, std::span<const double> x0, const FeatureSchema& schema)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!schema.movable(i) || !schema[i].discrete()) {
            continue;
        }
        const double v = schema.to_original(i, x[i]);
        const double v0 = schema.to_original(i, x0[i]);
        if (v == std::round(v)) {
            continue;
        }
        x[i] = schema.encode_exact(i, v > v0 ? std::floor(v) : std::ceil(v));
    }
}

} // namespace

AttackResult pgd(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                 std::span<const double> x, int y, const GradAttackConfig& cfg)
{
    cfg.validate();
    check_inputs(model, schema, x);
    const ConstraintEvaluator ev(schema, omega, x, cfg.penalty);
    const auto mask = movable_mask(schema);
    const double alpha = cfg.step();

    AttackResult r;
    r.original.assign(x.begin(), x.end());
    Sample cur = starting_point(x, schema, cfg);
    std::optional<Sample> first_hit;
    for (std::size_t t = 1; t <= cfg.n_iter; ++t) {
        const auto g = model.input_gradient(cur, y, mask);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (mask[i]) {
                cur[i] += alpha * sign(g[i]);
            }
        }
        clip_box(cur);
        cur = project_ball(cur, x, cfg.eps, cfg.p, schema);
        if (cfg.on_iterate) {
            cfg.on_iterate(t, cur);
        }
        const bool within = distance(cur, x, cfg.p) <= cfg.eps;
        const bool mis = cfg.threshold(model.predict_proba(cur)) == 0;
        r.misclassified_found = r.misclassified_found || (mis && within);
        r.feasible_found = r.feasible_found || (within && ev.satisfied(cur));
        if (mis && !first_hit) {
            first_hit = cur;
            r.iterations_used = t;
        }
    }
    if (!first_hit) {
        r.iterations_used = cfg.n_iter;
    }
    assess(r, model, ev, first_hit ? *first_hit : cur, cfg.eps, cfg.p, cfg.threshold);
    return r;
}

AttackResult cpgd(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                  std::span<const double> x, int y, const GradAttackConfig& cfg)
{
    cfg.validate();
    check_inputs(model, schema, x);
    const ConstraintEvaluator ev(schema, omega, x, cfg.penalty);
    const auto mask = movable_mask(schema);
    const double alpha = cfg.step();

    AttackResult r;
    r.original.assign(x.begin(), x.end());
    Sample cur = starting_point(x, schema, cfg);

    // Higher is better: success, then lower penalty, then lower h.
    using Score = std::tuple<bool, double, double>;
    std::optional<Score> best_score;
    Sample best;
    for (std::size_t t = 1; t <= cfg.n_iter; ++t) {
        auto g = model.input_gradient(cur, y, mask);
        if (cfg.penalty_weight > 0.0) {
            const auto pg = ev.smooth_gradient(cur);
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= cfg.penalty_weight * pg[i];
            }
        }
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (mask[i]) {
                cur[i] += alpha * sign(g[i]);
            }
        }
        if (ev.has_repairs()) {
            cur = ev.repair_all(cur);
        }
        snap_all(cur, schema);
        clip_box(cur);
        cur = project_ball(cur, x, cfg.eps, cfg.p, schema);
        // Projection can undo repairs and leave integers off-grid; redo them
        // when the result still fits the budget.
        if (ev.has_repairs() || std::any_of(schema.features().begin(), schema.features().end(),
                                            [](const FeatureSpec& f) { return f.discrete(); })) {
            Sample fixed = ev.has_repairs() ? ev.repair_all(cur) : cur;
            snap_all(fixed, schema);
            clip_box(fixed);
            if (distance(fixed, x, cfg.p) <= cfg.eps) {
                cur = std::move(fixed);
            } else {
                snap_toward(cur, x, schema);
            }
        }
        if (cfg.on_iterate) {
            cfg.on_iterate(t, cur);
        }

        const double h = model.predict_proba(cur);
        const bool within = distance(cur, x, cfg.p) <= cfg.eps;
        const bool mis = cfg.threshold(h) == 0;
        const bool ok = ev.satisfied(cur);
        r.misclassified_found = r.misclassified_found || (mis && within);
        r.feasible_found = r.feasible_found || (ok && within);
        const Score score{mis && ok && within, -ev.total_penalty(cur), -h};
        if (!best_score || score > *best_score) {
            best_score = score;
            best = cur;
            r.iterations_used = t;
        }
    }
    assess(r, model, ev, best, cfg.eps, cfg.p, cfg.threshold);
    return r;
}

std::vector<AttackResult> attack_batch(GradAttack kind, const Predictor& model, const FeatureSchema& schema,
                                       const ConstraintSet& omega, const std::vector<Sample>& samples,
                                       const GradAttackConfig& cfg)
{
    cfg.validate();
    std::vector<AttackResult> out(samples.size());
    parallel_for(samples.size(), cfg.threads, [&](std::size_t i) {
        out[i] = kind == GradAttack::Pgd ? pgd(model, schema, omega, samples[i], 1, cfg)
                                         : cpgd(model, schema, omega, samples[i], 1, cfg);
    });
    return out;
}

} // namespace cadv
