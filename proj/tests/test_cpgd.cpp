#include <cmath>
#include <tuple>
#include <vector>

#include "doctest.h"

#include "cadv/cpgd.hpp"
#include "cadv/synth.hpp"
#include "support.hpp"

using namespace cadv;

namespace {

struct Trace {
    std::vector<Sample> iterates;
};

GradAttackConfig traced(Trace& trace, std::size_t n_iter, double alpha)
{
    GradAttackConfig cfg;
    cfg.n_iter = n_iter;
    cfg.alpha = alpha;
    cfg.on_iterate = [&trace](std::size_t, const Sample& x) { trace.iterates.push_back(x); };
    return cfg;
}

struct SmallTask {
    SyntheticBenchmark bench = make_synthetic(600, 5);
    MLP model;
    std::vector<Sample> targets;

    SmallTask()
    {
        TrainConfig tc;
        tc.epochs = 8;
        tc.batch_size = 64;
        tc.seed = 1;
        const std::vector<std::size_t> hidden{16};
        model = train(bench.data, hidden, tc).model;
        for (std::size_t i = 0; i < bench.data.size() && targets.size() < 8; ++i) {
            if (bench.data.labels[i] == 1 && model.predict_proba(bench.data.samples[i]) >= 0.5) {
                targets.push_back(bench.data.samples[i]);
            }
        }
    }
};

const SmallTask& small_task()
{
    static const SmallTask task;
    return task;
}

} // namespace

TEST_CASE("one PGD step on a linear unit")
{
    const auto schema = testing::unit_schema(2);
    const auto m = testing::linear_unit({2.0, -1.0}, 0.5);
    Trace trace;
    const auto cfg = traced(trace, 1, 0.05);
    const Sample x0{0.5, 0.5};
    (void)pgd(m, schema, ConstraintSet{}, x0, 1, cfg);
    REQUIRE(trace.iterates.size() == 1);
    // the loss at y = 1 grows against sgn(w)
    CHECK(trace.iterates[0][0] == doctest::Approx(0.45));
    CHECK(trace.iterates[0][1] == doctest::Approx(0.55));

    // a large step is pulled back onto the ball
    Trace far;
    auto big = traced(far, 1, 0.1);
    big.eps = 0.1;
    (void)pgd(m, schema, ConstraintSet{}, x0, 1, big);
    const double r = 0.1 / std::sqrt(2.0);
    CHECK(far.iterates[0][0] == doctest::Approx(0.5 - r));
    CHECK(far.iterates[0][1] == doctest::Approx(0.5 + r));
}

TEST_CASE("zero step leaves the input alone")
{
    const auto schema = testing::unit_schema(2);
    const auto m = testing::linear_unit({2.0, -1.0}, 0.5);
    GradAttackConfig cfg;
    cfg.alpha = 0.0;
    cfg.n_iter = 5;
    const Sample x0{0.5, 0.5};
    for (const auto& r : {pgd(m, schema, ConstraintSet{}, x0, 1, cfg), cpgd(m, schema, ConstraintSet{}, x0, 1, cfg)}) {
        CHECK(r.best == x0);
        CHECK_FALSE(r.success);
    }
}

TEST_CASE("one C-PGD step combines loss and penalty directions")
{
    const auto schema = testing::unit_schema(2);
    const auto m = testing::linear_unit({0.5, 0.5}, 0.0);
    const auto omega = parse_constraint_set("f1 <= f2\n").bind(schema);
    const Sample x0{0.7, 0.6};

    // loss gradient (sigma - 1) w is about -0.17 per coordinate; the violated
    // bound adds -(+1, -1) and dominates
    Trace full;
    (void)cpgd(m, schema, omega, x0, 1, traced(full, 1, 0.05));
    CHECK(full.iterates[0][0] == doctest::Approx(0.65));
    CHECK(full.iterates[0][1] == doctest::Approx(0.65));

    // with weight 0.1 the loss term wins on the second coordinate
    Trace light;
    auto cfg = traced(light, 1, 0.05);
    cfg.penalty_weight = 0.1;
    (void)cpgd(m, schema, omega, x0, 1, cfg);
    CHECK(light.iterates[0][0] == doctest::Approx(0.65));
    CHECK(light.iterates[0][1] == doctest::Approx(0.55));
}

TEST_CASE("without constraints C-PGD follows PGD")
{
    const auto schema = testing::unit_schema(5);
    const std::vector<std::size_t> hidden{12, 6};
    const auto m = MLP::initialize(5, hidden, 4);
    Rng rng(3);
    for (int k = 0; k < 5; ++k) {
        Sample x0(5);
        for (auto& v : x0) {
            v = rng.uniform();
        }
        Trace a, b;
        auto ca = traced(a, 30, 0.02);
        auto cb = traced(b, 30, 0.02);
        ca.random_init = cb.random_init = (k % 2 == 1);
        (void)pgd(m, schema, ConstraintSet{}, x0, 1, ca);
        (void)cpgd(m, schema, ConstraintSet{}, x0, 1, cb);
        CHECK(a.iterates == b.iterates);
    }
}

TEST_CASE("membership holds on every iterate")
{
    const FeatureSchema schema({{"port", FeatureKind::Integer, 0, 16, true},
                                {"v", FeatureKind::Continuous, 0, 1, true},
                                {"w", FeatureKind::Continuous, 0, 1, true}});
    const auto omega = parse_constraint_set("port in {1, 2, 4, 8, 16}\n").bind(schema);
    const std::vector<std::size_t> hidden{8};
    const auto m = MLP::initialize(3, hidden, 12);
    const Sample x0{schema.to_scaled(0, 4.0), 0.5, 0.5};
    Trace trace;
    auto cfg = traced(trace, 50, 0.05);
    cfg.eps = 0.3;
    const auto r = cpgd(m, schema, omega, x0, 1, cfg);
    for (const auto& x : trace.iterates) {
        const double port = schema.to_original(0, x[0]);
        CHECK((port == 1 || port == 2 || port == 4 || port == 8 || port == 16));
    }
    CHECK(r.constraints_ok);
}

TEST_CASE("iterates stay in the ball, the box and the grid")
{
    const auto& task = small_task();
    const auto& schema = task.bench.schema;
    for (auto kind : {GradAttack::Pgd, GradAttack::Cpgd}) {
        for (auto p : {NormOrder::L2, NormOrder::Linf}) {
            for (const auto& x0 : task.targets) {
                Trace trace;
                auto cfg = traced(trace, 20, 0.03);
                cfg.eps = 0.15;
                cfg.p = p;
                cfg.random_init = true;
                cfg.seed = 2;
                const auto r = kind == GradAttack::Pgd ? pgd(task.model, schema, task.bench.constraints, x0, 1, cfg)
                                                       : cpgd(task.model, schema, task.bench.constraints, x0, 1, cfg);
                trace.iterates.push_back(r.best);
                for (const auto& x : trace.iterates) {
                    CHECK(distance(x, x0, p) <= cfg.eps + 1e-12);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        CHECK(x[i] >= 0.0);
                        CHECK(x[i] <= 1.0);
                        if (!schema.movable(i)) {
                            CHECK(x[i] == x0[i]);
                        }
                        if (kind == GradAttack::Cpgd && schema[i].discrete()) {
                            const double v = schema.to_original(i, x[i]);
                            CHECK(v == std::round(v));
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("C-PGD keeps the best iterate")
{
    const auto& task = small_task();
    const auto& schema = task.bench.schema;
    const auto& omega = task.bench.constraints;
    for (const auto& x0 : task.targets) {
        Trace trace;
        auto cfg = traced(trace, 40, 0.02);
        cfg.eps = 0.15;
        const auto r = cpgd(task.model, schema, omega, x0, 1, cfg);
        const ConstraintEvaluator ev(schema, omega.bind(schema), x0);
        using Score = std::tuple<bool, double, double>;
        auto score = [&](const Sample& x) {
            const double h = task.model.predict_proba(x);
            const bool ok = ev.satisfied(x) && distance(x, x0, cfg.p) <= cfg.eps && h < 0.5;
            return Score{ok, -ev.total_penalty(x), -h};
        };
        Score top = score(trace.iterates.front());
        for (const auto& x : trace.iterates) {
            top = std::max(top, score(x));
        }
        CHECK(score(r.best) == top);
        CHECK(r.success == std::get<0>(top));
    }
}

TEST_CASE("batches")
{
    const auto& task = small_task();
    const auto& schema = task.bench.schema;
    const auto& omega = task.bench.constraints;
    GradAttackConfig cfg;
    cfg.eps = 0.15;
    cfg.n_iter = 20;
    cfg.random_init = true;
    cfg.seed = 17;
    cfg.threads = 3;
    CHECK(attack_batch(GradAttack::Cpgd, task.model, schema, omega, {}, cfg).empty());

    std::vector<Sample> batch{task.targets[0], task.targets[1], task.targets[0]};
    const auto out = attack_batch(GradAttack::Cpgd, task.model, schema, omega, batch, cfg);
    REQUIRE(out.size() == 3);
    CHECK(out[0].best == out[2].best);
    CHECK(out[0].success == out[2].success);

    std::size_t batch_successes = 0, single_successes = 0;
    const auto all = attack_batch(GradAttack::Pgd, task.model, schema, omega, task.targets, cfg);
    for (std::size_t i = 0; i < task.targets.size(); ++i) {
        const auto one = pgd(task.model, schema, omega, task.targets[i], 1, cfg);
        CHECK(one.best == all[i].best);
        batch_successes += all[i].success ? 1 : 0;
        single_successes += one.success ? 1 : 0;
    }
    CHECK(batch_successes == single_successes);
}

TEST_CASE("gradient attacks need gradients")
{
    struct Opaque : Predictor {
        [[nodiscard]] std::size_t input_dim() const override { return 2; }
        [[nodiscard]] double predict_proba(std::span<const double>) const override { return 0.9; }
    };
    const auto schema = testing::unit_schema(2);
    CHECK_THROWS_AS(pgd(Opaque{}, schema, ConstraintSet{}, Sample{0.5, 0.5}, 1, GradAttackConfig{}), ModelError);
    GradAttackConfig bad;
    bad.eps = -1.0;
    CHECK_THROWS_AS(cpgd(testing::linear_unit({1, 1}, 0), schema, ConstraintSet{}, Sample{0.5, 0.5}, 1, bad),
                    ConfigError);
}
