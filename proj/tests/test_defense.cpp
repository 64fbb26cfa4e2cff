#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "cadv/defense.hpp"
#include "cadv/penalty.hpp"
#include "cadv/synth.hpp"
#include "support.hpp"

using namespace cadv;

namespace {

std::size_t choose2(std::size_t k)
{
    return k * (k - 1) / 2;
}

Dataset labeled_by(const Predictor& m, std::size_t n, std::size_t dim, std::uint64_t seed)
{
    Rng rng(seed);
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        Sample x(dim);
        for (auto& v : x) {
            v = rng.uniform();
        }
        const int y = rng.uniform() < m.predict_proba(x) ? 1 : 0;
        d.push_back(std::move(x), y);
    }
    return d;
}

} // namespace

TEST_CASE("pair budget")
{
    CHECK(pair_budget(47) == 5);
    CHECK(choose2(pair_budget(47)) == 10);
    CHECK(pair_budget(756) == 19);
    CHECK(choose2(pair_budget(756)) == 171);
    CHECK(pair_budget(8) == 2);
    CHECK(pair_budget(12) == 2);
    for (std::size_t n = 5; n <= 2000; ++n) {
        const auto k = pair_budget(n);
        const double quarter = static_cast<double>(n) / 4.0;
        REQUIRE(static_cast<double>(choose2(k)) < quarter);
        REQUIRE(quarter <= static_cast<double>(choose2(k + 1)));
    }
}

TEST_CASE("engineered bit")
{
    const EngineeredFeature f{"xor_a_b", "a", "b", 0.5, 0.5};
    CHECK(f.value(0.7, 0.3) == 1);
    CHECK(f.value(0.5, 0.5) == 0);
    CHECK(f.value(0.2, 0.3) == 0);
    CHECK(f.value(0.2, 0.9) == 1);
}

TEST_CASE("the tying constraint encodes the XOR")
{
    const FeatureSchema s({{"a", FeatureKind::Continuous, 0, 8, true},
                           {"b", FeatureKind::Continuous, -4, 4, true},
                           {"e", FeatureKind::Binary, 0, 1, true}});
    const EngineeredFeature f{"e", "a", "b", 2.7182818284590451, -0.3};
    const auto c = cadv::bind(parse_constraint(f.constraint_text()), s);
    CHECK(classify(*c) == ConstraintClass::Repairable);

    Rng rng(6);
    const Vector x0(3, 0.0);
    for (int i = 0; i < 2000; ++i) {
        Vector x{rng.uniform(0, 8), rng.uniform(-4, 4), static_cast<double>(rng.below(2))};
        if (i % 10 == 0) {
            x[0] = f.mean_a;
        }
        if (i % 15 == 0) {
            x[1] = f.mean_b;
        }
        const EvalContext ctx{x, x0, &s};
        const bool matches = x[2] == f.value(x[0], x[1]);
        REQUIRE(eval_bool(*c, ctx) == matches);
        REQUIRE((penalty(*c, ctx) == 0.0) == matches);
        REQUIRE((penalty(*c, ctx) > 0.0) == !matches);

        const auto fixed = repair(s.to_scaled(x), *c, x0, s);
        const auto back = s.to_original(fixed);
        REQUIRE(back[2] == f.value(back[0], back[1]));
        REQUIRE(fixed[0] == s.to_scaled(x)[0]);
        REQUIRE(fixed[1] == s.to_scaled(x)[1]);
    }
}

TEST_CASE("augmenting the synthetic task")
{
    const auto bench = make_synthetic(300, 3);
    const auto& s = bench.schema;
    Vector importance(s.size(), 0.0);
    importance[*s.index_of("rate")] = 0.3;
    importance[*s.index_of("score")] = 0.2;
    importance[*s.index_of("region")] = 0.9; // immutable, never picked
    const auto plan = build_plan(s, importance, bench.data);
    REQUIRE(plan.features.size() == 1);
    const auto& f = plan.features[0];
    CHECK(f.name == "xor_rate_score");
    double mean = 0.0;
    for (const auto& x : bench.data.samples) {
        mean += s.to_original(*s.index_of("rate"), x[*s.index_of("rate")]);
    }
    CHECK(f.mean_a == doctest::Approx(mean / 300.0).epsilon(1e-12));

    const auto s2 = augment_schema(s, plan);
    REQUIRE(s2.size() == s.size() + 1);
    CHECK(s2[s.size()].kind == FeatureKind::Binary);
    CHECK(s2.movable(s.size()));
    const auto d2 = augment_dataset(s, bench.data, plan);
    const auto omega2 = augment_constraints(bench.constraints, plan).bind(s2);
    CHECK(omega2.size() == bench.constraints.size() + 1);
    CHECK(omega2[omega2.size() - 1].cls == ConstraintClass::Repairable);
    for (const auto& x : d2.samples) {
        const Vector orig = s2.to_original(x);
        REQUIRE(all_satisfied(omega2, {orig, orig, &s2}));
    }
    CHECK_THROWS_AS(augment_schema(s2, plan), SchemaError);

    const auto back = plan_from_json(plan_to_json(plan));
    REQUIRE(back.features.size() == 1);
    CHECK(back.features[0].mean_a == f.mean_a);
    CHECK(back.features[0].mean_b == f.mean_b);
    CHECK(back.features[0].constraint_text() == f.constraint_text());
    CHECK(back.importance == plan.importance);
}

TEST_CASE("plan needs two mutable features")
{
    const FeatureSchema s({{"a", FeatureKind::Continuous, 0, 1, true}, {"b", FeatureKind::Continuous, 0, 1, false}});
    Dataset d;
    d.push_back({0.1, 0.2}, 0);
    CHECK_THROWS_AS(build_plan(s, Vector{1.0, 1.0}, d), ConfigError);
}

TEST_CASE("eight features give one pair of the two most important")
{
    const auto s = testing::unit_schema(8);
    Dataset d;
    d.push_back(Sample(8, 0.25), 0);
    d.push_back(Sample(8, 0.75), 1);
    const auto plan = build_plan(s, Vector{0.1, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5, 0.2}, d);
    REQUIRE(plan.features.size() == 1);
    CHECK(plan.features[0].source_a == "f3");
    CHECK(plan.features[0].source_b == "f7");
    CHECK(plan.features[0].mean_a == 0.5);
}

TEST_CASE("permutation importance")
{
    const FeatureSchema s({{"f1", FeatureKind::Continuous, 0, 1, true},
                           {"f2", FeatureKind::Continuous, 0, 1, true},
                           {"f3", FeatureKind::Continuous, 0, 1, true},
                           {"f4", FeatureKind::Continuous, 0, 1, false}});
    const auto m = testing::linear_unit({3.0, 0.0, -2.0, 4.0}, -1.5);
    const auto data = labeled_by(m, 1500, 4, 1);
    const auto imp = feature_importance(m, s, data, 3);
    CHECK(imp[1] == 0.0);
    CHECK(imp[3] == 0.0);
    CHECK(imp[0] > 0.01);
    CHECK(imp[2] > 0.01);
    CHECK(feature_importance(m, s, data, 3) == imp);

    // two columns carrying the same signal
    const auto twin = testing::linear_unit({2.5, 2.5, 0.0, 0.0}, -2.5);
    Rng rng(4);
    Dataset dup;
    for (int i = 0; i < 4000; ++i) {
        const double u = rng.uniform();
        const Sample x{u, u, rng.uniform(), rng.uniform()};
        dup.push_back(x, rng.uniform() < twin.predict_proba(x) ? 1 : 0);
    }
    const auto ti = feature_importance(twin, s, dup, 8);
    CHECK(std::abs(ti[0] - ti[1]) <= 0.01);
}

TEST_CASE("importance ranks the deciding feature first")
{
    const auto s = testing::unit_schema(4);
    Rng rng(12);
    Dataset d;
    for (int i = 0; i < 1200; ++i) {
        Sample x{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
        const int y = x[0] > 0.5 ? 1 : 0;
        d.push_back(std::move(x), y);
    }
    TrainConfig tc;
    tc.epochs = 25;
    tc.batch_size = 32;
    tc.learning_rate = 5e-3;
    const std::vector<std::size_t> hidden{16};
    const auto m = train(d, hidden, tc).model;
    const auto imp = feature_importance(m, s, d, 1);
    CHECK(std::max_element(imp.begin(), imp.end()) - imp.begin() == 0);
    CHECK(imp[0] > 5 * std::max({imp[1], imp[2], imp[3]}));
}

TEST_CASE("adversarial retraining")
{
    const auto bench = make_synthetic(500, 21);
    TrainConfig tc;
    tc.epochs = 6;
    tc.batch_size = 64;
    tc.seed = 5;
    const std::vector<std::size_t> hidden{12};
    const auto base = train(bench.data, hidden, tc).model;

    RetrainConfig cfg;
    cfg.train = tc;
    cfg.max_examples = 10;
    cfg.ga.pop_size = 20;
    cfg.ga.n_offspring = 10;
    cfg.ga.n_gen = 10;

    SUBCASE("a useless budget changes nothing")
    {
        cfg.eps_def = 1e-9;
        const auto r = adversarial_retrain(base, bench.data, bench.schema, bench.constraints, cfg);
        CHECK(r.appended == 0);
        CHECK(r.attacked == 10);
        const auto fresh = train(bench.data, hidden, tc).model;
        CHECK(model_to_json(r.model) == model_to_json(fresh));
    }
    SUBCASE("successes come back as class 1")
    {
        cfg.eps_def = 0.3;
        cfg.attack = RetrainAttack::Cpgd;
        cfg.grad.n_iter = 30;
        const auto r = adversarial_retrain(base, bench.data, bench.schema, bench.constraints, cfg);
        CHECK(r.adversarial.size() == r.appended);
        CHECK(r.appended > 0);
        for (auto y : r.adversarial.labels) {
            CHECK(y == 1);
        }
        CHECK(r.model.hidden_sizes() == base.hidden_sizes());
    }
    SUBCASE("nothing to attack")
    {
        Dataset zeros;
        zeros.push_back(bench.data.samples[0], 0);
        zeros.push_back(bench.data.samples[1], 0);
        CHECK_THROWS_AS(adversarial_retrain(base, zeros, bench.schema, bench.constraints, cfg), DataError);
    }
}
