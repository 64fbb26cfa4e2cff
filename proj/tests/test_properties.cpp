#include <cmath>

#include "doctest.h"

#include "cadv/moeva.hpp"
#include "cadv/penalty.hpp"
#include "cadv/synth.hpp"
#include "support.hpp"

using namespace cadv;

namespace {

FeatureSchema mixed_schema()
{
    return FeatureSchema({{"a", FeatureKind::Continuous, -3.5, 12.25, true},
                          {"b", FeatureKind::Integer, 2, 40, true},
                          {"c", FeatureKind::Binary, 0, 1, true},
                          {"d", FeatureKind::Continuous, 0, 1e6, false},
                          {"e", FeatureKind::Continuous, 7, 7, true},
                          {"f", FeatureKind::Continuous, 0, 1, true}});
}

Sample random_sample(Rng& rng, std::size_t n)
{
    Sample s(n);
    for (auto& v : s) {
        v = rng.uniform();
    }
    return s;
}

} // namespace

TEST_CASE("scaling round trip")
{
    const auto s = mixed_schema();
    Rng rng(1);
    for (int i = 0; i < 20000; ++i) {
        for (std::size_t k = 0; k < s.size(); ++k) {
            const double v = rng.uniform(s[k].min, s[k].max);
            const double back = s.to_original(k, s.to_scaled(k, v));
            REQUIRE(std::abs(back - (s[k].degenerate() ? s[k].min : v)) <= 1e-12 * std::max(1.0, std::abs(v)));
            REQUIRE(s.to_original(k, s.encode_exact(k, v)) == doctest::Approx(v).epsilon(1e-15));
        }
    }
}

TEST_CASE("distance is a metric")
{
    Rng rng(2);
    for (auto p : {NormOrder::L1, NormOrder::L2, NormOrder::Linf}) {
        for (int i = 0; i < 3000; ++i) {
            const auto x = random_sample(rng, 5), y = random_sample(rng, 5), z = random_sample(rng, 5);
            const double xy = distance(x, y, p);
            REQUIRE(xy >= 0.0);
            REQUIRE(xy == distance(y, x, p));
            REQUIRE(distance(x, z, p) <= xy + distance(y, z, p) + 1e-12);
            REQUIRE(distance(x, x, p) == 0.0);
        }
    }
}

TEST_CASE("projection is idempotent and respects immutables")
{
    const auto s = mixed_schema();
    Rng rng(3);
    for (auto p : {NormOrder::L1, NormOrder::L2, NormOrder::Linf}) {
        for (int i = 0; i < 3000; ++i) {
            const auto x0 = random_sample(rng, s.size());
            Sample x = x0;
            for (auto& v : x) {
                v += rng.uniform(-0.8, 0.8);
            }
            const double eps = rng.uniform(0.01, 0.6);
            const auto once = project_ball(x, x0, eps, p, s);
            REQUIRE(distance(once, x0, p) <= eps + 1e-12);
            for (std::size_t k = 0; k < s.size(); ++k) {
                REQUIRE(once[k] >= 0.0);
                REQUIRE(once[k] <= 1.0);
                if (!s.movable(k)) {
                    REQUIRE(once[k] == x0[k]);
                }
            }
            const auto twice = project_ball(once, x0, eps, p, s);
            for (std::size_t k = 0; k < s.size(); ++k) {
                REQUIRE(twice[k] == doctest::Approx(once[k]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("penalties are never negative")
{
    const auto s = mixed_schema();
    Rng rng(4);
    testing::TreeGen gen{rng, {"a", "b", "c", "d", "f"}};
    for (int i = 0; i < 3000; ++i) {
        const auto c = gen.constraint(3);
        const auto x = s.to_original(random_sample(rng, s.size()));
        const auto x0 = s.to_original(random_sample(rng, s.size()));
        const double p = penalty(*c, {x, x0, &s});
        REQUIRE(p >= 0.0);
        REQUIRE(std::isfinite(p));
    }
}

TEST_CASE("synthetic rows satisfy every constraint")
{
    const auto bench = make_synthetic(2000, 99);
    const auto omega = bench.constraints.bind(bench.schema);
    CHECK(omega.size() == 6);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < bench.data.size(); ++i) {
        const auto x = bench.schema.to_original(bench.data.samples[i]);
        for (const auto& c : omega) {
            INFO(c.name);
            REQUIRE(eval_bool(*c.expr, {x, x, &bench.schema}));
        }
        positives += static_cast<std::size_t>(bench.data.labels[i]);
    }
    CHECK(positives > 500);
    CHECK(positives < 1500);

    const auto [a, b] = split_dataset(bench.data, 0.25, 1);
    CHECK(a.size() == 1500);
    CHECK(b.size() == 500);
    const auto again = make_synthetic(2000, 99);
    CHECK(again.data.samples == bench.data.samples);
}

TEST_CASE("genetic operators keep genomes valid")
{
    const auto s = mixed_schema();
    std::vector<std::size_t> movable;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.movable(i)) {
            movable.push_back(i);
        }
    }
    Rng rng(5);
    auto valid = [&](const Sample& g, const Sample& x0) {
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (g[k] < 0.0 || g[k] > 1.0) return false;
            if (!s.movable(k) && g[k] != x0[k]) return false;
            if (s[k].discrete() && s.to_original(k, g[k]) != std::round(s.to_original(k, g[k]))) return false;
        }
        return true;
    };
    Sample x0(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        x0[k] = s.snap(k, rng.uniform());
    }
    Sample a = x0, b = x0;
    std::size_t violations = 0;
    for (int i = 0; i < 20000; ++i) {
        auto [c, d] = two_point_crossover(a, b, movable, rng);
        polynomial_mutation(c, s, 0.5, 20.0, rng);
        polynomial_mutation(d, s, 0.5, 20.0, rng);
        violations += valid(c, x0) ? 0 : 1;
        violations += valid(d, x0) ? 0 : 1;
        a = std::move(c);
        b = (i % 7 == 0) ? x0 : std::move(d);
    }
    CHECK(violations == 0);
}
