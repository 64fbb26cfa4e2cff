#include "cadv/moeva.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "text_util.hpp"

namespace cadv {

void GAConfig::validate() const
{
    if (pop_size < 2) {
        throw ConfigError("population size must be at least 2");
    }
    if (n_offspring == 0 || n_gen == 0) {
        throw ConfigError("offspring count and generation count must be at least 1");
    }
    if (!(eps > 0.0)) {
        throw ConfigError("eps must be positive");
    }
    if (!(eta_m >= 0.0) || !std::isfinite(eta_m)) {
        throw ConfigError("mutation distribution index must be finite and non-negative");
    }
    if (mutation_prob && !(*mutation_prob >= 0.0 && *mutation_prob <= 1.0)) {
        throw ConfigError("mutation probability must lie in [0, 1]");
    }
    if (!(g3_tol >= 0.0)) {
        throw ConfigError("g3 tolerance must be non-negative");
    }
    if (partitions && *partitions == 0) {
        throw ConfigError("reference-direction partitions must be at least 1");
    }
    threshold.validate();
    penalty.validate();
}

std::size_t GAConfig::resolved_partitions() const
{
    if (partitions) {
        return *partitions;
    }
    std::size_t p = 1;
    while ((p + 1) * (p + 2) / 2 < pop_size) {
        ++p;
    }
    return p;
}

Population initialize(std::span<const double> x0, std::size_t pop_size)
{
    if (pop_size < 2) {
        throw ConfigError("population size must be at least 2");
    }
    return Population(pop_size, Individual{Sample(x0.begin(), x0.end()), {}, false});
}

void evaluate(Individual& ind, const Predictor& model, const ConstraintEvaluator& omega, std::span<const double> x0,
              const GAConfig& cfg)
{
    ind.objectives = {model.predict_proba(ind.genome), distance(ind.genome, x0, cfg.p),
                      omega.total_penalty(ind.genome)};
    ind.feasible_success =
        ind.objectives[0] < cfg.threshold.t && ind.objectives[1] <= cfg.eps && ind.objectives[2] <= cfg.g3_tol;
}

void evaluate(Population& pop, const Predictor& model, const ConstraintEvaluator& omega, std::span<const double> x0,
              const GAConfig& cfg)
{
    for (auto& ind : pop) {
        evaluate(ind, model, omega, x0, cfg);
    }
}

std::pair<Sample, Sample> two_point_crossover(std::span<const double> a, std::span<const double> b,
                                              const std::vector<std::size_t>& movable, std::size_t cut_lo,
                                              std::size_t cut_hi)
{
    if (a.size() != b.size()) {
        throw DataError("crossover parents differ in length");
    }
    if (cut_lo > cut_hi || cut_hi > movable.size()) {
        throw ConfigError("invalid crossover cut points");
    }
    Sample ca(a.begin(), a.end());
    Sample cb(b.begin(), b.end());
    for (std::size_t k = cut_lo; k < cut_hi; ++k) {
        std::swap(ca[movable[k]], cb[movable[k]]);
    }
    return {std::move(ca), std::move(cb)};
}

std::pair<Sample, Sample> two_point_crossover(std::span<const double> a, std::span<const double> b,
                                              const std::vector<std::size_t>& movable, Rng& rng)
{
    const std::size_t m = movable.size();
    if (m == 0) {
        return two_point_crossover(a, b, movable, 0, 0);
    }
    // Two distinct points of {0, ..., m}.
    std::size_t lo = rng.below(m + 1);
    std::size_t hi = rng.below(m);
    if (hi >= lo) {
        ++hi;
    }
    if (lo > hi) {
        std::swap(lo, hi);
    }
    return two_point_crossover(a, b, movable, lo, hi);
}

double polynomial_perturbation(double y, double u, double eta)
{
    const double d1 = y;
    const double d2 = 1.0 - y;
    const double power = 1.0 / (eta + 1.0);
    double dq;
    if (u < 0.5) {
        const double v = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta + 1.0);
        dq = std::pow(v, power) - 1.0;
    } else {
        const double v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta + 1.0);
        dq = 1.0 - std::pow(v, power);
    }
    return std::clamp(y + dq, 0.0, 1.0);
}

void polynomial_mutation(Sample& genome, const FeatureSchema& schema, double prob, double eta, Rng& rng)
{
    for (std::size_t i = 0; i < genome.size(); ++i) {
        if (!schema.movable(i)) {
            continue;
        }
        if (rng.uniform() >= prob) {
            continue;
        }
        const double y = polynomial_perturbation(std::clamp(genome[i], 0.0, 1.0), rng.uniform(), eta);
        genome[i] = schema[i].discrete() ? schema.snap(i, y) : y;
    }
}

bool dominates(const Objectives& a, const Objectives& b)
{
    bool strict = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] > b[k]) return false;
        if (a[k] < b[k]) strict = true;
    }
    return strict;
}

std::vector<std::vector<std::size_t>> fast_nondominated_sort(const std::vector<Objectives>& objs)
{
    const std::size_t n = objs.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(objs[i], objs[j])) {
                dominated[i].push_back(j);
                ++count[j];
            } else if (dominates(objs[j], objs[i])) {
                dominated[j].push_back(i);
                ++count[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (count[i] == 0) current.push_back(i);
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (auto i : current) {
            for (auto j : dominated[i]) {
                if (--count[j] == 0) next.push_back(j);
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

std::vector<Objectives> das_dennis(std::size_t partitions)
{
    if (partitions == 0) {
        throw ConfigError("reference-direction partitions must be at least 1");
    }
    std::vector<Objectives> out;
    const auto p = static_cast<double>(partitions);
    for (std::size_t a = 0; a <= partitions; ++a) {
        for (std::size_t b = 0; a + b <= partitions; ++b) {
            const std::size_t c = partitions - a - b;
            out.push_back({static_cast<double>(a) / p, static_cast<double>(b) / p, static_cast<double>(c) / p});
        }
    }
    return out;
}

std::vector<std::size_t> survival(const std::vector<Objectives>& pool, std::size_t target,
                                  const std::vector<Objectives>& directions)
{
    std::vector<std::size_t> selected;
    if (pool.size() <= target) {
        selected.resize(pool.size());
        std::iota(selected.begin(), selected.end(), 0);
        return selected;
    }
    if (directions.empty()) {
        throw ConfigError("survival needs at least one reference direction");
    }
    const auto fronts = fast_nondominated_sort(pool);
    const std::vector<std::size_t>* splitting = nullptr;
    for (const auto& front : fronts) {
        if (selected.size() + front.size() <= target) {
            selected.insert(selected.end(), front.begin(), front.end());
            if (selected.size() == target) return selected;
        } else {
            splitting = &front;
            break;
        }
    }

    Objectives ideal = pool.front();
    Objectives nadir = pool.front();
    for (const auto& o : pool) {
        for (std::size_t k = 0; k < 3; ++k) {
            ideal[k] = std::min(ideal[k], o[k]);
            nadir[k] = std::max(nadir[k], o[k]);
        }
    }
    auto associate = [&](std::size_t idx) {
        Objectives f{};
        for (std::size_t k = 0; k < 3; ++k) {
            const double range = nadir[k] - ideal[k];
            f[k] = (pool[idx][k] - ideal[k]) / (range > 1e-12 ? range : 1.0);
        }
        std::size_t best_dir = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t d = 0; d < directions.size(); ++d) {
            const auto& w = directions[d];
            const double ww = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
            const double proj = (f[0] * w[0] + f[1] * w[1] + f[2] * w[2]) / ww;
            double dist = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                const double r = f[k] - proj * w[k];
                dist += r * r;
            }
            dist = std::sqrt(dist);
            if (dist < best_dist) {
                best_dist = dist;
                best_dir = d;
            }
        }
        return std::pair{best_dir, best_dist};
    };

    std::vector<std::size_t> niche_count(directions.size(), 0);
    for (auto idx : selected) {
        ++niche_count[associate(idx).first];
    }
    struct Candidate {
        std::size_t index;
        std::size_t niche;
        double dist;
    };
    std::vector<Candidate> remaining;
    for (auto idx : *splitting) {
        const auto [niche, dist] = associate(idx);
        remaining.push_back({idx, niche, dist});
    }
    while (selected.size() < target) {
        std::size_t pick = 0;
        for (std::size_t k = 1; k < remaining.size(); ++k) {
            const auto& a = remaining[k];
            const auto& b = remaining[pick];
            if (std::tuple{niche_count[a.niche], a.dist, a.index} < std::tuple{niche_count[b.niche], b.dist, b.index}) {
                pick = k;
            }
        }
        selected.push_back(remaining[pick].index);
        ++niche_count[remaining[pick].niche];
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return selected;
}

namespace {

struct Tracked {
    Individual ind;
    bool success{false};
    bool within{false};
};

// Successes first (lowest h), then within budget, lower penalty, lower h, lower distance.
bool better(const Tracked& a, const Tracked& b)
{
    if (a.success != b.success) return a.success;
    const auto& x = a.ind.objectives;
    const auto& y = b.ind.objectives;
    if (a.success) return x[0] < y[0];
    if (a.within != b.within) return a.within;
    return std::tuple{x[2], x[0], x[1]} < std::tuple{y[2], y[0], y[1]};
}

} // namespace

MoevaResult moeva_attack(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                         std::span<const double> x0, const GAConfig& cfg)
{
    cfg.validate();
    if (x0.size() != schema.size() || model.input_dim() != schema.size()) {
        throw DataError("sample, schema and model dimensions disagree");
    }
    const ConstraintEvaluator ev(schema, omega, x0, cfg.penalty);
    std::vector<std::size_t> movable;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema.movable(i)) movable.push_back(i);
    }
    const double prob = cfg.mutation_prob.value_or(movable.empty() ? 0.0 : 1.0 / static_cast<double>(movable.size()));
    const auto directions = das_dennis(cfg.resolved_partitions());
    const std::uint64_t seed = sample_seed(cfg.seed, x0);

    MoevaResult out;
    Population pop = initialize(x0, cfg.pop_size);
    evaluate(pop.front(), model, ev, x0, cfg);
    for (auto& ind : pop) ind = pop.front();

    Tracked best{pop.front(), false, true};
    std::size_t best_gen = 0;
    AttackResult& r = out.result;
    r.original.assign(x0.begin(), x0.end());

    Population offspring;
    std::vector<Objectives> objs;
    for (std::size_t gen = 1; gen <= cfg.n_gen; ++gen) {
        Rng rng(mix_seed(seed, gen));
        offspring.clear();
        while (offspring.size() < cfg.n_offspring) {
            const std::size_t a = rng.below(pop.size());
            std::size_t b = rng.below(pop.size() - 1);
            if (b >= a) ++b;
            auto [ca, cb] = two_point_crossover(pop[a].genome, pop[b].genome, movable, rng);
            polynomial_mutation(ca, schema, prob, cfg.eta_m, rng);
            polynomial_mutation(cb, schema, prob, cfg.eta_m, rng);
            offspring.push_back({std::move(ca), {}, false});
            if (offspring.size() < cfg.n_offspring) {
                offspring.push_back({std::move(cb), {}, false});
            }
        }
        for (auto& child : offspring) {
            evaluate(child, model, ev, x0, cfg);
            const bool within = child.objectives[1] <= cfg.eps;
            const bool ok = within && ev.satisfied(child.genome);
            const bool mis = cfg.threshold(child.objectives[0]) == 0;
            r.feasible_found = r.feasible_found || ok;
            r.misclassified_found = r.misclassified_found || (within && mis);
            Tracked t{child, child.feasible_success && ok, within};
            if (better(t, best)) {
                best = std::move(t);
                best_gen = gen;
            }
        }

        pop.insert(pop.end(), std::make_move_iterator(offspring.begin()), std::make_move_iterator(offspring.end()));
        objs.clear();
        for (const auto& ind : pop) objs.push_back(ind.objectives);
        const auto keep = survival(objs, cfg.pop_size, directions);
        Population next;
        next.reserve(keep.size());
        for (auto idx : keep) next.push_back(std::move(pop[idx]));
        pop = std::move(next);

        out.history.push_back({gen, best.success, best.ind.objectives});
    }

    assess(r, model, ev, best.ind.genome, cfg.eps, cfg.p, cfg.threshold);
    r.iterations_used = best_gen;
    out.final_population = std::move(pop);
    return out;
}

std::vector<MoevaResult> moeva_batch(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                                     const std::vector<Sample>& samples, const GAConfig& cfg)
{
    cfg.validate();
    std::vector<MoevaResult> out(samples.size());
    parallel_for(samples.size(), cfg.threads,
                 [&](std::size_t i) { out[i] = moeva_attack(model, schema, omega, samples[i], cfg); });
    return out;
}

std::string history_csv(const std::vector<GenerationRecord>& history)
{
    std::ostringstream os;
    os << "generation,cumulative_success,best_g1,best_g2,best_g3\n";
    for (const auto& h : history) {
        os << h.generation << ',' << (h.cumulative_success ? 1 : 0) << ',' << detail::format_double(h.best[0]) << ','
           << detail::format_double(h.best[1]) << ',' << detail::format_double(h.best[2]) << '\n';
    }
    return os.str();
}

} // namespace cadv
