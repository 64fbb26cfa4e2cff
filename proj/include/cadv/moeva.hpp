#ifndef CADV_MOEVA_HPP
#define CADV_MOEVA_HPP

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cadv/attack.hpp"

namespace cadv {

using Objectives = std::array<double, 3>;

struct Individual {
    Sample genome;
    /// (h(x), distance to the original, total penalty).
    Objectives objectives{};
    bool feasible_success{false};
};

using Population = std::vector<Individual>;

struct GAConfig {
    std::size_t pop_size{200};
    std::size_t n_offspring{100};
    std::size_t n_gen{100};
    double eps{0.2};
    NormOrder p{NormOrder::L2};
    ClassifierThreshold threshold{};
    double g3_tol{1e-9};
    double eta_m{20.0};
    /// Per-gene mutation probability; 1 / (number of movable features) when unset.
    std::optional<double> mutation_prob;
    /// Das-Dennis partitions; smallest p with C(p+2,2) >= pop_size when unset.
    std::optional<std::size_t> partitions;
    PenaltyConfig penalty{};
    std::uint64_t seed{0};
    /// Workers for the batch entry point; 0 = hardware concurrency.
    std::size_t threads{0};

    void validate() const;
    [[nodiscard]] std::size_t resolved_partitions() const;
};

/// pop_size copies of x0.
Population initialize(std::span<const double> x0, std::size_t pop_size);

/// Objective triple and success flag of one genome.
void evaluate(Individual& ind, const Predictor& model, const ConstraintEvaluator& omega, std::span<const double> x0,
              const GAConfig& cfg);
void evaluate(Population& pop, const Predictor& model, const ConstraintEvaluator& omega, std::span<const double> x0,
              const GAConfig& cfg);

/// Swaps the genes at movable positions [cut_lo, cut_hi) of the movable-index
/// list between the parents.
std::pair<Sample, Sample> two_point_crossover(std::span<const double> a, std::span<const double> b,
                                              const std::vector<std::size_t>& movable, std::size_t cut_lo,
                                              std::size_t cut_hi);
/// Draws the cut points uniformly: 0 <= cut_lo < cut_hi <= movable.size().
std::pair<Sample, Sample> two_point_crossover(std::span<const double> a, std::span<const double> b,
                                              const std::vector<std::size_t>& movable, Rng& rng);

/// Polynomial perturbation of one gene in [0,1] for uniform draw u in [0,1).
double polynomial_perturbation(double y, double u, double eta);

/// Mutates each movable gene with probability `prob`; discrete genes are
/// snapped to their grid, immutable genes are untouched.
void polynomial_mutation(Sample& genome, const FeatureSchema& schema, double prob, double eta, Rng& rng);

/// Minimization Pareto dominance.
bool dominates(const Objectives& a, const Objectives& b);

/// Fronts of indices into `objs`, each sorted ascending.
std::vector<std::vector<std::size_t>> fast_nondominated_sort(const std::vector<Objectives>& objs);

/// Points of the 3-simplex with coordinates k_i / partitions.
std::vector<Objectives> das_dennis(std::size_t partitions);

/// Indices (into `pool`) of the survivors, in selection order.
std::vector<std::size_t> survival(const std::vector<Objectives>& pool, std::size_t target,
                                  const std::vector<Objectives>& directions);

struct GenerationRecord {
    std::size_t generation{0};
    bool cumulative_success{false};
    Objectives best{};
};

struct MoevaResult {
    AttackResult result;
    std::vector<GenerationRecord> history;
    Population final_population;
};

/// Three-objective genetic attack on one original (label 1).  Uses only
/// predict_proba.
MoevaResult moeva_attack(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                         std::span<const double> x0, const GAConfig& cfg);

std::vector<MoevaResult> moeva_batch(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                                     const std::vector<Sample>& samples, const GAConfig& cfg);

/// CSV with header generation,cumulative_success,best_g1,best_g2,best_g3.
std::string history_csv(const std::vector<GenerationRecord>& history);

} // namespace cadv

#endif
