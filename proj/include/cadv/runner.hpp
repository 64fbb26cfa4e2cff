#ifndef CADV_RUNNER_HPP
#define CADV_RUNNER_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "cadv/cpgd.hpp"
#include "cadv/moeva.hpp"

namespace cadv {

inline constexpr const char* toolkit_version = "0.1.0";

/// Per-original success rates, in percent.
struct Metrics {
    std::size_t n{0};
    /// Some generated example within eps satisfied every constraint.
    double c{0.0};
    /// Some generated example within eps was misclassified.
    double m{0.0};
    /// One example achieved both.
    double cm{0.0};
};

Metrics compute_metrics(const std::vector<AttackResult>& results);

/// Indices of test rows with label 1 that the model classifies as 1; a seeded
/// uniform subsample of size n when there are more, kept in dataset order.
std::vector<std::size_t> select_targets(const Predictor& model, const Dataset& test, std::size_t n, std::uint64_t seed,
                                        ClassifierThreshold t = {});

/// Independent check of a reported success: exact constraint evaluation in
/// original units, distance <= eps, and H(best) = 0.
bool revalidate(const AttackResult& r, const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                double eps, NormOrder p, ClassifierThreshold t);

enum class AttackKind { Pgd, Cpgd, Moeva };
std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);

struct ExperimentConfig {
    std::filesystem::path schema;
    std::filesystem::path constraints;
    std::filesystem::path dataset;
    std::filesystem::path model;
    std::filesystem::path output_dir;
    AttackKind attack{AttackKind::Moeva};
    GradAttackConfig grad{};
    GAConfig ga{};
    std::size_t n_samples{100};
    std::uint64_t selection_seed{0};
    /// Workers for per-original attacks; 0 = hardware concurrency.
    std::size_t threads{0};

    [[nodiscard]] double eps() const { return attack == AttackKind::Moeva ? ga.eps : grad.eps; }
    [[nodiscard]] NormOrder norm() const { return attack == AttackKind::Moeva ? ga.p : grad.p; }
    [[nodiscard]] ClassifierThreshold threshold() const
    {
        return attack == AttackKind::Moeva ? ga.threshold : grad.threshold;
    }
};

struct ExperimentReport {
    AttackKind attack{AttackKind::Moeva};
    Metrics metrics;
    std::vector<std::size_t> target_ids;
    std::vector<AttackResult> results;
    /// Per-original MoEvA2 histories (empty for gradient attacks).
    std::vector<std::vector<GenerationRecord>> histories;
    /// Percentage of originals with a success by each generation.
    std::vector<double> curve;
    std::size_t revalidated{0};
    std::size_t reported_successes{0};
};

/// Runs the configured attack on the selected targets of `test`.
ExperimentReport run_attack(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                            const Dataset& test, const ExperimentConfig& cfg);

std::string metrics_json(const ExperimentReport& report, const ExperimentConfig& cfg);
std::string examples_csv(const ExperimentReport& report);
std::string curve_csv(const ExperimentReport& report);
std::string history_csv(const ExperimentReport& report);
/// Seeds, config hash, input hashes and toolkit version; no timestamps.
std::string stamp_json(const ExperimentConfig& cfg, const std::string& input_hash);

/// Writes metrics.json, examples.csv, adversarial.csv, stamp.json and, for
/// MoEvA2, curve.csv and history.csv into cfg.output_dir.
void write_report(const ExperimentReport& report, const ExperimentConfig& cfg, const FeatureSchema& schema,
                  const std::string& input_hash);

/// Loads the inputs named in cfg, runs the attack and writes the report.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

} // namespace cadv

#endif
