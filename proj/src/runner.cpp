#include "cadv/runner.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "text_util.hpp"

namespace cadv {

Metrics compute_metrics(const std::vector<AttackResult>& results)
{
    if (results.empty()) {
        throw DataError("no attack results to summarize");
    }
    std::size_t c = 0;
    std::size_t m = 0;
    std::size_t cm = 0;
    for (const auto& r : results) {
        c += (r.feasible_found || r.success) ? 1 : 0;
        m += (r.misclassified_found || r.success) ? 1 : 0;
        cm += r.success ? 1 : 0;
    }
    const auto n = static_cast<double>(results.size());
    return {results.size(), 100.0 * static_cast<double>(c) / n, 100.0 * static_cast<double>(m) / n,
            100.0 * static_cast<double>(cm) / n};
}

std::vector<std::size_t> select_targets(const Predictor& model, const Dataset& test, std::size_t n, std::uint64_t seed,
                                        ClassifierThreshold t)
{
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.labels[i] == 1 && t(model.predict_proba(test.samples[i])) == 1) {
            eligible.push_back(i);
        }
    }
    if (eligible.empty()) {
        throw DataError("no test example has label 1 and is classified as 1");
    }
    if (eligible.size() > n) {
        Rng rng(seed);
        rng.shuffle(eligible);
        eligible.resize(n);
        std::sort(eligible.begin(), eligible.end());
    }
    return eligible;
}

bool revalidate(const AttackResult& r, const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                double eps, NormOrder p, ClassifierThreshold t)
{
    const auto bound = omega.bind(schema);
    const auto x = schema.to_original(r.best);
    const auto x0 = schema.to_original(r.original);
    const EvalContext ctx{x, x0, &schema};
    for (const auto& c : bound) {
        if (!eval_bool(*c.expr, ctx)) {
            return false;
        }
    }
    return distance(r.best, r.original, p) <= eps && t(model.predict_proba(r.best)) == 0;
}

std::string_view to_string(AttackKind kind)
{
    switch (kind) {
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Cpgd: return "cpgd";
    case AttackKind::Moeva: return "moeva";
    }
    return "?";
}

AttackKind parse_attack_kind(std::string_view text)
{
    if (text == "pgd") return AttackKind::Pgd;
    if (text == "cpgd") return AttackKind::Cpgd;
    if (text == "moeva") return AttackKind::Moeva;
    throw ConfigError("unknown attack '" + std::string(text) + "' (expected pgd, cpgd or moeva)");
}

ExperimentReport run_attack(const Predictor& model, const FeatureSchema& schema, const ConstraintSet& omega,
                            const Dataset& test, const ExperimentConfig& cfg)
{
    ExperimentReport rep;
    rep.attack = cfg.attack;
    rep.target_ids = select_targets(model, test, cfg.n_samples, cfg.selection_seed, cfg.threshold());
    std::vector<Sample> targets;
    for (auto i : rep.target_ids) targets.push_back(test.samples[i]);

    if (cfg.attack == AttackKind::Moeva) {
        GAConfig ga = cfg.ga;
        ga.threads = cfg.threads;
        auto runs = moeva_batch(model, schema, omega, targets, ga);
        rep.curve.assign(ga.n_gen, 0.0);
        for (auto& run : runs) {
            for (std::size_t g = 0; g < run.history.size(); ++g) {
                rep.curve[g] += run.history[g].cumulative_success ? 1.0 : 0.0;
            }
            rep.results.push_back(std::move(run.result));
            rep.histories.push_back(std::move(run.history));
        }
        for (auto& v : rep.curve) v = 100.0 * v / static_cast<double>(runs.size());
    } else {
        GradAttackConfig grad = cfg.grad;
        grad.threads = cfg.threads;
        rep.results = attack_batch(cfg.attack == AttackKind::Pgd ? GradAttack::Pgd : GradAttack::Cpgd, model, schema,
                                   omega, targets, grad);
    }
    rep.metrics = compute_metrics(rep.results);
    for (const auto& r : rep.results) {
        if (r.success) {
            ++rep.reported_successes;
            rep.revalidated += revalidate(r, model, schema, omega, cfg.eps(), cfg.norm(), cfg.threshold()) ? 1 : 0;
        }
    }
    return rep;
}

namespace {

nlohmann::json config_json(const ExperimentConfig& cfg)
{
    nlohmann::json j;
    j["attack"] = std::string(to_string(cfg.attack));
    j["n_samples"] = cfg.n_samples;
    j["selection_seed"] = cfg.selection_seed;
    if (cfg.attack == AttackKind::Moeva) {
        const auto& g = cfg.ga;
        j["eps"] = g.eps;
        j["norm"] = std::string(to_string(g.p));
        j["threshold"] = g.threshold.t;
        j["pop_size"] = g.pop_size;
        j["n_offspring"] = g.n_offspring;
        j["n_gen"] = g.n_gen;
        j["g3_tol"] = g.g3_tol;
        j["eta_m"] = g.eta_m;
        j["mutation_prob"] = g.mutation_prob ? nlohmann::json(*g.mutation_prob) : nlohmann::json();
        j["partitions"] = g.resolved_partitions();
        j["tau"] = g.penalty.tau;
        j["seed"] = g.seed;
    } else {
        const auto& g = cfg.grad;
        j["eps"] = g.eps;
        j["norm"] = std::string(to_string(g.p));
        j["threshold"] = g.threshold.t;
        j["alpha"] = g.step();
        j["n_iter"] = g.n_iter;
        j["random_init"] = g.random_init;
        j["penalty_weight"] = g.penalty_weight;
        j["tau"] = g.penalty.tau;
        j["seed"] = g.seed;
    }
    return j;
}

std::string flag(bool b) { return b ? "1" : "0"; }

} // namespace

std::string metrics_json(const ExperimentReport& report, const ExperimentConfig& cfg)
{
    nlohmann::json j;
    j["attack"] = std::string(to_string(report.attack));
    j["n"] = report.metrics.n;
    j["C"] = report.metrics.c;
    j["M"] = report.metrics.m;
    j["CandM"] = report.metrics.cm;
    j["eps"] = cfg.eps();
    j["norm"] = std::string(to_string(cfg.norm()));
    j["reported_successes"] = report.reported_successes;
    j["revalidated_successes"] = report.revalidated;
    return j.dump(2) + "\n";
}

std::string examples_csv(const ExperimentReport& report)
{
    std::ostringstream os;
    os << "id,misclassified,constraints_ok,within_eps,success,feasible_found,misclassified_found,g1,g2,g3,iterations\n";
    for (std::size_t k = 0; k < report.results.size(); ++k) {
        const auto& r = report.results[k];
        os << report.target_ids[k] << ',' << flag(r.misclassified) << ',' << flag(r.constraints_ok) << ','
           << flag(r.within_eps) << ',' << flag(r.success) << ',' << flag(r.feasible_found) << ','
           << flag(r.misclassified_found) << ',' << detail::format_double(r.g1) << ','
           << detail::format_double(r.g2) << ',' << detail::format_double(r.g3) << ',' << r.iterations_used << '\n';
    }
    return os.str();
}

std::string curve_csv(const ExperimentReport& report)
{
    std::ostringstream os;
    os << "generation,success_rate\n";
    for (std::size_t g = 0; g < report.curve.size(); ++g) {
        os << g + 1 << ',' << detail::format_double(report.curve[g]) << '\n';
    }
    return os.str();
}

std::string history_csv(const ExperimentReport& report)
{
    std::ostringstream os;
    os << "id,generation,cumulative_success,best_g1,best_g2,best_g3\n";
    for (std::size_t k = 0; k < report.histories.size(); ++k) {
        for (const auto& h : report.histories[k]) {
            os << report.target_ids[k] << ',' << h.generation << ',' << flag(h.cumulative_success) << ','
               << detail::format_double(h.best[0]) << ',' << detail::format_double(h.best[1]) << ','
               << detail::format_double(h.best[2]) << '\n';
        }
    }
    return os.str();
}

std::string stamp_json(const ExperimentConfig& cfg, const std::string& input_hash)
{
    nlohmann::json j;
    j["toolkit_version"] = toolkit_version;
    j["config"] = config_json(cfg);
    j["config_hash"] = hex64(fnv1a(config_json(cfg).dump()));
    j["input_hash"] = input_hash;
    return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& report, const ExperimentConfig& cfg, const FeatureSchema& schema,
                  const std::string& input_hash)
{
    const auto& dir = cfg.output_dir;
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "metrics.json", metrics_json(report, cfg));
    detail::write_file(dir / "examples.csv", examples_csv(report));
    detail::write_file(dir / "stamp.json", stamp_json(cfg, input_hash));
    Dataset adv;
    for (const auto& r : report.results) adv.push_back(r.best, 1);
    save_dataset(dir / "adversarial.csv", schema, adv);
    if (report.attack == AttackKind::Moeva) {
        detail::write_file(dir / "curve.csv", curve_csv(report));
        detail::write_file(dir / "history.csv", history_csv(report));
    }
}

ExperimentReport run_experiment(const ExperimentConfig& cfg)
{
    const auto schema_text = detail::read_file(cfg.schema);
    const auto constraints_text = detail::read_file(cfg.constraints);
    const auto data_text = detail::read_file(cfg.dataset);
    const auto model_text = detail::read_file(cfg.model);
    const auto schema = parse_schema(schema_text);
    const auto omega = parse_constraint_set(constraints_text);
    const auto test = parse_dataset(data_text, schema);
    const auto model = model_from_json(model_text);
    if (!model.schema_hash().empty() && model.schema_hash() != schema.hash()) {
        throw ModelError("model " + cfg.model.string() + " was trained on a different schema");
    }
    const auto input_hash = hex64(fnv1a(schema_text + '\n' + constraints_text + '\n' + data_text + '\n' + model_text));
    auto report = run_attack(model, schema, omega, test, cfg);
    write_report(report, cfg, schema, input_hash);
    return report;
}

} // namespace cadv
