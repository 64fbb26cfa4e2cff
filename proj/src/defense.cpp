#include "cadv/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "text_util.hpp"

namespace cadv {

Vector feature_importance(const Predictor& model, const FeatureSchema& schema, const Dataset& data,
                          std::uint64_t seed, std::size_t repeats)
{
    if (data.empty()) {
        throw DataError("feature importance needs a non-empty dataset");
    }
    if (repeats == 0) {
        throw ConfigError("importance needs at least one shuffle");
    }
    const double base = auroc(model, data);
    Vector scores(schema.size(), 0.0);
    std::vector<Sample> shuffled = data.samples;
    Vector probs(data.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
        if (!schema.movable(f)) {
            continue;
        }
        Rng rng(mix_seed(seed, f));
        double drop = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::vector<std::size_t> perm(data.size());
            std::iota(perm.begin(), perm.end(), 0);
            rng.shuffle(perm);
            for (std::size_t i = 0; i < data.size(); ++i) {
                shuffled[i][f] = data.samples[perm[i]][f];
                probs[i] = model.predict_proba(shuffled[i]);
            }
            drop += base - auroc(probs, data.labels);
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            shuffled[i][f] = data.samples[i][f];
        }
        scores[f] = std::max(0.0, drop / static_cast<double>(repeats));
    }
    return scores;
}

std::string EngineeredFeature::constraint_text() const
{
    const auto ma = detail::format_double(mean_a);
    const auto mb = detail::format_double(mean_b);
    const auto& a = source_a;
    const auto& b = source_b;
    return "(" + name + " = 1 and " + ma + " <= " + a + " and " + b + " < " + mb + ") or (" + name + " = 1 and " + a
           + " < " + ma + " and " + mb + " <= " + b + ") or (" + name + " = 0 and " + ma + " <= " + a + " and " + mb
           + " <= " + b + ") or (" + name + " = 0 and " + a + " < " + ma + " and " + b + " < " + mb + ")";
}

std::size_t pair_budget(std::size_t n_features)
{
    // C(k,2) < n/4  <=>  2k(k-1) < n
    std::size_t k = 1;
    while (2 * (k + 1) * k < n_features) {
        ++k;
    }
    return k;
}

AugmentationPlan build_plan(const FeatureSchema& schema, const Vector& importance, const Dataset& train)
{
    if (importance.size() != schema.size()) {
        throw DataError("importance vector length does not match schema");
    }
    if (train.empty()) {
        throw DataError("augmentation needs training data for the thresholds");
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema.movable(i)) candidates.push_back(i);
    }
    if (candidates.size() < 2) {
        throw ConfigError("augmentation needs at least two mutable features");
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    const std::size_t k = std::min(pair_budget(schema.size()), candidates.size());
    std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());

    auto mean_of = [&](std::size_t f) {
        double sum = 0.0;
        for (const auto& s : train.samples) sum += schema.to_original(f, s[f]);
        return sum / static_cast<double>(train.size());
    };
    AugmentationPlan plan;
    plan.importance = importance;
    for (std::size_t x = 0; x < chosen.size(); ++x) {
        for (std::size_t y = x + 1; y < chosen.size(); ++y) {
            const auto& a = schema[chosen[x]].name;
            const auto& b = schema[chosen[y]].name;
            plan.features.push_back({"xor_" + a + "_" + b, a, b, mean_of(chosen[x]), mean_of(chosen[y])});
        }
    }
    return plan;
}

FeatureSchema augment_schema(const FeatureSchema& schema, const AugmentationPlan& plan)
{
    auto specs = schema.features();
    for (const auto& f : plan.features) {
        if (schema.index_of(f.name)) {
            throw SchemaError("engineered feature " + f.name + " collides with an existing feature");
        }
        if (!schema.index_of(f.source_a) || !schema.index_of(f.source_b)) {
            throw SchemaError("engineered feature " + f.name + " refers to unknown source features");
        }
        specs.push_back({f.name, FeatureKind::Binary, 0.0, 1.0, true});
    }
    return FeatureSchema(std::move(specs));
}

Dataset augment_dataset(const FeatureSchema& schema, const Dataset& data, const AugmentationPlan& plan)
{
    Dataset out;
    for (std::size_t r = 0; r < data.size(); ++r) {
        Sample s = data.samples[r];
        if (s.size() != schema.size()) {
            throw DataError("row length does not match schema");
        }
        for (const auto& f : plan.features) {
            const auto a = *schema.index_of(f.source_a);
            const auto b = *schema.index_of(f.source_b);
            s.push_back(static_cast<double>(f.value(schema.to_original(a, s[a]), schema.to_original(b, s[b]))));
        }
        out.push_back(std::move(s), data.labels[r]);
    }
    return out;
}

ConstraintSet augment_constraints(const ConstraintSet& omega, const AugmentationPlan& plan)
{
    ConstraintSet out = omega;
    for (const auto& f : plan.features) {
        out.add(f.name, parse_constraint(f.constraint_text()));
    }
    return out;
}

std::string plan_to_json(const AugmentationPlan& plan)
{
    nlohmann::json j;
    j["features"] = nlohmann::json::array();
    for (const auto& f : plan.features) {
        j["features"].push_back({{"name", f.name},
                                 {"sources", {f.source_a, f.source_b}},
                                 {"means", {f.mean_a, f.mean_b}},
                                 {"constraint", f.constraint_text()}});
    }
    j["importance"] = plan.importance;
    return j.dump(2) + "\n";
}

AugmentationPlan plan_from_json(std::string_view text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        AugmentationPlan plan;
        for (const auto& jf : j.at("features")) {
            const auto sources = jf.at("sources").get<std::vector<std::string>>();
            const auto means = jf.at("means").get<Vector>();
            if (sources.size() != 2 || means.size() != 2) {
                throw DataError("engineered feature needs two sources and two means");
            }
            plan.features.push_back({jf.at("name").get<std::string>(), sources[0], sources[1], means[0], means[1]});
        }
        if (j.contains("importance")) {
            plan.importance = j["importance"].get<Vector>();
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed augmentation plan: ") + e.what());
    }
}

void save_plan(const std::filesystem::path& path, const AugmentationPlan& plan)
{
    detail::write_file(path, plan_to_json(plan));
}

AugmentationPlan load_plan(const std::filesystem::path& path) { return plan_from_json(detail::read_file(path)); }

RetrainResult adversarial_retrain(const MLP& model, const Dataset& train_set, const FeatureSchema& schema,
                                  const ConstraintSet& omega, const RetrainConfig& cfg)
{
    const ClassifierThreshold t = cfg.attack == RetrainAttack::Moeva ? cfg.ga.threshold : cfg.grad.threshold;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        if (train_set.labels[i] == 1 && t(model.predict_proba(train_set.samples[i])) == 1) {
            eligible.push_back(i);
        }
    }
    if (eligible.empty()) {
        throw DataError("no correctly classified class-1 training examples to attack");
    }
    RetrainResult out;
    out.eligible = eligible.size();
    if (cfg.max_examples > 0 && eligible.size() > cfg.max_examples) {
        Rng rng(cfg.seed);
        rng.shuffle(eligible);
        eligible.resize(cfg.max_examples);
        std::sort(eligible.begin(), eligible.end());
    }
    out.attacked = eligible.size();

    std::vector<Sample> originals;
    for (auto i : eligible) originals.push_back(train_set.samples[i]);
    std::vector<AttackResult> results;
    if (cfg.attack == RetrainAttack::Moeva) {
        GAConfig ga = cfg.ga;
        ga.eps = cfg.eps_def;
        for (auto& r : moeva_batch(model, schema, omega, originals, ga)) results.push_back(std::move(r.result));
    } else {
        GradAttackConfig grad = cfg.grad;
        grad.eps = cfg.eps_def;
        grad.alpha.reset();
        results = attack_batch(GradAttack::Cpgd, model, schema, omega, originals, grad);
    }

    Dataset augmented = train_set;
    for (const auto& r : results) {
        if (r.success) {
            augmented.push_back(r.best, 1);
            out.adversarial.push_back(r.best, 1);
            ++out.appended;
        }
    }
    auto trained = train(augmented, model.hidden_sizes(), cfg.train);
    out.model = std::move(trained.model);
    out.model.set_schema_hash(model.schema_hash());
    out.holdout_auroc = trained.holdout_auroc;
    return out;
}

} // namespace cadv
