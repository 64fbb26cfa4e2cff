#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadv/defense.hpp"
#include "cadv/runner.hpp"
#include "cadv/synth.hpp"

namespace fs = std::filesystem;
using namespace cadv;

namespace {

struct TrainOptions {
    std::vector<std::size_t> hidden{64, 64, 32};
    TrainConfig cfg;
    bool no_class_weights{false};

    void add(CLI::App* app)
    {
        app->add_option("--hidden", hidden, "Hidden layer sizes")->delimiter(',');
        app->add_option("--epochs", cfg.epochs, "Training epochs");
        app->add_option("--batch-size", cfg.batch_size, "Mini-batch size");
        app->add_option("--lr", cfg.learning_rate, "Adam learning rate");
        app->add_option("--train-seed", cfg.seed, "Training seed");
        app->add_option("--holdout", cfg.holdout_fraction, "Held-out fraction for the reported AUROC");
        app->add_flag("--no-class-weights", no_class_weights, "Disable inverse-frequency class weights");
    }
    TrainConfig resolved() const
    {
        TrainConfig c = cfg;
        c.class_weighting = !no_class_weights;
        return c;
    }
};

struct AttackOptions {
    std::string kind{"moeva"};
    std::string norm{"2"};
    double eps{0.2};
    double threshold{0.5};
    double tau{1e-6};
    std::uint64_t seed{0};
    // gradient attacks
    double alpha{0.0};
    std::size_t n_iter{100};
    bool random_init{false};
    double penalty_weight{1.0};
    // genetic attack
    std::size_t pop_size{200};
    std::size_t n_offspring{100};
    std::size_t n_gen{100};
    double eta_m{20.0};
    double mutation_prob{0.0};
    std::size_t partitions{0};
    double g3_tol{1e-9};

    void add(CLI::App* app)
    {
        app->add_option("--eps", eps, "Perturbation budget in scaled space");
        app->add_option("--norm", norm, "Norm order: 1, 2 or inf");
        app->add_option("--threshold", threshold, "Classification threshold");
        app->add_option("--tau", tau, "Strict-inequality margin (original units)");
        app->add_option("--seed", seed, "Attack seed");
        app->add_option("--alpha", alpha, "Step size (default eps/10)");
        app->add_option("--iters", n_iter, "Gradient iterations");
        app->add_flag("--random-init", random_init, "Start from a random point in the ball");
        app->add_option("--penalty-weight", penalty_weight, "Multiplier on the penalty gradient");
        app->add_option("--pop", pop_size, "Population size");
        app->add_option("--offspring", n_offspring, "Offspring per generation");
        app->add_option("--gens", n_gen, "Generations");
        app->add_option("--eta", eta_m, "Polynomial mutation distribution index");
        app->add_option("--mutation-prob", mutation_prob, "Per-gene mutation probability (default 1/mutable)");
        app->add_option("--partitions", partitions, "Reference-direction partitions (default: enough for --pop)");
        app->add_option("--g3-tol", g3_tol, "Penalty tolerance for a candidate success");
    }
    GradAttackConfig grad() const
    {
        GradAttackConfig g;
        g.eps = eps;
        g.p = parse_norm(norm);
        if (alpha > 0.0) g.alpha = alpha;
        g.n_iter = n_iter;
        g.random_init = random_init;
        g.threshold.t = threshold;
        g.penalty_weight = penalty_weight;
        g.penalty.tau = tau;
        g.seed = seed;
        return g;
    }
    GAConfig ga() const
    {
        GAConfig g;
        g.pop_size = pop_size;
        g.n_offspring = n_offspring;
        g.n_gen = n_gen;
        g.eps = eps;
        g.p = parse_norm(norm);
        g.threshold.t = threshold;
        g.g3_tol = g3_tol;
        g.eta_m = eta_m;
        if (mutation_prob > 0.0) g.mutation_prob = mutation_prob;
        if (partitions > 0) g.partitions = partitions;
        g.penalty.tau = tau;
        g.seed = seed;
        return g;
    }
};

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

MLP train_and_save(const FeatureSchema& schema, const Dataset& data, const TrainOptions& opts, const fs::path& out)
{
    auto result = train(data, opts.hidden, opts.resolved());
    result.model.set_schema_hash(schema.hash());
    save_model(out, result.model);
    print_json({{"model", out.string()}, {"holdout_auroc", result.holdout_auroc}, {"final_loss", result.epoch_loss.back()}});
    return std::move(result.model);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Constrained adversarial examples for tabular models"};
    app.set_config("--config", "", "TOML/INI file with option values; flags override it");
    app.require_subcommand(1);

    // synth-gen
    auto* synth = app.add_subcommand("synth-gen", "Generate the synthetic constrained benchmark");
    fs::path synth_out = "bench";
    std::size_t synth_n = 5000;
    std::uint64_t synth_seed = 7;
    double synth_test = 0.2;
    std::uint64_t split_seed = 11;
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--n", synth_n, "Number of rows");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--test-fraction", synth_test, "Fraction of rows in test.csv");
    synth->add_option("--split-seed", split_seed, "Train/test split seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train an MLP");
    fs::path schema_path;
    fs::path constraints_path;
    fs::path data_path;
    fs::path test_path;
    fs::path model_path;
    fs::path out_path;
    TrainOptions train_opts;
    train_cmd->add_option("--schema", schema_path, "Schema file")->required();
    train_cmd->add_option("--data", data_path, "Training CSV")->required();
    train_cmd->add_option("--out", out_path, "Model JSON to write")->required();
    train_opts.add(train_cmd);

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "Attack class-1 test examples");
    AttackOptions attack_opts;
    std::size_t n_samples = 100;
    std::uint64_t selection_seed = 0;
    std::size_t threads = 0;
    attack_cmd->add_option("kind", attack_opts.kind, "pgd, cpgd or moeva")
        ->required()
        ->check(CLI::IsMember({"pgd", "cpgd", "moeva"}));
    attack_cmd->add_option("--schema", schema_path, "Schema file")->required();
    attack_cmd->add_option("--constraints", constraints_path, "Constraint file")->required();
    attack_cmd->add_option("--data", data_path, "Test CSV")->required();
    attack_cmd->add_option("--model", model_path, "Model JSON")->required();
    attack_cmd->add_option("--out", out_path, "Report directory")->required();
    attack_cmd->add_option("--n-samples", n_samples, "Maximum number of attacked originals");
    attack_cmd->add_option("--selection-seed", selection_seed, "Seed for subsampling originals");
    attack_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    attack_opts.add(attack_cmd);

    // defend
    auto* defend_cmd = app.add_subcommand("defend", "Build a defended model");
    defend_cmd->require_subcommand(1);
    auto* augment_cmd = defend_cmd->add_subcommand("augment", "Constraint augmentation with engineered XOR features");
    std::uint64_t importance_seed = 0;
    augment_cmd->add_option("--schema", schema_path, "Schema file")->required();
    augment_cmd->add_option("--constraints", constraints_path, "Constraint file")->required();
    augment_cmd->add_option("--data", data_path, "Training CSV")->required();
    augment_cmd->add_option("--test", test_path, "Test CSV to augment alongside");
    augment_cmd->add_option("--model", model_path, "Undefended model (for importance)")->required();
    augment_cmd->add_option("--out", out_path, "Output directory")->required();
    augment_cmd->add_option("--importance-seed", importance_seed, "Seed for the importance shuffles and split");
    TrainOptions augment_train;
    augment_train.add(augment_cmd);

    auto* retrain_cmd = defend_cmd->add_subcommand("retrain", "Adversarial retraining");
    std::string retrain_attack = "moeva";
    double eps_def = 0.1;
    std::size_t max_examples = 0;
    std::uint64_t retrain_seed = 0;
    retrain_cmd->add_option("--schema", schema_path, "Schema file")->required();
    retrain_cmd->add_option("--constraints", constraints_path, "Constraint file")->required();
    retrain_cmd->add_option("--data", data_path, "Training CSV")->required();
    retrain_cmd->add_option("--model", model_path, "Model to attack")->required();
    retrain_cmd->add_option("--out", out_path, "Output directory")->required();
    retrain_cmd->add_option("--attack", retrain_attack, "cpgd or moeva")->check(CLI::IsMember({"cpgd", "moeva"}));
    retrain_cmd->add_option("--eps-def", eps_def, "Attack budget used on training data");
    retrain_cmd->add_option("--max-examples", max_examples, "Cap on attacked training rows (0 = all)");
    retrain_cmd->add_option("--selection-seed", retrain_seed, "Seed for subsampling training rows");
    retrain_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    AttackOptions retrain_attack_opts;
    retrain_attack_opts.add(retrain_cmd);
    TrainOptions retrain_train;
    retrain_train.add(retrain_cmd);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Clean performance of a model");
    double eval_threshold = 0.5;
    eval_cmd->add_option("--schema", schema_path, "Schema file")->required();
    eval_cmd->add_option("--data", data_path, "CSV to score")->required();
    eval_cmd->add_option("--model", model_path, "Model JSON")->required();
    eval_cmd->add_option("--threshold", eval_threshold, "Classification threshold");
    eval_cmd->add_option("--out", out_path, "Optional JSON file for the result");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            auto bench = make_synthetic(synth_n, synth_seed);
            auto [tr, te] = split_dataset(bench.data, synth_test, split_seed);
            save_schema(synth_out / "schema.txt", bench.schema);
            save_constraints(synth_out / "constraints.txt", bench.constraints);
            save_dataset(synth_out / "train.csv", bench.schema, tr);
            save_dataset(synth_out / "test.csv", bench.schema, te);
            print_json({{"out", synth_out.string()}, {"train_rows", tr.size()}, {"test_rows", te.size()}});
        } else if (train_cmd->parsed()) {
            const auto schema = load_schema(schema_path);
            train_and_save(schema, load_dataset(data_path, schema), train_opts, out_path);
        } else if (attack_cmd->parsed()) {
            ExperimentConfig cfg;
            cfg.schema = schema_path;
            cfg.constraints = constraints_path;
            cfg.dataset = data_path;
            cfg.model = model_path;
            cfg.output_dir = out_path;
            cfg.attack = parse_attack_kind(attack_opts.kind);
            cfg.grad = attack_opts.grad();
            cfg.ga = attack_opts.ga();
            cfg.n_samples = n_samples;
            cfg.selection_seed = selection_seed;
            cfg.threads = threads;
            const auto report = run_experiment(cfg);
            std::cout << metrics_json(report, cfg);
        } else if (augment_cmd->parsed()) {
            const auto schema = load_schema(schema_path);
            const auto omega = load_constraints(constraints_path);
            const auto data = load_dataset(data_path, schema);
            const auto model = load_model(model_path);
            auto [fit, held] = split_dataset(data, 0.2, importance_seed);
            const auto importance = feature_importance(model, schema, held, importance_seed);
            const auto plan = build_plan(schema, importance, data);
            const auto schema2 = augment_schema(schema, plan);
            fs::create_directories(out_path);
            save_plan(out_path / "plan.json", plan);
            save_schema(out_path / "schema.txt", schema2);
            save_constraints(out_path / "constraints.txt", augment_constraints(omega, plan));
            const auto data2 = augment_dataset(schema, data, plan);
            save_dataset(out_path / "train.csv", schema2, data2);
            if (!test_path.empty()) {
                save_dataset(out_path / "test.csv", schema2, augment_dataset(schema, load_dataset(test_path, schema), plan));
            }
            TrainOptions opts = augment_train;
            opts.hidden = model.hidden_sizes();
            train_and_save(schema2, data2, opts, out_path / "model.json");
        } else if (retrain_cmd->parsed()) {
            const auto schema = load_schema(schema_path);
            const auto omega = load_constraints(constraints_path);
            const auto data = load_dataset(data_path, schema);
            const auto model = load_model(model_path);
            RetrainConfig rc;
            rc.attack = retrain_attack == "cpgd" ? RetrainAttack::Cpgd : RetrainAttack::Moeva;
            rc.eps_def = eps_def;
            rc.max_examples = max_examples;
            rc.seed = retrain_seed;
            rc.ga = retrain_attack_opts.ga();
            rc.ga.threads = threads;
            rc.grad = retrain_attack_opts.grad();
            rc.grad.threads = threads;
            rc.train = retrain_train.resolved();
            auto result = adversarial_retrain(model, data, schema, omega, rc);
            fs::create_directories(out_path);
            save_model(out_path / "model.json", result.model);
            save_dataset(out_path / "adversarial.csv", schema, result.adversarial);
            print_json({{"model", (out_path / "model.json").string()},
                        {"eligible", result.eligible},
                        {"attacked", result.attacked},
                        {"appended", result.appended},
                        {"holdout_auroc", result.holdout_auroc}});
        } else if (eval_cmd->parsed()) {
            const auto schema = load_schema(schema_path);
            const auto data = load_dataset(data_path, schema);
            const auto model = load_model(model_path);
            ClassifierThreshold t{eval_threshold};
            t.validate();
            nlohmann::json j{{"n", data.size()}, {"auroc", auroc(model, data)}, {"accuracy", accuracy(model, data, t)}};
            if (!out_path.empty()) {
                std::filesystem::create_directories(out_path.parent_path().empty() ? "." : out_path.parent_path());
                std::FILE* f = std::fopen(out_path.string().c_str(), "w");
                if (!f) throw Error("cannot write " + out_path.string());
                std::fputs((j.dump(2) + "\n").c_str(), f);
                std::fclose(f);
            }
            print_json(j);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
