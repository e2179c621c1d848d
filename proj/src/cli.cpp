#include "dcr/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dcr/dataset.hpp"
#include "dcr/eval.hpp"
#include "dcr/lcm.hpp"
#include "dcr/rng.hpp"
#include "dcr/stats.hpp"
#include "dcr/training.hpp"

namespace dcr::cli {

namespace {

constexpr int kOk = 0;
constexpr int kUsageError = 1;
constexpr int kCheckFailure = 2;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path);
}

// Train-config flags shared by `train`, `stats` and `diagnose`. Explicit
// flags override values loaded from --config.
struct ConfigFlags {
    std::optional<std::string> config_path;
    std::vector<std::pair<std::string, std::optional<std::string>*>> entries;

    std::optional<std::string> epochs, batch_uniform, batch_balanced, lr_initial,
        momentum, phi, neighbors, alpha0, beta0, tau, proxies, head_threshold, seed;

    void attach(CLI::App* app, bool training_flags) {
        app->add_option("--config", config_path, "key=value config file");
        auto opt = [&](const std::string& name, std::optional<std::string>& slot,
                       const std::string& help) {
            app->add_option(name, slot, help);
            entries.emplace_back(name.substr(2), &slot);
        };
        if (training_flags) {
            opt("--epochs", epochs, "training epochs");
            opt("--batch_uniform", batch_uniform, "uniform-branch batch size");
            opt("--batch_balanced", batch_balanced, "class-balanced batch size");
            opt("--lr_initial", lr_initial, "initial learning rate");
            opt("--momentum", momentum, "SGD momentum");
            opt("--phi", phi, "loss mix weight");
            opt("--proxies", proxies, "proxy vectors per tail class");
        }
        opt("--neighbors", neighbors, "similar head classes per tail class");
        opt("--alpha0", alpha0, "feature compensation cap");
        opt("--beta0", beta0, "logit compensation cap");
        opt("--tau", tau, "similarity softmax temperature");
        opt("--head_threshold", head_threshold, "head/tail count threshold");
        opt("--seed", seed, "root RNG seed");
    }

    TrainConfig resolve() const {
        TrainConfig config;
        if (config_path) config = load_train_config(*config_path);
        for (const auto& [key, slot] : entries)
            if (slot->has_value()) apply_config_entry(config, key, **slot);
        config.validate();
        return config;
    }
};

int run_gen(const LongTailSpec& spec, const std::string& train_out,
            const std::string& test_out) {
    const LongTailData data = generate_longtail(spec);
    write_features(data.train, train_out);
    write_features(data.test, test_out);
    std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
              << " test samples (K=" << spec.num_classes << ", D=" << spec.dim
              << ")\n";
    return kOk;
}

int run_stats(const std::string& train_path, const ConfigFlags& flags,
              const std::optional<std::string>& out) {
    const TrainConfig config = flags.resolve();
    const FeatureDataset train = read_features(train_path);
    const ClassStats stats = build_class_stats(train, config.stats());
    std::string report = format_stats_report(stats, train.class_counts);
    if (stats.tail_classes.empty())
        report += "# no tail classes: compensation is disabled\n";
    if (out)
        write_text_file(*out, report);
    else
        std::cout << report;
    return kOk;
}

std::string train_report_json(const TrainReport& report) {
    std::ostringstream os;
    os.precision(12);
    os << "{\n  \"seed\": " << report.seed
       << ",\n  \"wall_seconds\": " << report.wall_seconds
       << ",\n  \"loss_uniform\": [";
    for (std::size_t i = 0; i < report.loss_uniform.size(); ++i)
        os << (i ? ", " : "") << report.loss_uniform[i];
    os << "],\n  \"loss_balanced\": [";
    for (std::size_t i = 0; i < report.loss_balanced.size(); ++i)
        os << (i ? ", " : "") << report.loss_balanced[i];
    os << "],\n  \"loss\": [";
    for (std::size_t i = 0; i < report.loss.size(); ++i)
        os << (i ? ", " : "") << report.loss[i];
    os << "]\n}\n";
    return os.str();
}

int run_train(const std::string& train_path, const ConfigFlags& flags,
              const std::string& out,
              const std::optional<std::string>& report_out) {
    const TrainConfig config = flags.resolve();
    const FeatureDataset train_set = read_features(train_path);
    const TrainResult result = train(train_set, config);
    save_model(result.model, out);
    write_text_file(report_out.value_or(out + ".report.json"),
                    train_report_json(result.report));
    std::cout << "trained " << config.epochs << " epochs in "
              << result.report.wall_seconds << " s";
    if (!result.report.loss.empty())
        std::cout << "; final loss " << result.report.loss.back();
    std::cout << "\ncheckpoint: " << out << '\n';
    return kOk;
}

int run_eval(const std::string& model_path, const std::string& test_path,
             std::int64_t many_threshold, std::int64_t few_threshold, int threads,
             const std::optional<std::string>& out,
             const std::optional<std::string>& per_class_out) {
    const DcrModel model = load_model(model_path);
    const FeatureDataset test = read_features(test_path);
    const EvalReport report =
        evaluate(model, test, model.class_counts,
                 SplitThresholds{many_threshold, few_threshold}, threads);
    const std::string json = report.to_json();
    if (out)
        write_text_file(*out, json);
    else
        std::cout << json;
    if (per_class_out) write_text_file(*per_class_out, report.per_class_csv());
    return kOk;
}

int run_diagnose(const std::string& train_path, const std::string& test_path,
                 const ConfigFlags& flags, const std::string& out_dir,
                 bool with_fcm, int threads) {
    const TrainConfig config = flags.resolve();
    const FeatureDataset train = read_features(train_path);
    const FeatureDataset test = read_features(test_path);
    const ClassStats stats = build_class_stats(train, config.stats());
    const DriftReport report = drift_report(train, test, stats, with_fcm, threads);
    write_text_file(out_dir + "/drift_per_class.csv", report.per_class_csv());
    write_text_file(out_dir + "/drift_tail.csv", report.tail_csv());
    std::cout << "wrote " << out_dir << "/drift_per_class.csv and "
              << out_dir << "/drift_tail.csv\n";
    return kOk;
}

int run_oracle_check(int instances, std::int64_t mc_samples, std::uint64_t seed,
                     int dim, int num_classes) {
    bool all_pass = true;
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, "oracle." + std::to_string(i)));

        // Random imbalanced instance through the real statistics pipeline.
        LongTailSpec spec;
        spec.num_classes = num_classes;
        spec.samples_max = 60;
        spec.imbalance_factor = 20.0;
        spec.dim = dim;
        spec.cluster_spread = 1.0;
        spec.seed = rng.next_u64();
        spec.test_per_class = 1;
        const LongTailData data = generate_longtail(spec);

        StatsConfig stats_config;
        stats_config.head_threshold = 10;
        stats_config.beta0 = (i % 4 == 3) ? 0.0 : 2.0;  // include degenerate runs
        const ClassStats stats = build_class_stats(data.train, stats_config);

        // Prefer tail classes with a live variance term; the largest tail
        // class sits at the schedule's zero endpoint.
        std::vector<int> candidates;
        for (int t : stats.tail_classes)
            if (stats_config.beta0 == 0.0 ||
                stats.drift[static_cast<std::size_t>(t)]->beta > 0.0)
                candidates.push_back(t);
        if (candidates.empty()) candidates = stats.tail_classes;
        const int t = candidates[rng.uniform_index(candidates.size())];
        Eigen::VectorXd f(dim);
        for (int d = 0; d < dim; ++d) f[d] = rng.normal();
        Eigen::MatrixXd weights(dim, num_classes);
        for (int k = 0; k < num_classes; ++k)
            for (int d = 0; d < dim; ++d) weights(d, k) = rng.normal();

        const double closed = lcm_loss(linear_bundles(f, t, weights, stats), t);
        const McEstimate mc = mc_expected_loss(f, t, weights, stats, mc_samples,
                                               rng.next_u64());
        const double beta = stats.drift[static_cast<std::size_t>(t)]->beta;
        // The 1e-9 slack absorbs accumulation rounding when the sampled
        // losses are all identical (SE exactly 0).
        const bool pass =
            beta > 0.0
                ? mc.mean <= closed + 3.0 * mc.std_error + 1e-9
                : std::abs(mc.mean - closed) <= 3.0 * mc.std_error + 1e-9;
        all_pass = all_pass && pass;
        std::printf("instance %2d beta=%.3f closed=%.6f mc=%.6f se=%.6f %s\n", i,
                    beta, closed, mc.mean, mc.std_error, pass ? "PASS" : "FAIL");
    }
    return all_pass ? kOk : kCheckFailure;
}

int run_gradcheck(int trials, std::uint64_t seed, int dim, int num_classes) {
    GradCheckOptions options;
    options.trials = trials;
    options.seed = seed;
    options.dim = dim;
    options.num_classes = num_classes;
    const GradCheckReport report = gradcheck(options);
    std::printf("gradcheck: %d trials, max relative error %.3e -> %s\n",
                report.trials, report.max_rel_error, report.pass ? "PASS" : "FAIL");
    return report.pass ? kOk : kCheckFailure;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Dual-compensation residual classifier head over fixed features"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic long-tailed dataset");
    LongTailSpec spec;
    std::string gen_train_out, gen_test_out;
    gen->add_option("--classes", spec.num_classes, "number of classes")->required();
    gen->add_option("--max-samples", spec.samples_max, "largest class count")
        ->required();
    gen->add_option("--imbalance", spec.imbalance_factor, "N_max / N_min")->required();
    gen->add_option("--dim", spec.dim, "feature dimension")->required();
    gen->add_option("--spread", spec.cluster_spread, "per-class std");
    gen->add_option("--drift", spec.drift_strength, "tail test-mean drift in [0,1]");
    gen->add_option("--test-per-class", spec.test_per_class, "test samples per class");
    gen->add_option("--seed", spec.seed, "root RNG seed");
    gen->add_option("--train-out", gen_train_out, "train DCRF path")->required();
    gen->add_option("--test-out", gen_test_out, "test DCRF path")->required();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "per-class statistics report");
    std::string stats_train;
    std::optional<std::string> stats_out;
    ConfigFlags stats_flags;
    stats_cmd->add_option("--train", stats_train, "train DCRF path")->required();
    stats_cmd->add_option("--out", stats_out, "write report here instead of stdout");
    stats_flags.attach(stats_cmd, /*training_flags=*/false);

    // train
    auto* train_cmd = app.add_subcommand("train", "train the dual-branch head");
    std::string train_train, train_out;
    std::optional<std::string> train_report_out;
    ConfigFlags train_flags;
    train_cmd->add_option("--train", train_train, "train DCRF path")->required();
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--report", train_report_out,
                          "training report JSON path (default: <out>.report.json)");
    train_flags.attach(train_cmd, /*training_flags=*/true);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_model, eval_test;
    std::optional<std::string> eval_out, eval_per_class;
    std::int64_t eval_many = 100, eval_few = 20;
    int eval_threads = 1;
    eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
    eval_cmd->add_option("--test", eval_test, "test DCRF path")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON path");
    eval_cmd->add_option("--per-class", eval_per_class, "per-class CSV path");
    eval_cmd->add_option("--many-threshold", eval_many, "Many split: count above");
    eval_cmd->add_option("--few-threshold", eval_few, "Few split: count below");
    eval_cmd->add_option("--threads", eval_threads, "worker threads");

    // diagnose
    auto* diag_cmd = app.add_subcommand("diagnose", "feature-drift diagnostics");
    std::string diag_train, diag_test, diag_out_dir;
    bool diag_fcm = false;
    int diag_threads = 1;
    ConfigFlags diag_flags;
    diag_cmd->add_option("--train", diag_train, "train DCRF path")->required();
    diag_cmd->add_option("--test", diag_test, "test DCRF path")->required();
    diag_cmd->add_option("--out-dir", diag_out_dir, "directory for CSV output")
        ->required();
    diag_cmd->add_flag("--fcm", diag_fcm, "include drift-compensated distances");
    diag_cmd->add_option("--threads", diag_threads, "worker threads");
    diag_flags.attach(diag_cmd, /*training_flags=*/false);

    // oracle-check
    auto* oracle_cmd =
        app.add_subcommand("oracle-check", "Monte-Carlo check of the loss bound");
    int oracle_instances = 20;
    std::int64_t oracle_samples = 100000;
    std::uint64_t oracle_seed = 0;
    int oracle_dim = 8, oracle_classes = 6;
    oracle_cmd->add_option("--instances", oracle_instances, "random instances");
    oracle_cmd->add_option("--mc-samples", oracle_samples, "draws per instance");
    oracle_cmd->add_option("--seed", oracle_seed, "root RNG seed");
    oracle_cmd->add_option("--dim", oracle_dim, "feature dimension");
    oracle_cmd->add_option("--classes", oracle_classes, "number of classes");

    // gradcheck
    auto* grad_cmd =
        app.add_subcommand("gradcheck", "finite-difference gradient check");
    int grad_trials = 10;
    std::uint64_t grad_seed = 0;
    int grad_dim = 8, grad_classes = 6;
    grad_cmd->add_option("--trials", grad_trials, "instances to check");
    grad_cmd->add_option("--seed", grad_seed, "root RNG seed");
    grad_cmd->add_option("--dim", grad_dim, "feature dimension");
    grad_cmd->add_option("--classes", grad_classes, "number of classes");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n' << app.help();
        return kUsageError;
    }

    try {
        if (gen->parsed()) return run_gen(spec, gen_train_out, gen_test_out);
        if (stats_cmd->parsed()) return run_stats(stats_train, stats_flags, stats_out);
        if (train_cmd->parsed())
            return run_train(train_train, train_flags, train_out, train_report_out);
        if (eval_cmd->parsed())
            return run_eval(eval_model, eval_test, eval_many, eval_few, eval_threads,
                            eval_out, eval_per_class);
        if (diag_cmd->parsed())
            return run_diagnose(diag_train, diag_test, diag_flags, diag_out_dir,
                                diag_fcm, diag_threads);
        if (oracle_cmd->parsed())
            return run_oracle_check(oracle_instances, oracle_samples, oracle_seed,
                                    oracle_dim, oracle_classes);
        if (grad_cmd->parsed())
            return run_gradcheck(grad_trials, grad_seed, grad_dim, grad_classes);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCheckFailure;
    }
    return kUsageError;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace dcr::cli
