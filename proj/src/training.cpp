#include "dcr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dcr/fcm.hpp"
#include "dcr/rng.hpp"

namespace dcr {

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (batch_uniform < 1 || batch_balanced < 1)
        throw std::invalid_argument("config: batch sizes must be >= 1");
    if (lr_initial <= 0.0) throw std::invalid_argument("config: lr_initial must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("config: momentum must lie in [0,1)");
    if (phi < 0.0 || phi > 1.0)
        throw std::invalid_argument("config: phi must lie in [0,1]");
    if (neighbors < 1) throw std::invalid_argument("config: neighbors must be >= 1");
    if (alpha0 < 0.0 || beta0 < 0.0)
        throw std::invalid_argument("config: alpha0 and beta0 must be >= 0");
    if (tau <= 0.0) throw std::invalid_argument("config: tau must be > 0");
    if (proxies < 1) throw std::invalid_argument("config: proxies must be >= 1");
    if (head_threshold < 0)
        throw std::invalid_argument("config: head_threshold must be >= 0");
}

void apply_config_entry(TrainConfig& config, const std::string& key,
                        const std::string& value) {
    try {
        if (key == "epochs") config.epochs = std::stoi(value);
        else if (key == "batch_uniform") config.batch_uniform = std::stoll(value);
        else if (key == "batch_balanced") config.batch_balanced = std::stoll(value);
        else if (key == "lr_initial") config.lr_initial = std::stod(value);
        else if (key == "momentum") config.momentum = std::stod(value);
        else if (key == "phi") config.phi = std::stod(value);
        else if (key == "neighbors") config.neighbors = std::stoi(value);
        else if (key == "alpha0") config.alpha0 = std::stod(value);
        else if (key == "beta0") config.beta0 = std::stod(value);
        else if (key == "tau") config.tau = std::stod(value);
        else if (key == "proxies") config.proxies = std::stoi(value);
        else if (key == "head_threshold") config.head_threshold = std::stoll(value);
        else if (key == "seed") config.seed = std::stoull(value);
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value for '" + key + "': " + value);
    }
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open: " + path);

    TrainConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto strip = [](std::string& s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        strip(key);
        strip(value);
        apply_config_entry(config, key, value);
    }
    return config;
}

namespace {

// Routes an upstream gradient G on the effective weight column of class c
// into the class's proxy weights. The effective column is
// sum_l pi_l w_l with pi the proxy softmax at fb, so
//   d(G . w_hat)/d w_l = pi_l * (G + (G.w_l - G.w_hat) * fb).
void push_effective_gradient(const MultiProxyClassifier& clf, const MpForward& fw,
                             int c, const Eigen::VectorXd& G,
                             const Eigen::VectorXd& fb, ProxyGrad& grad) {
    Eigen::MatrixXd& gc = grad[static_cast<std::size_t>(c)];
    if (!clf.is_tail(c)) {
        gc.col(0) += G;
        return;
    }
    const Eigen::VectorXd& pi = fw.proxy_mix[static_cast<std::size_t>(c)];
    const Eigen::MatrixXd& w = clf.weights(c);
    const Eigen::VectorXd what = w * pi;
    const double g_dot_what = G.dot(what);
    for (Eigen::Index l = 0; l < pi.size(); ++l) {
        const double proj = G.dot(w.col(l)) - g_dot_what;
        gc.col(l) += pi[l] * (G + proj * fb);
    }
}

// Loss of one sample through one branch classifier, with d(loss)/d(weights)
// scaled by `weight` accumulated into grad.
double sample_loss_grad(const MultiProxyClassifier& clf, const ClassStats& stats,
                        const Eigen::VectorXd& feature, int label, double weight,
                        ProxyGrad& grad) {
    const CompensatedSet set = compensate(feature, label, stats);
    const bool tail = stats.is_tail(label);
    const double beta =
        tail ? stats.drift[static_cast<std::size_t>(label)]->beta : 0.0;
    Eigen::ArrayXd sigma2;
    if (beta > 0.0)
        sigma2 = stats.std_devs.row(label).transpose().array().square();

    const int K = clf.num_classes();
    double loss = 0.0;

    for (const CompensatedMode& mode : set.modes) {
        const Eigen::VectorXd& fb = mode.feature;
        const MpForward fw = mp_logits(clf, fb);

        Eigen::VectorXd zbar = fw.logits;
        Eigen::MatrixXd quad_grad;  // column k: beta*(w_hat_k - w_hat_t).*sigma2
        if (beta > 0.0) {
            const Eigen::MatrixXd eff = effective_weights(clf, fw);
            quad_grad.resize(clf.dim(), K);
            for (int k = 0; k < K; ++k) {
                if (k == label) {
                    quad_grad.col(k).setZero();
                    continue;
                }
                const Eigen::ArrayXd diff = (eff.col(k) - eff.col(label)).array();
                quad_grad.col(k) = (beta * diff * sigma2).matrix();
                zbar[k] += 0.5 * (quad_grad.col(k).array() * diff).sum();
            }
        }

        const double peak = zbar.maxCoeff();
        Eigen::VectorXd p = (zbar.array() - peak).exp();
        const double denom = p.sum();
        p /= denom;
        loss += mode.prob * (std::log(denom) + peak - zbar[label]);

        Eigen::VectorXd g = (weight * mode.prob) * p;
        g[label] -= weight * mode.prob;

        // Score path: head entries are linear, tail entries go through the
        // proxy softmax; dz/da_l = pi_l * (1 + a_l - z).
        for (int k = 0; k < K; ++k) {
            Eigen::MatrixXd& gk = grad[static_cast<std::size_t>(k)];
            if (!clf.is_tail(k)) {
                gk.col(0) += g[k] * fb;
            } else {
                const Eigen::VectorXd& a = fw.scores[static_cast<std::size_t>(k)];
                const Eigen::VectorXd& pi = fw.proxy_mix[static_cast<std::size_t>(k)];
                const double zk = fw.logits[k];
                for (Eigen::Index l = 0; l < a.size(); ++l)
                    gk.col(l) += (g[k] * pi[l] * (1.0 + a[l] - zk)) * fb;
            }
        }

        // Variance path: each non-true entry depends on its own effective
        // column and on the true class's.
        if (beta > 0.0) {
            Eigen::VectorXd to_label = Eigen::VectorXd::Zero(clf.dim());
            for (int k = 0; k < K; ++k) {
                if (k == label) continue;
                const Eigen::VectorXd gk = g[k] * quad_grad.col(k);
                to_label -= gk;
                push_effective_gradient(clf, fw, k, gk, fb, grad);
            }
            push_effective_gradient(clf, fw, label, to_label, fb, grad);
        }
    }
    return loss;
}

double batch_loss_grad(const MultiProxyClassifier& clf, const ClassStats& stats,
                       const Batch& batch, ProxyGrad& grad) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::int64_t i = 0; i < batch.size(); ++i)
        loss += sample_loss_grad(clf, stats, batch.features.row(i).transpose(),
                                 static_cast<int>(batch.labels[static_cast<std::size_t>(i)]),
                                 inv, grad);
    return loss * inv;
}

std::string divergence_diagnostics(const DcrModel& model, const Batch& batch,
                                   double loss) {
    double max_weight = 0.0;
    for (int k = 0; k < model.uniform.num_classes(); ++k) {
        max_weight = std::max(max_weight, model.uniform.weights(k).cwiseAbs().maxCoeff());
        max_weight = std::max(max_weight, model.residual.weights(k).cwiseAbs().maxCoeff());
    }
    double logit_min = 0.0, logit_max = 0.0;
    for (std::int64_t i = 0; i < std::min<std::int64_t>(batch.size(), 8); ++i) {
        const Eigen::VectorXd z =
            rbmc_logits(model, batch.features.row(i).transpose());
        logit_min = std::min(logit_min, z.minCoeff());
        logit_max = std::max(logit_max, z.maxCoeff());
    }
    std::ostringstream os;
    os << "loss=" << loss << " max|w|=" << max_weight << " logits=[" << logit_min
       << ", " << logit_max << "]";
    return os.str();
}

}  // namespace

LossGrad loss_and_grad(const DcrModel& model, const Batch& batch_uniform,
                       const Batch& batch_balanced, const TrainConfig& config) {
    if (batch_uniform.size() == 0 || batch_balanced.size() == 0)
        throw std::invalid_argument("loss_and_grad: empty batch");

    LossGrad out;
    ProxyGrad grad_u1 = zero_like(model.uniform);
    out.loss_uniform =
        batch_loss_grad(model.uniform, model.stats, batch_uniform, grad_u1);

    const MultiProxyClassifier summed =
        add_classifiers(model.uniform, model.residual);
    ProxyGrad grad_v2 = zero_like(summed);
    out.loss_balanced = batch_loss_grad(summed, model.stats, batch_balanced, grad_v2);

    out.loss = config.phi * out.loss_uniform + (1.0 - config.phi) * out.loss_balanced;

    out.grad_uniform = zero_like(model.uniform);
    out.grad_residual = zero_like(model.residual);
    for (int k = 0; k < model.uniform.num_classes(); ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        out.grad_uniform[ks] =
            config.phi * grad_u1[ks] + (1.0 - config.phi) * grad_v2[ks];
        out.grad_residual[ks] = (1.0 - config.phi) * grad_v2[ks];
    }
    if (!std::isfinite(out.loss))
        throw std::runtime_error("loss_and_grad: non-finite loss; " +
                                 divergence_diagnostics(model, batch_balanced,
                                                        out.loss));
    return out;
}

TrainResult train(const FeatureDataset& train_set, const TrainConfig& config) {
    config.validate();

    TrainResult result;
    result.model.stats = build_class_stats(train_set, config.stats());
    result.model.class_counts = train_set.class_counts;
    result.model.uniform = init_classifier(
        train_set.dim(), static_cast<int>(train_set.num_classes), config.proxies,
        result.model.stats.tail_flags, derive_seed(config.seed, "init.uniform"));
    result.model.residual = init_classifier(
        train_set.dim(), static_cast<int>(train_set.num_classes), config.proxies,
        result.model.stats.tail_flags, derive_seed(config.seed, "init.residual"));
    result.report.seed = config.seed;

    if (config.epochs == 0) return result;

    UniformSampler uniform_sampler(train_set, config.batch_uniform,
                                   derive_seed(config.seed, "sampler.uniform"));
    ClassBalancedSampler balanced_sampler(train_set, config.batch_balanced,
                                          derive_seed(config.seed, "sampler.balanced"));

    const std::int64_t iters_per_epoch = uniform_sampler.batches_per_epoch();
    const std::int64_t total_iters = iters_per_epoch * config.epochs;
    const double divergence_limit =
        1e3 * std::log(static_cast<double>(train_set.num_classes));

    ProxyGrad vel_uniform = zero_like(result.model.uniform);
    ProxyGrad vel_residual = zero_like(result.model.residual);

    const auto t0 = std::chrono::steady_clock::now();
    std::int64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double sum1 = 0.0, sum2 = 0.0, sum = 0.0;
        for (std::int64_t it = 0; it < iters_per_epoch; ++it, ++step) {
            const Batch bu = uniform_sampler.next();
            const Batch bb = balanced_sampler.next();
            const LossGrad lg = loss_and_grad(result.model, bu, bb, config);

            if (lg.loss > divergence_limit)
                throw std::runtime_error(
                    "train: divergence at step " + std::to_string(step) + "; " +
                    divergence_diagnostics(result.model, bb, lg.loss));

            const double lr =
                config.lr_initial * 0.5 *
                (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                static_cast<double>(total_iters)));
            for (int k = 0; k < result.model.uniform.num_classes(); ++k) {
                const std::size_t ks = static_cast<std::size_t>(k);
                vel_uniform[ks] = config.momentum * vel_uniform[ks] -
                                  lr * lg.grad_uniform[ks];
                result.model.uniform.weights(k) += vel_uniform[ks];
                vel_residual[ks] = config.momentum * vel_residual[ks] -
                                   lr * lg.grad_residual[ks];
                result.model.residual.weights(k) += vel_residual[ks];
            }

            sum1 += lg.loss_uniform;
            sum2 += lg.loss_balanced;
            sum += lg.loss;
        }
        const double inv = 1.0 / static_cast<double>(iters_per_epoch);
        result.report.loss_uniform.push_back(sum1 * inv);
        result.report.loss_balanced.push_back(sum2 * inv);
        result.report.loss.push_back(sum * inv);
    }
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

namespace {

// A small imbalanced dataset with both head and tail classes for gradient
// checking. Counts are fixed; features are standard normal.
FeatureDataset gradcheck_dataset(int dim, int num_classes, Rng& rng) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes));
    const std::int64_t base[] = {40, 25, 8, 5, 3, 2};
    for (int k = 0; k < num_classes; ++k)
        counts[static_cast<std::size_t>(k)] = base[k % 6];

    std::int64_t n = 0;
    for (std::int64_t c : counts) n += c;
    FeatureMatrix features(n, dim);
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
    std::int64_t row = 0;
    for (int k = 0; k < num_classes; ++k)
        for (std::int64_t i = 0; i < counts[static_cast<std::size_t>(k)]; ++i, ++row) {
            labels[static_cast<std::size_t>(row)] = static_cast<std::uint32_t>(k);
            for (int d = 0; d < dim; ++d)
                features(row, d) = static_cast<float>(rng.normal());
        }
    return FeatureDataset::create(std::move(features), std::move(labels),
                                  static_cast<std::uint32_t>(num_classes));
}

std::vector<std::int64_t> random_batch_indices(const FeatureDataset& ds,
                                               std::int64_t size, Rng& rng) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(size));
    for (auto& i : idx)
        i = static_cast<std::int64_t>(rng.uniform_index(
            static_cast<std::uint64_t>(ds.size())));
    // Force at least one tail-class sample so every gradient path runs.
    idx.back() = ds.size() - 1;
    return idx;
}

double total_loss(const DcrModel& model, const Batch& bu, const Batch& bb,
                  const TrainConfig& cfg) {
    return loss_and_grad(model, bu, bb, cfg).loss;
}

}  // namespace

GradCheckReport gradcheck(const GradCheckOptions& options) {
    if (options.trials < 1)
        throw std::invalid_argument("gradcheck: trials must be >= 1");

    const int proxy_grid[] = {1, 2, 4};
    const double beta_grid[] = {0.0, 1.0, 6.0};
    const double alpha_grid[] = {0.0, 0.5};
    const double phi_grid[] = {0.5, 0.8, 1.0};
    const double h = 1e-4;

    GradCheckReport report;
    report.trials = options.trials;

    for (int trial = 0; trial < options.trials; ++trial) {
        Rng rng(derive_seed(options.seed, "gradcheck." + std::to_string(trial)));

        TrainConfig cfg;
        cfg.proxies = proxy_grid[trial % 3];
        cfg.beta0 = beta_grid[(trial / 3) % 3];
        cfg.phi = phi_grid[(trial / 9) % 3];
        cfg.alpha0 = alpha_grid[trial % 2];
        cfg.tau = 8.0;
        cfg.neighbors = 2;
        cfg.head_threshold = 10;
        cfg.seed = rng.next_u64();

        const FeatureDataset ds = gradcheck_dataset(options.dim, options.num_classes, rng);

        DcrModel model;
        model.stats = build_class_stats(ds, cfg.stats());
        model.class_counts = ds.class_counts;
        model.uniform = init_classifier(options.dim, options.num_classes, cfg.proxies,
                                        model.stats.tail_flags, rng.next_u64());
        model.residual = init_classifier(options.dim, options.num_classes, cfg.proxies,
                                         model.stats.tail_flags, rng.next_u64());
        if (trial % 5 == 4) {
            // Adversarial large logits: stress the log-sum-exp stabilization.
            for (int k = 0; k < options.num_classes; ++k) {
                model.uniform.weights(k) *= 50.0;
                model.residual.weights(k) *= 50.0;
            }
        }

        const Batch bu = gather(ds, random_batch_indices(ds, 6, rng));
        const Batch bb = gather(ds, random_batch_indices(ds, 4, rng));
        const LossGrad lg = loss_and_grad(model, bu, bb, cfg);

        for (int side = 0; side < 2; ++side) {
            const ProxyGrad& analytic = side == 0 ? lg.grad_uniform : lg.grad_residual;
            for (int k = 0; k < options.num_classes; ++k) {
                MultiProxyClassifier& target =
                    side == 0 ? model.uniform : model.residual;
                Eigen::MatrixXd& w = target.weights(k);
                for (Eigen::Index l = 0; l < w.cols(); ++l) {
                    for (Eigen::Index d = 0; d < w.rows(); ++d) {
                        const double saved = w(d, l);
                        w(d, l) = saved + h;
                        const double up = total_loss(model, bu, bb, cfg);
                        w(d, l) = saved - h;
                        const double down = total_loss(model, bu, bb, cfg);
                        w(d, l) = saved;
                        const double fd = (up - down) / (2.0 * h);
                        const double a = analytic[static_cast<std::size_t>(k)](d, l);
                        const double scale = std::max({std::abs(a), std::abs(fd), 1e-3});
                        report.max_rel_error =
                            std::max(report.max_rel_error, std::abs(a - fd) / scale);
                    }
                }
            }
        }
    }
    report.pass = report.max_rel_error <= 1e-4;
    return report;
}

}  // namespace dcr
