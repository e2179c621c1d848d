#ifndef DCR_TRAINING_HPP
#define DCR_TRAINING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dcr/classifier.hpp"
#include "dcr/dataset.hpp"

namespace dcr {

/// Training hyperparameters. Defaults follow the reference recipe for the
/// large-scale setting; every field can be overridden from a config file
/// (flat key=value lines, '#' comments, keys named exactly as the fields).
struct TrainConfig {
    int epochs = 90;
    std::int64_t batch_uniform = 192;   // n1: uniform-branch batch size
    std::int64_t batch_balanced = 64;   // n2: class-balanced batch size
    double lr_initial = 0.075;
    double momentum = 0.9;
    double phi = 0.8;                   // loss mix: phi*L1 + (1-phi)*L2
    int neighbors = 2;                  // m
    double alpha0 = 0.5;
    double beta0 = 6.0;
    double tau = 8.0;
    int proxies = 2;                    // L
    std::int64_t head_threshold = 100;
    std::uint64_t seed = 0;

    StatsConfig stats() const {
        return StatsConfig{head_threshold, neighbors, alpha0, beta0, tau};
    }

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

/// Parses a key=value config file; unknown keys are errors.
TrainConfig load_train_config(const std::string& path);

/// Applies one "key=value" assignment to a config (shared by the file
/// parser and CLI overrides).
void apply_config_entry(TrainConfig& config, const std::string& key,
                        const std::string& value);

struct LossGrad {
    double loss = 0.0;           // phi*L1 + (1-phi)*L2
    double loss_uniform = 0.0;   // L1: mean over the uniform batch
    double loss_balanced = 0.0;  // L2: mean over the balanced batch
    ProxyGrad grad_uniform;
    ProxyGrad grad_residual;
};

/// Dual-branch loss and exact gradients. L1 runs the uniform batch through
/// the uniform classifier; L2 runs the balanced batch through the
/// proxy-wise sum of uniform and residual weights. Gradients differentiate
/// the full forward computation, including the proxy softmax and the
/// variance term's dependence on the effective weights.
LossGrad loss_and_grad(const DcrModel& model, const Batch& batch_uniform,
                       const Batch& batch_balanced, const TrainConfig& config);

struct TrainReport {
    std::vector<double> loss_uniform;   // per epoch
    std::vector<double> loss_balanced;  // per epoch
    std::vector<double> loss;           // per epoch
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
};

struct TrainResult {
    DcrModel model;
    TrainReport report;
};

/// Runs the dual-branch training loop: per iteration one uniform batch and
/// one class-balanced batch, SGD with classical momentum, cosine learning
/// rate decaying from lr_initial to 0 over all iterations. Deterministic
/// given the seed. Aborts with diagnostics on divergence or non-finite
/// loss.
TrainResult train(const FeatureDataset& train_set, const TrainConfig& config);

struct GradCheckOptions {
    int trials = 10;
    int dim = 8;
    int num_classes = 6;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    int trials = 0;
    bool pass = false;  // max_rel_error <= 1e-4
};

/// Compares analytic gradients against central finite differences
/// (h = 1e-4) on random small instances. Trials cycle through proxy counts
/// {1,2,4}, beta0 {0,1,6}, alpha0 {0,0.5} and phi {0.5,0.8,1.0}, with an
/// adversarial large-logit instance every fifth trial.
GradCheckReport gradcheck(const GradCheckOptions& options);

}  // namespace dcr

#endif  // DCR_TRAINING_HPP
