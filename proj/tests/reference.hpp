// Test-side reference machinery: a plain linear softmax-CE classifier
// trained with momentum SGD under a cosine schedule. Written independently
// of the library's training path so it can serve as an oracle for the
// degeneracy checks, and as the decoupled-retraining baseline in the
// experiment suite.
#ifndef DCR_TESTS_REFERENCE_HPP
#define DCR_TESTS_REFERENCE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dcr/dataset.hpp"

namespace reference {

// Mean cross-entropy over the batch and its gradient for logits W^T f.
inline double linear_ce_loss_grad(const Eigen::MatrixXd& weights,
                                  const dcr::Batch& batch, Eigen::MatrixXd& grad) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    grad.setZero();
    double loss = 0.0;
    for (std::int64_t i = 0; i < batch.size(); ++i) {
        const Eigen::VectorXd f = batch.features.row(i).transpose();
        const int label = static_cast<int>(batch.labels[static_cast<std::size_t>(i)]);
        Eigen::VectorXd z = weights.transpose() * f;
        const double peak = z.maxCoeff();
        Eigen::VectorXd p = (z.array() - peak).exp();
        const double denom = p.sum();
        p /= denom;
        loss += (std::log(denom) + peak - z[label]) * inv;
        p[label] -= 1.0;
        grad.noalias() += inv * f * p.transpose();
    }
    return loss;
}

enum class SamplerKind { Uniform, ClassBalanced };

// Momentum SGD with a per-iteration cosine schedule; returns the pre-update
// loss of every step.
inline std::vector<double> train_linear(Eigen::MatrixXd& weights,
                                        const dcr::FeatureDataset& train_set,
                                        SamplerKind kind, int epochs,
                                        std::int64_t batch_size, double lr_initial,
                                        double momentum, std::uint64_t sampler_seed) {
    dcr::UniformSampler uniform(train_set, batch_size, sampler_seed);
    dcr::ClassBalancedSampler balanced(train_set, batch_size, sampler_seed);

    const std::int64_t iters_per_epoch =
        (train_set.size() + batch_size - 1) / batch_size;
    const std::int64_t total = iters_per_epoch * epochs;

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
    Eigen::MatrixXd velocity = grad;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(total));

    for (std::int64_t step = 0; step < total; ++step) {
        const dcr::Batch batch =
            kind == SamplerKind::Uniform ? uniform.next() : balanced.next();
        losses.push_back(linear_ce_loss_grad(weights, batch, grad));
        const double lr = lr_initial * 0.5 *
                          (1.0 + std::cos(std::numbers::pi *
                                          static_cast<double>(step) /
                                          static_cast<double>(total)));
        velocity = momentum * velocity - lr * grad;
        weights += velocity;
    }
    return losses;
}

// Decoupled two-stage baseline: a linear classifier trained under uniform
// sampling, then retrained (warm start, fresh schedule) under
// class-balanced sampling on the same frozen features.
inline Eigen::MatrixXd crt_baseline(const dcr::FeatureDataset& train_set,
                                    int epochs, std::int64_t batch_size,
                                    double lr_initial, double momentum,
                                    std::uint64_t seed) {
    Eigen::MatrixXd weights(train_set.dim(), train_set.num_classes);
    dcr::Rng rng(dcr::derive_seed(seed, "crt.init"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(train_set.dim()));
    for (Eigen::Index k = 0; k < weights.cols(); ++k)
        for (Eigen::Index d = 0; d < weights.rows(); ++d)
            weights(d, k) = scale * rng.normal();

    train_linear(weights, train_set, SamplerKind::Uniform, epochs, batch_size,
                 lr_initial, momentum, dcr::derive_seed(seed, "crt.stage1"));
    train_linear(weights, train_set, SamplerKind::ClassBalanced, epochs, batch_size,
                 lr_initial, momentum, dcr::derive_seed(seed, "crt.stage2"));
    return weights;
}

struct SplitAccuracy {
    double overall = 0.0;
    double many = 0.0;
    double medium = 0.0;
    double few = 0.0;
};

// Top-1 accuracy of argmax W^T f with the Many/Medium/Few protocol over
// training counts (Many > 100, Few < 20).
inline SplitAccuracy linear_split_accuracy(const Eigen::MatrixXd& weights,
                                           const dcr::FeatureDataset& test,
                                           const std::vector<std::int64_t>& counts) {
    std::int64_t correct[4] = {0, 0, 0, 0};
    std::int64_t total[4] = {0, 0, 0, 0};
    for (std::int64_t i = 0; i < test.size(); ++i) {
        const Eigen::VectorXd z = weights.transpose() * test.row(i);
        int best = 0;
        for (int k = 1; k < z.size(); ++k)
            if (z[k] > z[best]) best = k;
        const auto truth = test.labels[static_cast<std::size_t>(i)];
        const std::int64_t n = counts[truth];
        const int split = n > 100 ? 1 : (n >= 20 ? 2 : 3);
        const bool hit = best == static_cast<int>(truth);
        ++total[0];
        ++total[split];
        if (hit) {
            ++correct[0];
            ++correct[split];
        }
    }
    auto rate = [&](int s) {
        return total[s] == 0 ? 0.0
                             : static_cast<double>(correct[s]) /
                                   static_cast<double>(total[s]);
    };
    return SplitAccuracy{rate(0), rate(1), rate(2), rate(3)};
}

}  // namespace reference

#endif  // DCR_TESTS_REFERENCE_HPP
