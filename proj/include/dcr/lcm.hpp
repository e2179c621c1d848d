#ifndef DCR_LCM_HPP
#define DCR_LCM_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "dcr/stats.hpp"

namespace dcr {

/// Numerically stable cross-entropy -log softmax(logits)[label].
double cross_entropy(const Eigen::VectorXd& logits, int label);

/// Adds the variance term (beta/2) * sum_d (W[d,k] - W[d,label])^2 *
/// sigma[d]^2 to every logit entry; the true-class entry gains exactly
/// zero. `sigma` is the per-dimension std of the label's class.
Eigen::VectorXd compensate_logits(const Eigen::VectorXd& logits,
                                  const Eigen::MatrixXd& effective_weights,
                                  int label, double beta,
                                  const Eigen::VectorXd& sigma);

/// Raw and compensated logits of one drift mode with its probability.
struct LogitBundle {
    Eigen::VectorXd raw;
    Eigen::VectorXd compensated;
    double prob;
};

/// Mode-probability-weighted cross-entropy over the compensated logits:
/// the closed-form upper bound on the infinite-augmentation loss.
double lcm_loss(const std::vector<LogitBundle>& bundles, int label);

/// Builds bundles for a plain linear classifier (D x K weight matrix):
/// each drift mode's logits plus the variance compensation. Head labels
/// yield a single unadjusted bundle.
std::vector<LogitBundle> linear_bundles(const Eigen::VectorXd& feature, int label,
                                        const Eigen::MatrixXd& weights,
                                        const ClassStats& stats);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Explicit-augmentation estimate of the expected cross-entropy: draws a
/// drift mode by its probability, adds Gaussian noise with per-dimension
/// std sqrt(beta)*sigma, and averages the cross-entropy of weights^T fbar
/// over `samples` draws. Validates that the closed form upper-bounds it.
McEstimate mc_expected_loss(const Eigen::VectorXd& feature, int label,
                            const Eigen::MatrixXd& weights, const ClassStats& stats,
                            std::int64_t samples, std::uint64_t seed);

}  // namespace dcr

#endif  // DCR_LCM_HPP
