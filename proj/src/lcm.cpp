#include "dcr/lcm.hpp"

#include <cmath>
#include <stdexcept>

#include "dcr/fcm.hpp"
#include "dcr/rng.hpp"

namespace dcr {

double cross_entropy(const Eigen::VectorXd& logits, int label) {
    if (label < 0 || label >= logits.size())
        throw std::invalid_argument("cross_entropy: label out of range");
    const double peak = logits.maxCoeff();
    const double lse = peak + std::log((logits.array() - peak).exp().sum());
    return lse - logits[label];
}

Eigen::VectorXd compensate_logits(const Eigen::VectorXd& logits,
                                  const Eigen::MatrixXd& effective_weights,
                                  int label, double beta,
                                  const Eigen::VectorXd& sigma) {
    if (label < 0 || label >= logits.size())
        throw std::invalid_argument("compensate_logits: label out of range");
    if (beta == 0.0) return logits;  // exact identity, no rounding applied

    const Eigen::ArrayXd sigma2 = sigma.array().square();
    Eigen::VectorXd out = logits;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        if (k == label) continue;  // (w_t - w_t)^2 term is identically zero
        const Eigen::ArrayXd diff =
            (effective_weights.col(k) - effective_weights.col(label)).array();
        out[k] += 0.5 * beta * (diff.square() * sigma2).sum();
    }
    return out;
}

double lcm_loss(const std::vector<LogitBundle>& bundles, int label) {
    if (bundles.empty()) throw std::invalid_argument("lcm_loss: no bundles");
    double loss = 0.0;
    for (const LogitBundle& bundle : bundles)
        loss += bundle.prob * cross_entropy(bundle.compensated, label);
    return loss;
}

std::vector<LogitBundle> linear_bundles(const Eigen::VectorXd& feature, int label,
                                        const Eigen::MatrixXd& weights,
                                        const ClassStats& stats) {
    const CompensatedSet set = compensate(feature, label, stats);
    const bool tail = stats.is_tail(label);
    const double beta = tail ? stats.drift[static_cast<std::size_t>(label)]->beta : 0.0;
    const Eigen::VectorXd sigma = stats.std_devs.row(label).transpose();

    std::vector<LogitBundle> bundles;
    bundles.reserve(set.modes.size());
    for (const CompensatedMode& mode : set.modes) {
        LogitBundle bundle;
        bundle.raw = weights.transpose() * mode.feature;
        bundle.compensated = compensate_logits(bundle.raw, weights, label, beta, sigma);
        bundle.prob = mode.prob;
        bundles.push_back(std::move(bundle));
    }
    return bundles;
}

McEstimate mc_expected_loss(const Eigen::VectorXd& feature, int label,
                            const Eigen::MatrixXd& weights, const ClassStats& stats,
                            std::int64_t samples, std::uint64_t seed) {
    if (samples < 1)
        throw std::invalid_argument("mc_expected_loss: need at least one sample");

    const CompensatedSet set = compensate(feature, label, stats);
    const bool tail = stats.is_tail(label);
    const double beta = tail ? stats.drift[static_cast<std::size_t>(label)]->beta : 0.0;
    const Eigen::VectorXd noise_scale =
        std::sqrt(beta) * stats.std_devs.row(label).transpose();

    Rng rng(seed);
    const int dim = static_cast<int>(feature.size());
    Eigen::VectorXd shifted(dim);

    // Welford accumulation keeps the variance estimate stable at M = 1e5+.
    double mean = 0.0;
    double m2 = 0.0;
    for (std::int64_t n = 1; n <= samples; ++n) {
        // Mode draw by inverse CDF over the mode probabilities.
        double u = rng.uniform();
        std::size_t pick = set.modes.size() - 1;
        double cum = 0.0;
        for (std::size_t i = 0; i < set.modes.size(); ++i) {
            cum += set.modes[i].prob;
            if (u < cum) {
                pick = i;
                break;
            }
        }
        shifted = set.modes[pick].feature;
        if (beta > 0.0)
            for (int d = 0; d < dim; ++d) shifted[d] += noise_scale[d] * rng.normal();

        const double value = cross_entropy(weights.transpose() * shifted, label);
        const double delta = value - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (value - mean);
    }

    McEstimate est;
    est.mean = mean;
    est.std_error =
        samples > 1 ? std::sqrt(m2 / static_cast<double>(samples - 1) /
                                static_cast<double>(samples))
                    : 0.0;
    return est;
}

}  // namespace dcr
