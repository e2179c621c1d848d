#ifndef DCR_CLASSIFIER_HPP
#define DCR_CLASSIFIER_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "dcr/stats.hpp"

namespace dcr {

/// Linear classifier with one weight vector per head class and L proxy
/// weight vectors per tail class. Bias is fixed at zero.
class MultiProxyClassifier {
public:
    MultiProxyClassifier() = default;
    MultiProxyClassifier(int dim, int num_classes, int proxies,
                         std::vector<std::uint8_t> tail_flags);

    int dim() const { return dim_; }
    int num_classes() const { return num_classes_; }
    int proxies() const { return proxies_; }
    bool is_tail(int k) const { return tail_flags_[static_cast<std::size_t>(k)] != 0; }
    int proxy_count(int k) const { return is_tail(k) ? proxies_ : 1; }
    const std::vector<std::uint8_t>& tail_flags() const { return tail_flags_; }

    /// D x proxy_count(k) weight block of class k.
    Eigen::MatrixXd& weights(int k) { return weights_[static_cast<std::size_t>(k)]; }
    const Eigen::MatrixXd& weights(int k) const {
        return weights_[static_cast<std::size_t>(k)];
    }

    bool same_shape(const MultiProxyClassifier& other) const;

private:
    int dim_ = 0;
    int num_classes_ = 0;
    int proxies_ = 1;
    std::vector<std::uint8_t> tail_flags_;
    std::vector<Eigen::MatrixXd> weights_;
};

/// Gradient (or velocity) holder shaped like a classifier's weights.
using ProxyGrad = std::vector<Eigen::MatrixXd>;

ProxyGrad zero_like(const MultiProxyClassifier& clf);

/// Forward pass of the multi-proxy classifier on one feature.
struct MpForward {
    Eigen::VectorXd logits;                 // K
    std::vector<Eigen::VectorXd> scores;    // per class: proxy scores w_l . f
    std::vector<Eigen::VectorXd> proxy_mix;  // per class: softmax over scores
};

/// Head entry: w_k . f. Tail entry: the proxy-softmax-weighted score
/// sum_l pi_l (w_l . f), a convex combination of the proxy scores.
MpForward mp_logits(const MultiProxyClassifier& clf, const Eigen::VectorXd& feature);

/// Sample-adaptive effective matrix (D x K): head column w_k, tail column
/// sum_l pi_l w_l with pi from the given forward pass.
Eigen::MatrixXd effective_weights(const MultiProxyClassifier& clf,
                                  const MpForward& forward);
Eigen::MatrixXd effective_weights(const MultiProxyClassifier& clf,
                                  const Eigen::VectorXd& feature);

/// Proxy-wise sum of two same-shape classifiers.
MultiProxyClassifier add_classifiers(const MultiProxyClassifier& a,
                                     const MultiProxyClassifier& b);

/// Zero-mean init with per-component scale 1/sqrt(D); proxies of a class
/// are independent draws so no two start identical.
MultiProxyClassifier init_classifier(int dim, int num_classes, int proxies,
                                     const std::vector<std::uint8_t>& tail_flags,
                                     std::uint64_t seed);

/// The trainable artifact: uniform-branch classifier, residual classifier,
/// and the frozen statistics they were trained against.
struct DcrModel {
    MultiProxyClassifier uniform;
    MultiProxyClassifier residual;
    ClassStats stats;
    std::vector<std::int64_t> class_counts;  // training counts, for eval splits
};

Eigen::VectorXd uniform_logits(const DcrModel& model, const Eigen::VectorXd& feature);

/// Balanced-branch logits: uniform and residual weights are summed
/// proxy-wise first, then scored by the multi-proxy rule.
Eigen::VectorXd rbmc_logits(const DcrModel& model, const Eigen::VectorXd& feature);

/// Model checkpoint, little-endian:
///   magic "DCRM" | u32 version=1 | u32 D | u32 K | u32 L
///   | K x u8 tail flags | K x u64 class counts
///   | uniform weights | residual weights   (class-major, proxy-major,
///     each proxy D x f32)
///   | K*D x f32 prototypes | K*D x f32 std devs
///   | u32 tail entries, each: u32 class | u32 m | m x u32 neighbors
///     | (m+1) x f32 probs | f32 alpha | f32 beta
void save_model(const DcrModel& model, const std::string& path);
DcrModel load_model(const std::string& path);

}  // namespace dcr

#endif  // DCR_CLASSIFIER_HPP
