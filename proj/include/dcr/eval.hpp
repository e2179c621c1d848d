#ifndef DCR_EVAL_HPP
#define DCR_EVAL_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "dcr/classifier.hpp"
#include "dcr/dataset.hpp"

namespace dcr {

/// Test-phase prediction: argmax of the balanced-branch logits, no feature
/// or logit compensation. Ties break toward the lowest class index.
int predict(const DcrModel& model, const Eigen::VectorXd& feature);

/// Top-1 accuracy report with the Many/Medium/Few protocol. Splits are
/// decided by TRAINING counts: Many > first threshold, Few < second,
/// Medium in between. Split accuracies are NaN when the split is empty.
struct EvalReport {
    double overall = 0.0;
    double many = 0.0;
    double medium = 0.0;
    double few = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::int64_t> per_class_correct;
    std::vector<std::int64_t> per_class_total;
    Eigen::MatrixX<std::int64_t> confusion;  // row = true class, col = predicted

    std::string to_json() const;
    std::string per_class_csv() const;
};

struct SplitThresholds {
    std::int64_t many = 100;  // Many: train count > many
    std::int64_t few = 20;    // Few: train count < few
};

EvalReport evaluate(const DcrModel& model, const FeatureDataset& test,
                    const std::vector<std::int64_t>& train_counts,
                    SplitThresholds thresholds = {}, int threads = 1);

/// Drift diagnostics between a training and a test set, mirroring the
/// prototype-distance, nearest-head and closest-feature views. The
/// nearest head class is assigned per feature by maximum cosine similarity
/// to the head prototypes; all distances are Euclidean.
struct DriftReport {
    // Per class, index k:
    std::vector<double> prototype_distance;       // train vs test prototype
    std::vector<double> test_to_train_closest;    // mean over test samples of the
                                                  // distance to the closest
                                                  // same-class training feature
    std::vector<double> test_to_compensated_closest;  // same, over the
                                                      // drift-compensated
                                                      // training features
                                                      // (empty if disabled)
    // Per tail class, aligned with tail_classes:
    std::vector<int> tail_classes;
    std::vector<double> tail_train_nearest_head;  // mean distance of train
                                                  // features to their nearest
                                                  // head prototype
    std::vector<double> tail_test_nearest_head;   // same for test features
    std::vector<int> tail_distinct_nearest_heads;  // distinct nearest head
                                                   // classes over test samples

    std::string per_class_csv() const;
    std::string tail_csv() const;
};

DriftReport drift_report(const FeatureDataset& train, const FeatureDataset& test,
                         const ClassStats& stats, bool with_compensated = false,
                         int threads = 1);

}  // namespace dcr

#endif  // DCR_EVAL_HPP
