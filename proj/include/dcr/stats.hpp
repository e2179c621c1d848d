#ifndef DCR_STATS_HPP
#define DCR_STATS_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcr/dataset.hpp"

namespace dcr {

/// Hyperparameters that shape the per-class statistics.
struct StatsConfig {
    std::int64_t head_threshold = 100;  // class is head iff count > threshold
    int neighbors = 2;                  // m: head classes per tail class
    double alpha0 = 0.5;                // feature-drift compensation cap
    double beta0 = 6.0;                 // logit-compensation variance cap
    double tau = 8.0;                   // similarity softmax temperature
};

/// Drift data for one tail class.
struct TailDrift {
    std::vector<int> neighbors;  // similar head classes, descending similarity
    Eigen::MatrixXd offsets;     // |neighbors| x D; row i is the drift toward
                                 // neighbors[i] (the retain offset is zero and
                                 // implicit)
    Eigen::VectorXd probs;       // |neighbors|+1; aligned with neighbors, the
                                 // last entry is the retain probability
    double alpha = 0.0;
    double beta = 0.0;
};

/// Per-class statistics computed once from the frozen training features and
/// treated as constants afterwards. Immutable and safe for concurrent reads.
struct ClassStats {
    Eigen::MatrixXd prototypes;  // K x D class means
    Eigen::MatrixXd std_devs;    // K x D per-dimension population std
    std::vector<int> head_classes;  // ascending
    std::vector<int> tail_classes;  // ascending
    std::vector<std::uint8_t> tail_flags;       // size K
    std::vector<std::optional<TailDrift>> drift;  // size K; set for tail classes

    int num_classes() const { return static_cast<int>(tail_flags.size()); }
    int dim() const { return static_cast<int>(prototypes.cols()); }
    bool is_tail(int k) const { return tail_flags[static_cast<std::size_t>(k)] != 0; }
};

/// Per-class mean of the training features. Every class needs at least one
/// sample.
Eigen::MatrixXd compute_prototypes(const FeatureDataset& train);

/// Per-class per-dimension standard deviation, population formula
/// (denominator N_k). A single-sample class yields zeros.
Eigen::MatrixXd compute_std(const FeatureDataset& train);

struct HeadTailPartition {
    std::vector<int> head;  // counts > threshold
    std::vector<int> tail;  // complement
};

/// Splits classes by training count. Throws if no class exceeds the
/// threshold; an empty tail set is allowed (compensation becomes identity).
HeadTailPartition partition_head_tail(const std::vector<std::int64_t>& class_counts,
                                      std::int64_t head_threshold);

/// Cosine of the angle between two vectors; rejects zero-norm inputs.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// The min(m, |heads|) head classes most similar (cosine over prototypes)
/// to class t, ordered by descending similarity; ties break toward the
/// lower class index.
std::vector<int> select_neighbors(const Eigen::MatrixXd& prototypes,
                                  const std::vector<int>& head_classes, int t,
                                  int m);

/// Linear rarity ramp shared by the alpha and beta schedules: cap at
/// count_min, zero at count_max. Degenerate count_max == count_min returns
/// the cap (all tail classes equally rare).
double rarity_schedule(std::int64_t count, std::int64_t count_max,
                       std::int64_t count_min, double cap);

/// Drift offsets alpha_t * (c_j - c_t) for each selected neighbor.
Eigen::MatrixXd drift_offsets(const Eigen::MatrixXd& prototypes, int t,
                              const std::vector<int>& neighbors, double alpha);

/// Softmax over tau-scaled similarities of the selected neighbors plus the
/// self term (similarity 1). Returned aligned with `neighbors`, retain
/// probability last; sums to 1.
Eigen::VectorXd drift_probabilities(const Eigen::MatrixXd& prototypes, int t,
                                    const std::vector<int>& neighbors, double tau);

/// Builds the full ClassStats from a training set.
ClassStats build_class_stats(const FeatureDataset& train, const StatsConfig& config);

/// Human-readable per-class report (one class per line) for the stats CLI.
std::string format_stats_report(const ClassStats& stats,
                                const std::vector<std::int64_t>& class_counts);

}  // namespace dcr

#endif  // DCR_STATS_HPP
