#ifndef DCR_DATASET_HPP
#define DCR_DATASET_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcr/rng.hpp"

namespace dcr {

/// Row-major float matrix; matches the on-disk feature layout.
using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labeled feature vectors with per-class counts.
///
/// Immutable after construction; safe for concurrent reads. Features are
/// stored as 32-bit floats so file round-trips are bit-exact; numerical
/// code promotes rows to double on access.
struct FeatureDataset {
    FeatureMatrix features;             // N x D
    std::vector<std::uint32_t> labels;  // N, each < num_classes
    std::uint32_t num_classes = 0;
    std::vector<std::int64_t> class_counts;  // K, sums to N

    std::int64_t size() const { return features.rows(); }
    int dim() const { return static_cast<int>(features.cols()); }

    /// Row as a double vector for numerical work.
    Eigen::VectorXd row(std::int64_t i) const {
        return features.row(i).cast<double>().transpose();
    }

    /// Validates invariants (label range, counts, finite values) and
    /// fills class_counts. Throws std::invalid_argument on violation.
    static FeatureDataset create(FeatureMatrix features,
                                 std::vector<std::uint32_t> labels,
                                 std::uint32_t num_classes);
};

/// Parameters of the synthetic long-tailed generator.
struct LongTailSpec {
    int num_classes = 10;            // K
    std::int64_t samples_max = 100;  // most frequent class count
    double imbalance_factor = 10.0;  // N_max / N_min, > 1
    int dim = 8;
    double cluster_spread = 1.0;  // per-class per-dimension std
    double drift_strength = 0.0;  // in [0,1]; pulls tail TEST means toward
                                  // the nearest head mean
    std::uint64_t seed = 0;
    std::int64_t test_per_class = 50;  // balanced test set size per class
};

/// Exponentially decaying class counts N_k = round(N_max * IF^(-k/(K-1))),
/// rounded half away from zero, floored at 1.
std::vector<std::int64_t> longtail_class_counts(int num_classes,
                                                std::int64_t samples_max,
                                                double imbalance_factor);

/// Deterministic population parameters behind a LongTailSpec: the true
/// per-class train means and the (possibly drifted) test means.
struct LongTailPopulation {
    Eigen::MatrixXd train_means;  // K x D
    Eigen::MatrixXd test_means;   // K x D; equals train_means when
                                  // drift_strength is 0 or a class is head
    std::vector<std::int64_t> counts;
};

LongTailPopulation longtail_population(const LongTailSpec& spec);

struct LongTailData {
    FeatureDataset train;
    FeatureDataset test;
};

/// Draws a long-tailed train set and a balanced test set. Tail-class test
/// samples come from a Gaussian whose mean is shifted by drift_strength
/// toward the nearest head-class mean (classes with more than 100 train
/// samples count as head for generation purposes).
LongTailData generate_longtail(const LongTailSpec& spec);

/// Feature-file errors, one kind per failure mode.
class FormatError : public std::runtime_error {
public:
    enum class Kind {
        BadMagic,
        BadVersion,
        Truncated,
        TrailingBytes,
        LabelRange,
        BadHeader,
        BadRow,
        Io,
    };

    FormatError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// DCRF binary feature file, little-endian:
///   magic "DCRF" | u32 version=1 | u64 N | u32 D | u32 K
///   | N x u32 labels | N*D x f32 features (row-major)
FeatureDataset read_features(const std::string& path);
void write_features(const FeatureDataset& dataset, const std::string& path);

/// CSV importer. Header: label,f0,...,f{D-1}; one sample per row.
/// K is inferred as max(label)+1.
FeatureDataset read_features_csv(const std::string& path);

/// A minibatch: indices into a dataset plus materialized rows.
struct Batch {
    std::vector<std::int64_t> indices;
    Eigen::MatrixXd features;           // size x D, double for training
    std::vector<std::uint32_t> labels;  // size

    std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
};

Batch gather(const FeatureDataset& dataset,
             const std::vector<std::int64_t>& indices);

/// Uniform sampling: every instance has equal probability per draw. One
/// epoch is a seeded permutation of all N indices chunked into batches
/// (the final chunk may be short). Single consumer.
class UniformSampler {
public:
    UniformSampler(const FeatureDataset& dataset, std::int64_t batch_size,
                   std::uint64_t seed);

    Batch next();

    /// Number of batches per epoch = ceil(N / batch_size).
    std::int64_t batches_per_epoch() const;

private:
    const FeatureDataset* dataset_;
    std::int64_t batch_size_;
    std::vector<std::int64_t> order_;
    std::int64_t cursor_ = 0;
    Rng rng_;

    void reshuffle();
};

/// Class-balanced sampling: each draw picks a class uniformly from K, then
/// an instance uniformly within that class (with replacement). Rejects
/// datasets with an empty class at construction. Single consumer.
class ClassBalancedSampler {
public:
    ClassBalancedSampler(const FeatureDataset& dataset, std::int64_t batch_size,
                         std::uint64_t seed);

    Batch next();

private:
    const FeatureDataset* dataset_;
    std::int64_t batch_size_;
    std::vector<std::vector<std::int64_t>> per_class_;
    Rng rng_;
};

}  // namespace dcr

#endif  // DCR_DATASET_HPP
