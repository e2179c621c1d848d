#include "dcr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dcr {

Eigen::MatrixXd compute_prototypes(const FeatureDataset& train) {
    const int K = static_cast<int>(train.num_classes);
    const int D = train.dim();
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, D);

    for (std::int64_t i = 0; i < train.size(); ++i)
        sums.row(train.labels[static_cast<std::size_t>(i)]) +=
            train.features.row(i).cast<double>();

    for (int k = 0; k < K; ++k) {
        if (train.class_counts[static_cast<std::size_t>(k)] == 0)
            throw std::invalid_argument("prototypes: class " + std::to_string(k) +
                                        " has no training samples");
        sums.row(k) /= static_cast<double>(train.class_counts[static_cast<std::size_t>(k)]);
    }
    return sums;
}

Eigen::MatrixXd compute_std(const FeatureDataset& train) {
    const int K = static_cast<int>(train.num_classes);
    const int D = train.dim();
    const Eigen::MatrixXd means = compute_prototypes(train);

    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(K, D);
    for (std::int64_t i = 0; i < train.size(); ++i) {
        const int k = static_cast<int>(train.labels[static_cast<std::size_t>(i)]);
        Eigen::ArrayXd diff =
            train.features.row(i).cast<double>().array() - means.row(k).array();
        sq.row(k) += (diff * diff).matrix();
    }
    for (int k = 0; k < K; ++k)
        sq.row(k) /= static_cast<double>(train.class_counts[static_cast<std::size_t>(k)]);
    return sq.array().sqrt();
}

HeadTailPartition partition_head_tail(const std::vector<std::int64_t>& class_counts,
                                      std::int64_t head_threshold) {
    if (head_threshold < 0)
        throw std::invalid_argument("partition: head_threshold must be >= 0");
    HeadTailPartition part;
    for (std::size_t k = 0; k < class_counts.size(); ++k) {
        if (class_counts[k] > head_threshold)
            part.head.push_back(static_cast<int>(k));
        else
            part.tail.push_back(static_cast<int>(k));
    }
    if (part.head.empty())
        throw std::invalid_argument(
            "partition: no head classes (every count <= threshold); feature "
            "compensation needs at least one head class");
    return part;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm vector");
    return a.dot(b) / (na * nb);
}

std::vector<int> select_neighbors(const Eigen::MatrixXd& prototypes,
                                  const std::vector<int>& head_classes, int t,
                                  int m) {
    if (head_classes.empty())
        throw std::invalid_argument("select_neighbors: no head classes");
    if (m < 1) throw std::invalid_argument("select_neighbors: m must be >= 1");

    const Eigen::VectorXd ct = prototypes.row(t).transpose();
    std::vector<std::pair<double, int>> scored;
    scored.reserve(head_classes.size());
    for (int j : head_classes)
        scored.emplace_back(cosine_similarity(ct, prototypes.row(j).transpose()), j);

    // Descending similarity, ties toward the lower class index.
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(m),
                                                   scored.size());
    std::vector<int> out(take);
    for (std::size_t i = 0; i < take; ++i) out[i] = scored[i].second;
    return out;
}

double rarity_schedule(std::int64_t count, std::int64_t count_max,
                       std::int64_t count_min, double cap) {
    if (count_max == count_min) return cap;
    if (count_max < count_min || count < count_min || count > count_max)
        throw std::invalid_argument("rarity_schedule: count outside [min, max]");
    return cap * static_cast<double>(count_max - count) /
           static_cast<double>(count_max - count_min);
}

Eigen::MatrixXd drift_offsets(const Eigen::MatrixXd& prototypes, int t,
                              const std::vector<int>& neighbors, double alpha) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(neighbors.size()), prototypes.cols());
    for (std::size_t i = 0; i < neighbors.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) =
            alpha * (prototypes.row(neighbors[i]) - prototypes.row(t));
    return out;
}

Eigen::VectorXd drift_probabilities(const Eigen::MatrixXd& prototypes, int t,
                                    const std::vector<int>& neighbors, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("drift_probabilities: tau must be > 0");
    const Eigen::VectorXd ct = prototypes.row(t).transpose();
    Eigen::VectorXd scores(static_cast<Eigen::Index>(neighbors.size()) + 1);
    for (std::size_t i = 0; i < neighbors.size(); ++i)
        scores[static_cast<Eigen::Index>(i)] =
            tau * cosine_similarity(ct, prototypes.row(neighbors[i]).transpose());
    scores[scores.size() - 1] = tau;  // self similarity is exactly 1

    const double peak = scores.maxCoeff();
    Eigen::VectorXd exps = (scores.array() - peak).exp();
    return exps / exps.sum();
}

ClassStats build_class_stats(const FeatureDataset& train, const StatsConfig& config) {
    if (config.neighbors < 1)
        throw std::invalid_argument("stats: neighbors must be >= 1");
    if (config.alpha0 < 0.0 || config.beta0 < 0.0)
        throw std::invalid_argument("stats: alpha0 and beta0 must be >= 0");

    ClassStats stats;
    stats.prototypes = compute_prototypes(train);
    stats.std_devs = compute_std(train);

    HeadTailPartition part = partition_head_tail(train.class_counts, config.head_threshold);
    stats.head_classes = std::move(part.head);
    stats.tail_classes = std::move(part.tail);
    stats.tail_flags.assign(train.num_classes, 0);
    for (int t : stats.tail_classes) stats.tail_flags[static_cast<std::size_t>(t)] = 1;
    stats.drift.resize(train.num_classes);

    if (stats.tail_classes.empty()) return stats;  // compensation disabled

    // Schedule range is taken over the tail set only.
    std::int64_t tail_max = 0;
    std::int64_t tail_min = train.size();
    for (int t : stats.tail_classes) {
        tail_max = std::max(tail_max, train.class_counts[static_cast<std::size_t>(t)]);
        tail_min = std::min(tail_min, train.class_counts[static_cast<std::size_t>(t)]);
    }

    for (int t : stats.tail_classes) {
        TailDrift entry;
        entry.neighbors =
            select_neighbors(stats.prototypes, stats.head_classes, t, config.neighbors);
        const std::int64_t count = train.class_counts[static_cast<std::size_t>(t)];
        entry.alpha = rarity_schedule(count, tail_max, tail_min, config.alpha0);
        entry.beta = rarity_schedule(count, tail_max, tail_min, config.beta0);
        entry.offsets = drift_offsets(stats.prototypes, t, entry.neighbors, entry.alpha);
        entry.probs = drift_probabilities(stats.prototypes, t, entry.neighbors, config.tau);
        stats.drift[static_cast<std::size_t>(t)] = std::move(entry);
    }
    return stats;
}

std::string format_stats_report(const ClassStats& stats,
                                const std::vector<std::int64_t>& class_counts) {
    std::ostringstream os;
    os << "class count role proto_norm mean_std neighbors probs alpha beta\n";
    for (int k = 0; k < stats.num_classes(); ++k) {
        os << k << ' ' << class_counts[static_cast<std::size_t>(k)] << ' '
           << (stats.is_tail(k) ? "tail" : "head") << ' '
           << stats.prototypes.row(k).norm() << ' ' << stats.std_devs.row(k).mean();
        if (stats.is_tail(k) && stats.drift[static_cast<std::size_t>(k)]) {
            const TailDrift& entry = *stats.drift[static_cast<std::size_t>(k)];
            os << " [";
            for (std::size_t i = 0; i < entry.neighbors.size(); ++i)
                os << (i ? "," : "") << entry.neighbors[i];
            os << "] [";
            for (Eigen::Index i = 0; i < entry.probs.size(); ++i)
                os << (i ? "," : "") << entry.probs[i];
            os << "] " << entry.alpha << ' ' << entry.beta;
        } else {
            os << " - - - -";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace dcr
