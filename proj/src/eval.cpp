#include "dcr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dcr/fcm.hpp"

namespace dcr {

namespace {

// Fixed-chunk parallel map: results land in preallocated slots, so the
// outcome is independent of scheduling.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n < 2 * threads) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const std::int64_t begin = t * chunk;
        const std::int64_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] {
            for (std::int64_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

int predict(const DcrModel& model, const Eigen::VectorXd& feature) {
    return argmax_lowest(rbmc_logits(model, feature));
}

EvalReport evaluate(const DcrModel& model, const FeatureDataset& test,
                    const std::vector<std::int64_t>& train_counts,
                    SplitThresholds thresholds, int threads) {
    const std::uint32_t K = test.num_classes;
    if (train_counts.size() < K)
        throw std::invalid_argument(
            "evaluate: test contains classes absent from the training counts");
    for (std::int64_t i = 0; i < test.size(); ++i)
        if (train_counts[test.labels[static_cast<std::size_t>(i)]] == 0)
            throw std::invalid_argument(
                "evaluate: test class " +
                std::to_string(test.labels[static_cast<std::size_t>(i)]) +
                " has no training samples");

    // The summed classifier is fixed during evaluation; build it once.
    const MultiProxyClassifier balanced =
        add_classifiers(model.uniform, model.residual);

    std::vector<int> predicted(static_cast<std::size_t>(test.size()));
    parallel_for(test.size(), threads, [&](std::int64_t i) {
        predicted[static_cast<std::size_t>(i)] =
            argmax_lowest(mp_logits(balanced, test.row(i)).logits);
    });

    EvalReport report;
    report.per_class_correct.assign(K, 0);
    report.per_class_total.assign(K, 0);
    report.confusion = Eigen::MatrixX<std::int64_t>::Zero(K, K);
    for (std::int64_t i = 0; i < test.size(); ++i) {
        const auto truth = test.labels[static_cast<std::size_t>(i)];
        const int guess = predicted[static_cast<std::size_t>(i)];
        ++report.per_class_total[truth];
        report.confusion(truth, guess) += 1;
        if (static_cast<int>(truth) == guess) ++report.per_class_correct[truth];
    }

    report.per_class_accuracy.resize(K);
    for (std::uint32_t k = 0; k < K; ++k)
        report.per_class_accuracy[k] =
            report.per_class_total[k] == 0
                ? std::numeric_limits<double>::quiet_NaN()
                : static_cast<double>(report.per_class_correct[k]) /
                      static_cast<double>(report.per_class_total[k]);

    auto split_accuracy = [&](auto member_of) {
        std::int64_t correct = 0, total = 0;
        for (std::uint32_t k = 0; k < K; ++k) {
            if (!member_of(train_counts[k])) continue;
            correct += report.per_class_correct[k];
            total += report.per_class_total[k];
        }
        return total == 0 ? std::numeric_limits<double>::quiet_NaN()
                          : static_cast<double>(correct) / static_cast<double>(total);
    };
    report.overall = split_accuracy([](std::int64_t) { return true; });
    report.many = split_accuracy(
        [&](std::int64_t n) { return n > thresholds.many; });
    report.medium = split_accuracy([&](std::int64_t n) {
        return n <= thresholds.many && n >= thresholds.few;
    });
    report.few = split_accuracy(
        [&](std::int64_t n) { return n < thresholds.few; });
    return report;
}

namespace {

std::string number_or_null(double v) {
    if (!std::isfinite(v)) return "null";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os << "{\n"
       << "  \"overall\": " << number_or_null(overall) << ",\n"
       << "  \"many\": " << number_or_null(many) << ",\n"
       << "  \"medium\": " << number_or_null(medium) << ",\n"
       << "  \"few\": " << number_or_null(few) << ",\n"
       << "  \"per_class\": [";
    for (std::size_t k = 0; k < per_class_accuracy.size(); ++k)
        os << (k ? ", " : "") << number_or_null(per_class_accuracy[k]);
    os << "]\n}\n";
    return os.str();
}

std::string EvalReport::per_class_csv() const {
    std::ostringstream os;
    os << "class,total,correct,accuracy\n";
    for (std::size_t k = 0; k < per_class_accuracy.size(); ++k)
        os << k << ',' << per_class_total[k] << ',' << per_class_correct[k] << ','
           << per_class_accuracy[k] << '\n';
    return os.str();
}

namespace {

// Nearest head prototype by cosine similarity; ties toward the lower head
// class. Zero-norm features fall back to the first head class.
int nearest_head(const Eigen::VectorXd& feature, const Eigen::MatrixXd& prototypes,
                 const std::vector<int>& head_classes) {
    const double fnorm = feature.norm();
    int best = head_classes.front();
    double best_sim = -std::numeric_limits<double>::infinity();
    for (int h : head_classes) {
        const Eigen::VectorXd proto = prototypes.row(h).transpose();
        const double denom = fnorm * proto.norm();
        const double sim = denom == 0.0 ? 0.0 : feature.dot(proto) / denom;
        if (sim > best_sim) {
            best_sim = sim;
            best = h;
        }
    }
    return best;
}

std::vector<std::vector<std::int64_t>> rows_by_class(const FeatureDataset& ds) {
    std::vector<std::vector<std::int64_t>> out(ds.num_classes);
    for (std::int64_t i = 0; i < ds.size(); ++i)
        out[ds.labels[static_cast<std::size_t>(i)]].push_back(i);
    return out;
}

}  // namespace

DriftReport drift_report(const FeatureDataset& train, const FeatureDataset& test,
                         const ClassStats& stats, bool with_compensated,
                         int threads) {
    if (train.dim() != test.dim() || train.num_classes != test.num_classes)
        throw std::invalid_argument("drift_report: train/test shape mismatch");
    const int K = static_cast<int>(train.num_classes);

    DriftReport report;

    const Eigen::MatrixXd train_protos = stats.prototypes;
    const Eigen::MatrixXd test_protos = compute_prototypes(test);
    report.prototype_distance.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        report.prototype_distance[static_cast<std::size_t>(k)] =
            (train_protos.row(k) - test_protos.row(k)).norm();

    const auto train_rows = rows_by_class(train);
    const auto test_rows = rows_by_class(test);

    // Closest-feature distances, per test sample, then averaged per class.
    report.test_to_train_closest.assign(static_cast<std::size_t>(K), 0.0);
    if (with_compensated)
        report.test_to_compensated_closest.assign(static_cast<std::size_t>(K), 0.0);

    std::vector<double> original_min(static_cast<std::size_t>(test.size()), 0.0);
    std::vector<double> compensated_min(static_cast<std::size_t>(test.size()), 0.0);
    parallel_for(test.size(), threads, [&](std::int64_t i) {
        const Eigen::VectorXd f = test.row(i);
        const int k = static_cast<int>(test.labels[static_cast<std::size_t>(i)]);
        double best = std::numeric_limits<double>::infinity();
        double best_comp = std::numeric_limits<double>::infinity();
        for (std::int64_t r : train_rows[static_cast<std::size_t>(k)]) {
            const Eigen::VectorXd g = train.row(r);
            best = std::min(best, (f - g).norm());
            if (with_compensated) {
                const CompensatedSet set = compensate(g, k, stats);
                for (const CompensatedMode& mode : set.modes)
                    best_comp = std::min(best_comp, (f - mode.feature).norm());
            }
        }
        original_min[static_cast<std::size_t>(i)] = best;
        compensated_min[static_cast<std::size_t>(i)] = best_comp;
    });
    for (int k = 0; k < K; ++k) {
        const auto& rows = test_rows[static_cast<std::size_t>(k)];
        if (rows.empty()) continue;
        double sum = 0.0, sum_comp = 0.0;
        for (std::int64_t i : rows) {
            sum += original_min[static_cast<std::size_t>(i)];
            sum_comp += compensated_min[static_cast<std::size_t>(i)];
        }
        report.test_to_train_closest[static_cast<std::size_t>(k)] =
            sum / static_cast<double>(rows.size());
        if (with_compensated)
            report.test_to_compensated_closest[static_cast<std::size_t>(k)] =
                sum_comp / static_cast<double>(rows.size());
    }

    // Tail-class views against the nearest head prototype.
    report.tail_classes = stats.tail_classes;
    for (int t : stats.tail_classes) {
        auto mean_nearest_head_distance = [&](const FeatureDataset& ds,
                                              const std::vector<std::int64_t>& rows,
                                              std::set<int>* distinct) {
            if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
            double sum = 0.0;
            for (std::int64_t i : rows) {
                const Eigen::VectorXd f = ds.row(i);
                const int h = nearest_head(f, train_protos, stats.head_classes);
                if (distinct) distinct->insert(h);
                sum += (f - train_protos.row(h).transpose()).norm();
            }
            return sum / static_cast<double>(rows.size());
        };
        report.tail_train_nearest_head.push_back(mean_nearest_head_distance(
            train, train_rows[static_cast<std::size_t>(t)], nullptr));
        std::set<int> distinct;
        report.tail_test_nearest_head.push_back(mean_nearest_head_distance(
            test, test_rows[static_cast<std::size_t>(t)], &distinct));
        report.tail_distinct_nearest_heads.push_back(static_cast<int>(distinct.size()));
    }
    return report;
}

std::string DriftReport::per_class_csv() const {
    std::ostringstream os;
    os << "class,prototype_distance,test_to_train_closest";
    const bool with_comp = !test_to_compensated_closest.empty();
    if (with_comp) os << ",test_to_compensated_closest";
    os << '\n';
    for (std::size_t k = 0; k < prototype_distance.size(); ++k) {
        os << k << ',' << prototype_distance[k] << ',' << test_to_train_closest[k];
        if (with_comp) os << ',' << test_to_compensated_closest[k];
        os << '\n';
    }
    return os.str();
}

std::string DriftReport::tail_csv() const {
    std::ostringstream os;
    os << "class,train_nearest_head,test_nearest_head,distinct_nearest_heads\n";
    for (std::size_t i = 0; i < tail_classes.size(); ++i)
        os << tail_classes[i] << ',' << tail_train_nearest_head[i] << ','
           << tail_test_nearest_head[i] << ',' << tail_distinct_nearest_heads[i]
           << '\n';
    return os.str();
}

}  // namespace dcr
