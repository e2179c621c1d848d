#include "dcr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace dcr {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

FeatureDataset FeatureDataset::create(FeatureMatrix features,
                                      std::vector<std::uint32_t> labels,
                                      std::uint32_t num_classes) {
    require(num_classes > 0, "dataset: num_classes must be positive");
    require(static_cast<std::size_t>(features.rows()) == labels.size(),
            "dataset: feature rows and labels must agree");
    require(features.rows() > 0, "dataset: empty dataset");
    require(features.allFinite(), "dataset: non-finite feature value");

    std::vector<std::int64_t> counts(num_classes, 0);
    for (std::uint32_t label : labels) {
        require(label < num_classes, "dataset: label out of range");
        ++counts[label];
    }

    FeatureDataset out;
    out.features = std::move(features);
    out.labels = std::move(labels);
    out.num_classes = num_classes;
    out.class_counts = std::move(counts);
    return out;
}

std::vector<std::int64_t> longtail_class_counts(int num_classes,
                                                std::int64_t samples_max,
                                                double imbalance_factor) {
    require(num_classes >= 1, "longtail: num_classes must be >= 1");
    require(samples_max >= 1, "longtail: samples_max must be >= 1");
    require(imbalance_factor > 1.0, "longtail: imbalance_factor must be > 1");

    std::vector<std::int64_t> counts(num_classes);
    for (int k = 0; k < num_classes; ++k) {
        double decay = num_classes == 1
                           ? 1.0
                           : std::pow(imbalance_factor,
                                      -static_cast<double>(k) / (num_classes - 1));
        // llround = half away from zero; floor at one sample per class.
        counts[k] = std::max<std::int64_t>(
            1, std::llround(static_cast<double>(samples_max) * decay));
    }
    return counts;
}

LongTailPopulation longtail_population(const LongTailSpec& spec) {
    require(spec.num_classes >= 2, "longtail: need at least 2 classes");
    require(spec.samples_max >= spec.num_classes,
            "longtail: samples_max must be at least num_classes");
    require(spec.dim >= 1, "longtail: dim must be >= 1");
    require(spec.imbalance_factor > 1.0, "longtail: imbalance_factor must be > 1");
    require(spec.drift_strength >= 0.0 && spec.drift_strength <= 1.0,
            "longtail: drift_strength must lie in [0,1]");
    require(spec.cluster_spread >= 0.0, "longtail: cluster_spread must be >= 0");

    LongTailPopulation pop;
    pop.counts =
        longtail_class_counts(spec.num_classes, spec.samples_max, spec.imbalance_factor);

    // Head classes for generation purposes: count above the default 100
    // threshold. Tail means are placed near a randomly chosen head mean so
    // tail categories genuinely resemble some head category (cosine around
    // 0.8); without that structure there is nothing to drift toward.
    std::vector<int> heads, tails;
    for (int k = 0; k < spec.num_classes; ++k) {
        if (pop.counts[k] > 100)
            heads.push_back(k);
        else
            tails.push_back(k);
    }

    Rng rng(derive_seed(spec.seed, "longtail.means"));
    pop.train_means.resize(spec.num_classes, spec.dim);
    if (heads.empty() || tails.empty()) {
        for (int k = 0; k < spec.num_classes; ++k)
            for (int d = 0; d < spec.dim; ++d) pop.train_means(k, d) = rng.normal();
    } else {
        constexpr double kTailOffsetScale = 0.75;
        for (int h : heads)
            for (int d = 0; d < spec.dim; ++d) pop.train_means(h, d) = rng.normal();
        for (int t : tails) {
            const int anchor =
                heads[rng.uniform_index(static_cast<std::uint64_t>(heads.size()))];
            for (int d = 0; d < spec.dim; ++d)
                pop.train_means(t, d) =
                    pop.train_means(anchor, d) + kTailOffsetScale * rng.normal();
        }
    }

    pop.test_means = pop.train_means;
    if (spec.drift_strength > 0.0 && !heads.empty()) {
        for (int t : tails) {
            int nearest = heads.front();
            double best = std::numeric_limits<double>::infinity();
            for (int h : heads) {
                double d2 =
                    (pop.train_means.row(h) - pop.train_means.row(t)).squaredNorm();
                if (d2 < best) {
                    best = d2;
                    nearest = h;
                }
            }
            pop.test_means.row(t) +=
                spec.drift_strength *
                (pop.train_means.row(nearest) - pop.train_means.row(t));
        }
    }
    return pop;
}

LongTailData generate_longtail(const LongTailSpec& spec) {
    require(spec.test_per_class >= 1, "longtail: test_per_class must be >= 1");
    LongTailPopulation pop = longtail_population(spec);

    const int K = spec.num_classes;
    const int D = spec.dim;

    std::int64_t n_train = 0;
    for (std::int64_t c : pop.counts) n_train += c;

    Rng train_rng(derive_seed(spec.seed, "longtail.train"));
    FeatureMatrix train_features(n_train, D);
    std::vector<std::uint32_t> train_labels(static_cast<std::size_t>(n_train));
    std::int64_t row = 0;
    for (int k = 0; k < K; ++k) {
        for (std::int64_t i = 0; i < pop.counts[k]; ++i, ++row) {
            train_labels[static_cast<std::size_t>(row)] = static_cast<std::uint32_t>(k);
            for (int d = 0; d < D; ++d)
                train_features(row, d) = static_cast<float>(
                    pop.train_means(k, d) + spec.cluster_spread * train_rng.normal());
        }
    }

    Rng test_rng(derive_seed(spec.seed, "longtail.test"));
    const std::int64_t n_test = spec.test_per_class * K;
    FeatureMatrix test_features(n_test, D);
    std::vector<std::uint32_t> test_labels(static_cast<std::size_t>(n_test));
    row = 0;
    for (int k = 0; k < K; ++k) {
        for (std::int64_t i = 0; i < spec.test_per_class; ++i, ++row) {
            test_labels[static_cast<std::size_t>(row)] = static_cast<std::uint32_t>(k);
            for (int d = 0; d < D; ++d)
                test_features(row, d) = static_cast<float>(
                    pop.test_means(k, d) + spec.cluster_spread * test_rng.normal());
        }
    }

    LongTailData out;
    out.train = FeatureDataset::create(std::move(train_features),
                                       std::move(train_labels),
                                       static_cast<std::uint32_t>(K));
    out.test = FeatureDataset::create(std::move(test_features),
                                      std::move(test_labels),
                                      static_cast<std::uint32_t>(K));
    return out;
}

namespace {

template <typename T>
void write_raw(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T value;
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is)
        throw FormatError(FormatError::Kind::Truncated,
                          "feature file: truncated payload");
    return value;
}

}  // namespace

void write_features(const FeatureDataset& dataset, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError(FormatError::Kind::Io,
                          "feature file: cannot open for writing: " + path);

    os.write(kMagic, 4);
    write_raw(os, kVersion);
    write_raw(os, static_cast<std::uint64_t>(dataset.size()));
    write_raw(os, static_cast<std::uint32_t>(dataset.dim()));
    write_raw(os, dataset.num_classes);
    os.write(reinterpret_cast<const char*>(dataset.labels.data()),
             static_cast<std::streamsize>(dataset.labels.size() * sizeof(std::uint32_t)));
    os.write(reinterpret_cast<const char*>(dataset.features.data()),
             static_cast<std::streamsize>(sizeof(float)) * dataset.features.size());
    if (!os)
        throw FormatError(FormatError::Kind::Io, "feature file: write failed: " + path);
}

FeatureDataset read_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError(FormatError::Kind::Io,
                          "feature file: cannot open: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, "feature file: bad magic");

    const auto version = read_raw<std::uint32_t>(is);
    if (version != kVersion)
        throw FormatError(FormatError::Kind::BadVersion,
                          "feature file: unsupported version " + std::to_string(version));

    const auto n = read_raw<std::uint64_t>(is);
    const auto dim = read_raw<std::uint32_t>(is);
    const auto num_classes = read_raw<std::uint32_t>(is);
    if (n == 0 || dim == 0 || num_classes == 0)
        throw FormatError(FormatError::Kind::Truncated,
                          "feature file: empty dimensions");

    // Validate the declared payload against the actual file size before
    // parsing, so a short file reports truncation rather than garbage.
    const std::uintmax_t expected =
        24 + n * sizeof(std::uint32_t) + n * dim * sizeof(float);
    const std::uintmax_t actual = std::filesystem::file_size(path);
    if (actual < expected)
        throw FormatError(FormatError::Kind::Truncated,
                          "feature file: declares " + std::to_string(n) +
                              " rows but holds fewer bytes");
    if (actual > expected)
        throw FormatError(FormatError::Kind::TrailingBytes,
                          "feature file: trailing bytes after payload");

    std::vector<std::uint32_t> labels(n);
    is.read(reinterpret_cast<char*>(labels.data()),
            static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    if (!is)
        throw FormatError(FormatError::Kind::Truncated,
                          "feature file: truncated labels");
    for (std::uint32_t label : labels)
        if (label >= num_classes)
            throw FormatError(FormatError::Kind::LabelRange,
                              "feature file: label " + std::to_string(label) +
                                  " >= K=" + std::to_string(num_classes));

    FeatureMatrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    is.read(reinterpret_cast<char*>(features.data()),
            static_cast<std::streamsize>(sizeof(float)) * features.size());
    if (!is)
        throw FormatError(FormatError::Kind::Truncated,
                          "feature file: truncated features");

    return FeatureDataset::create(std::move(features), std::move(labels), num_classes);
}

FeatureDataset read_features_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw FormatError(FormatError::Kind::Io, "csv: cannot open: " + path);

    std::string line;
    if (!std::getline(is, line))
        throw FormatError(FormatError::Kind::BadHeader, "csv: missing header");

    // Header must be exactly label,f0,...,f{D-1}.
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
    }
    if (cols.size() < 2 || cols[0] != "label")
        throw FormatError(FormatError::Kind::BadHeader,
                          "csv: header must start with 'label' and one feature column");
    for (std::size_t i = 1; i < cols.size(); ++i)
        if (cols[i] != "f" + std::to_string(i - 1))
            throw FormatError(FormatError::Kind::BadHeader,
                              "csv: expected column f" + std::to_string(i - 1) +
                                  ", got '" + cols[i] + "'");
    const std::size_t dim = cols.size() - 1;

    std::vector<float> values;
    std::vector<std::uint32_t> labels;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != dim + 1)
            throw FormatError(FormatError::Kind::BadRow,
                              "csv: line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(dim + 1) + " columns");
        try {
            long long label = std::stoll(cells[0]);
            if (label < 0)
                throw FormatError(FormatError::Kind::BadRow,
                                  "csv: line " + std::to_string(line_no) +
                                      ": negative label");
            labels.push_back(static_cast<std::uint32_t>(label));
            for (std::size_t i = 1; i < cells.size(); ++i)
                values.push_back(std::stof(cells[i]));
        } catch (const FormatError&) {
            throw;
        } catch (const std::exception&) {
            throw FormatError(FormatError::Kind::BadRow,
                              "csv: line " + std::to_string(line_no) +
                                  ": non-numeric value");
        }
    }
    if (labels.empty())
        throw FormatError(FormatError::Kind::BadRow, "csv: no data rows");

    std::uint32_t num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    FeatureMatrix features(static_cast<Eigen::Index>(labels.size()),
                           static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < labels.size(); ++r)
        for (std::size_t d = 0; d < dim; ++d)
            features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) =
                values[r * dim + d];
    return FeatureDataset::create(std::move(features), std::move(labels), num_classes);
}

Batch gather(const FeatureDataset& dataset,
             const std::vector<std::int64_t>& indices) {
    require(!indices.empty(), "batch: empty index list");
    Batch batch;
    batch.indices = indices;
    batch.features.resize(static_cast<Eigen::Index>(indices.size()), dataset.dim());
    batch.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] >= 0 && indices[i] < dataset.size(),
                "batch: index out of range");
        batch.features.row(static_cast<Eigen::Index>(i)) =
            dataset.features.row(indices[i]).cast<double>();
        batch.labels[i] = dataset.labels[static_cast<std::size_t>(indices[i])];
    }
    return batch;
}

UniformSampler::UniformSampler(const FeatureDataset& dataset,
                               std::int64_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed) {
    require(batch_size > 0, "uniform sampler: batch_size must be positive");
    require(batch_size <= dataset.size(),
            "uniform sampler: batch_size exceeds dataset size");
    order_.resize(static_cast<std::size_t>(dataset.size()));
    for (std::int64_t i = 0; i < dataset.size(); ++i)
        order_[static_cast<std::size_t>(i)] = i;
    reshuffle();
}

void UniformSampler::reshuffle() {
    rng_.shuffle(order_);
    cursor_ = 0;
}

std::int64_t UniformSampler::batches_per_epoch() const {
    return (dataset_->size() + batch_size_ - 1) / batch_size_;
}

Batch UniformSampler::next() {
    if (cursor_ >= dataset_->size()) reshuffle();
    const std::int64_t take = std::min(batch_size_, dataset_->size() - cursor_);
    std::vector<std::int64_t> idx(order_.begin() + cursor_,
                                  order_.begin() + cursor_ + take);
    cursor_ += take;
    return gather(*dataset_, idx);
}

ClassBalancedSampler::ClassBalancedSampler(const FeatureDataset& dataset,
                                           std::int64_t batch_size,
                                           std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed) {
    require(batch_size > 0, "balanced sampler: batch_size must be positive");
    require(batch_size <= dataset.size(),
            "balanced sampler: batch_size exceeds dataset size");
    per_class_.resize(dataset.num_classes);
    for (std::int64_t i = 0; i < dataset.size(); ++i)
        per_class_[dataset.labels[static_cast<std::size_t>(i)]].push_back(i);
    for (std::uint32_t k = 0; k < dataset.num_classes; ++k)
        if (per_class_[k].empty())
            throw std::invalid_argument("balanced sampler: class " +
                                        std::to_string(k) + " has no samples");
}

Batch ClassBalancedSampler::next() {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(batch_size_));
    for (auto& slot : idx) {
        const auto k = rng_.uniform_index(per_class_.size());
        const auto& pool = per_class_[k];
        slot = pool[rng_.uniform_index(pool.size())];
    }
    return gather(*dataset_, idx);
}

}  // namespace dcr
