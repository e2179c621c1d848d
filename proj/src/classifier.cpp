#include "dcr/classifier.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dcr/rng.hpp"

namespace dcr {

MultiProxyClassifier::MultiProxyClassifier(int dim, int num_classes, int proxies,
                                           std::vector<std::uint8_t> tail_flags)
    : dim_(dim), num_classes_(num_classes), proxies_(proxies),
      tail_flags_(std::move(tail_flags)) {
    if (dim < 1 || num_classes < 1 || proxies < 1)
        throw std::invalid_argument("classifier: dims and proxy count must be positive");
    if (tail_flags_.size() != static_cast<std::size_t>(num_classes))
        throw std::invalid_argument("classifier: tail flag size mismatch");
    weights_.reserve(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k)
        weights_.emplace_back(Eigen::MatrixXd::Zero(dim, proxy_count(k)));
}

bool MultiProxyClassifier::same_shape(const MultiProxyClassifier& other) const {
    return dim_ == other.dim_ && num_classes_ == other.num_classes_ &&
           proxies_ == other.proxies_ && tail_flags_ == other.tail_flags_;
}

ProxyGrad zero_like(const MultiProxyClassifier& clf) {
    ProxyGrad grad;
    grad.reserve(static_cast<std::size_t>(clf.num_classes()));
    for (int k = 0; k < clf.num_classes(); ++k)
        grad.emplace_back(Eigen::MatrixXd::Zero(clf.dim(), clf.proxy_count(k)));
    return grad;
}

MpForward mp_logits(const MultiProxyClassifier& clf, const Eigen::VectorXd& feature) {
    if (feature.size() != clf.dim())
        throw std::invalid_argument("mp_logits: feature dimension mismatch");

    const int K = clf.num_classes();
    MpForward fw;
    fw.logits.resize(K);
    fw.scores.resize(static_cast<std::size_t>(K));
    fw.proxy_mix.resize(static_cast<std::size_t>(K));

    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd scores = clf.weights(k).transpose() * feature;
        if (!clf.is_tail(k)) {
            fw.logits[k] = scores[0];
            fw.proxy_mix[static_cast<std::size_t>(k)] = Eigen::VectorXd::Ones(1);
        } else {
            Eigen::VectorXd mix = (scores.array() - scores.maxCoeff()).exp();
            mix /= mix.sum();
            fw.logits[k] = mix.dot(scores);
            fw.proxy_mix[static_cast<std::size_t>(k)] = std::move(mix);
        }
        fw.scores[static_cast<std::size_t>(k)] = std::move(scores);
    }
    return fw;
}

Eigen::MatrixXd effective_weights(const MultiProxyClassifier& clf,
                                  const MpForward& forward) {
    Eigen::MatrixXd eff(clf.dim(), clf.num_classes());
    for (int k = 0; k < clf.num_classes(); ++k)
        eff.col(k) = clf.weights(k) * forward.proxy_mix[static_cast<std::size_t>(k)];
    return eff;
}

Eigen::MatrixXd effective_weights(const MultiProxyClassifier& clf,
                                  const Eigen::VectorXd& feature) {
    return effective_weights(clf, mp_logits(clf, feature));
}

MultiProxyClassifier add_classifiers(const MultiProxyClassifier& a,
                                     const MultiProxyClassifier& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add_classifiers: shape mismatch");
    MultiProxyClassifier out = a;
    for (int k = 0; k < out.num_classes(); ++k) out.weights(k) += b.weights(k);
    return out;
}

MultiProxyClassifier init_classifier(int dim, int num_classes, int proxies,
                                     const std::vector<std::uint8_t>& tail_flags,
                                     std::uint64_t seed) {
    MultiProxyClassifier clf(dim, num_classes, proxies, tail_flags);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int k = 0; k < num_classes; ++k) {
        Eigen::MatrixXd& w = clf.weights(k);
        for (Eigen::Index l = 0; l < w.cols(); ++l)
            for (Eigen::Index d = 0; d < w.rows(); ++d) w(d, l) = scale * rng.normal();
    }
    return clf;
}

Eigen::VectorXd uniform_logits(const DcrModel& model, const Eigen::VectorXd& feature) {
    return mp_logits(model.uniform, feature).logits;
}

Eigen::VectorXd rbmc_logits(const DcrModel& model, const Eigen::VectorXd& feature) {
    return mp_logits(add_classifiers(model.uniform, model.residual), feature).logits;
}

namespace {

constexpr char kMagic[4] = {'D', 'C', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T value;
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is)
        throw FormatError(FormatError::Kind::Truncated, "checkpoint: truncated");
    return value;
}

void put_weights(std::ostream& os, const MultiProxyClassifier& clf) {
    for (int k = 0; k < clf.num_classes(); ++k) {
        const Eigen::MatrixXd& w = clf.weights(k);
        for (Eigen::Index l = 0; l < w.cols(); ++l)
            for (Eigen::Index d = 0; d < w.rows(); ++d)
                put(os, static_cast<float>(w(d, l)));
    }
}

void get_weights(std::istream& is, MultiProxyClassifier& clf) {
    for (int k = 0; k < clf.num_classes(); ++k) {
        Eigen::MatrixXd& w = clf.weights(k);
        for (Eigen::Index l = 0; l < w.cols(); ++l)
            for (Eigen::Index d = 0; d < w.rows(); ++d)
                w(d, l) = static_cast<double>(get<float>(is));
    }
}

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            put(os, static_cast<float>(m(r, c)));
}

Eigen::MatrixXd get_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = static_cast<double>(get<float>(is));
    return m;
}

}  // namespace

void save_model(const DcrModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError(FormatError::Kind::Io,
                          "checkpoint: cannot open for writing: " + path);

    const int K = model.uniform.num_classes();
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, static_cast<std::uint32_t>(model.uniform.dim()));
    put(os, static_cast<std::uint32_t>(K));
    put(os, static_cast<std::uint32_t>(model.uniform.proxies()));
    os.write(reinterpret_cast<const char*>(model.uniform.tail_flags().data()), K);
    for (int k = 0; k < K; ++k)
        put(os, static_cast<std::uint64_t>(model.class_counts[static_cast<std::size_t>(k)]));

    put_weights(os, model.uniform);
    put_weights(os, model.residual);
    put_matrix(os, model.stats.prototypes);
    put_matrix(os, model.stats.std_devs);

    put(os, static_cast<std::uint32_t>(model.stats.tail_classes.size()));
    for (int t : model.stats.tail_classes) {
        const TailDrift& entry = *model.stats.drift[static_cast<std::size_t>(t)];
        put(os, static_cast<std::uint32_t>(t));
        put(os, static_cast<std::uint32_t>(entry.neighbors.size()));
        for (int j : entry.neighbors) put(os, static_cast<std::uint32_t>(j));
        for (Eigen::Index i = 0; i < entry.probs.size(); ++i)
            put(os, static_cast<float>(entry.probs[i]));
        put(os, static_cast<float>(entry.alpha));
        put(os, static_cast<float>(entry.beta));
    }
    if (!os)
        throw FormatError(FormatError::Kind::Io, "checkpoint: write failed: " + path);
}

DcrModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError(FormatError::Kind::Io, "checkpoint: cannot open: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, "checkpoint: bad magic");
    const auto version = get<std::uint32_t>(is);
    if (version != kVersion)
        throw FormatError(FormatError::Kind::BadVersion,
                          "checkpoint: unsupported version " + std::to_string(version));

    const auto dim = get<std::uint32_t>(is);
    const auto num_classes = get<std::uint32_t>(is);
    const auto proxies = get<std::uint32_t>(is);

    std::vector<std::uint8_t> tail_flags(num_classes);
    is.read(reinterpret_cast<char*>(tail_flags.data()), num_classes);
    if (!is)
        throw FormatError(FormatError::Kind::Truncated, "checkpoint: truncated flags");

    DcrModel model;
    model.class_counts.resize(num_classes);
    for (std::uint32_t k = 0; k < num_classes; ++k)
        model.class_counts[k] = static_cast<std::int64_t>(get<std::uint64_t>(is));

    model.uniform = MultiProxyClassifier(static_cast<int>(dim),
                                         static_cast<int>(num_classes),
                                         static_cast<int>(proxies), tail_flags);
    model.residual = model.uniform;
    get_weights(is, model.uniform);
    get_weights(is, model.residual);

    model.stats.prototypes = get_matrix(is, num_classes, dim);
    model.stats.std_devs = get_matrix(is, num_classes, dim);
    model.stats.tail_flags = tail_flags;
    model.stats.drift.resize(num_classes);
    for (std::uint32_t k = 0; k < num_classes; ++k) {
        if (tail_flags[k])
            model.stats.tail_classes.push_back(static_cast<int>(k));
        else
            model.stats.head_classes.push_back(static_cast<int>(k));
    }

    const auto tail_entries = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < tail_entries; ++i) {
        const auto t = get<std::uint32_t>(is);
        if (t >= num_classes || !tail_flags[t])
            throw FormatError(FormatError::Kind::LabelRange,
                              "checkpoint: drift entry for non-tail class");
        TailDrift entry;
        const auto m = get<std::uint32_t>(is);
        entry.neighbors.resize(m);
        for (std::uint32_t j = 0; j < m; ++j) {
            const auto h = get<std::uint32_t>(is);
            if (h >= num_classes)
                throw FormatError(FormatError::Kind::LabelRange,
                                  "checkpoint: neighbor out of range");
            entry.neighbors[j] = static_cast<int>(h);
        }
        entry.probs.resize(m + 1);
        for (std::uint32_t j = 0; j <= m; ++j)
            entry.probs[j] = static_cast<double>(get<float>(is));
        entry.alpha = static_cast<double>(get<float>(is));
        entry.beta = static_cast<double>(get<float>(is));
        entry.offsets = drift_offsets(model.stats.prototypes, static_cast<int>(t),
                                      entry.neighbors, entry.alpha);
        model.stats.drift[t] = std::move(entry);
    }
    is.peek();
    if (!is.eof())
        throw FormatError(FormatError::Kind::TrailingBytes,
                          "checkpoint: trailing bytes after payload");
    return model;
}

}  // namespace dcr
