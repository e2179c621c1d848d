#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dcr/dataset.hpp"
#include "dcr/stats.hpp"
#include "oracles.hpp"

using namespace dcr;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

FeatureDataset tiny_dataset() {
    FeatureMatrix f(3, 2);
    f << 1.0f, 2.0f, -0.0f, 0.5f, 1e-7f, -3.25f;
    return FeatureDataset::create(f, {0, 1, 1}, 2);
}

}  // namespace

TEST_CASE("longtail class counts follow exponential decay") {
    CHECK(longtail_class_counts(3, 100, 100.0) ==
          std::vector<std::int64_t>{100, 10, 1});
    CHECK(longtail_class_counts(2, 10, 1.0001) == std::vector<std::int64_t>{10, 10});
    // Floor at one sample.
    auto counts = longtail_class_counts(10, 20, 1000.0);
    CHECK(counts.front() == 20);
    CHECK(counts.back() == 1);
    for (std::size_t k = 1; k < counts.size(); ++k) CHECK(counts[k] <= counts[k - 1]);
}

TEST_CASE("population means are undrifted when drift_strength is zero") {
    LongTailSpec spec;
    spec.num_classes = 6;
    spec.samples_max = 300;
    spec.imbalance_factor = 50.0;
    spec.dim = 5;
    spec.drift_strength = 0.0;
    spec.seed = 3;
    const LongTailPopulation pop = longtail_population(spec);
    CHECK(pop.train_means == pop.test_means);
}

TEST_CASE("generator rejects invalid specs") {
    LongTailSpec spec;
    spec.num_classes = 1;
    CHECK_THROWS_AS(generate_longtail(spec), std::invalid_argument);
    spec.num_classes = 3;
    spec.imbalance_factor = 1.0;
    CHECK_THROWS_AS(generate_longtail(spec), std::invalid_argument);
    spec.imbalance_factor = 10.0;
    spec.drift_strength = 1.5;
    CHECK_THROWS_AS(generate_longtail(spec), std::invalid_argument);
    spec.drift_strength = 0.2;
    spec.samples_max = 2;  // below num_classes
    CHECK_THROWS_AS(generate_longtail(spec), std::invalid_argument);
}

TEST_CASE("drifted tail test prototypes move toward the nearest head prototype") {
    LongTailSpec spec;
    spec.num_classes = 20;
    spec.samples_max = 500;
    spec.imbalance_factor = 100.0;
    spec.dim = 16;
    spec.drift_strength = 0.5;
    spec.seed = 7;
    const LongTailData data = generate_longtail(spec);

    const Eigen::MatrixXd train_protos = oracle::class_means(data.train);
    const Eigen::MatrixXd test_protos = oracle::class_means(data.test);

    int closer = 0, total = 0;
    for (int t = 0; t < spec.num_classes; ++t) {
        if (data.train.class_counts[static_cast<std::size_t>(t)] > 100) continue;
        // Nearest head prototype to the train prototype of t.
        int nearest = -1;
        double best = 1e300;
        for (int h = 0; h < spec.num_classes; ++h) {
            if (data.train.class_counts[static_cast<std::size_t>(h)] <= 100) continue;
            const double d = (train_protos.row(h) - train_protos.row(t)).norm();
            if (d < best) {
                best = d;
                nearest = h;
            }
        }
        REQUIRE(nearest >= 0);
        const double test_dist = (test_protos.row(t) - train_protos.row(nearest)).norm();
        ++total;
        if (test_dist < best) ++closer;
    }
    CHECK(total >= 10);
    CHECK(closer >= total - 1);  // sampling noise may spare one class
}

TEST_CASE("undrifted tail prototypes converge as counts grow") {
    double previous = 1e300;
    for (std::int64_t n : {200, 2000, 20000}) {
        LongTailSpec spec;
        spec.num_classes = 4;
        spec.samples_max = n;
        spec.imbalance_factor = 2.0;
        spec.dim = 6;
        spec.drift_strength = 0.0;
        spec.test_per_class = static_cast<std::int64_t>(n);
        spec.seed = 11;
        const LongTailData data = generate_longtail(spec);
        const Eigen::MatrixXd train_protos = oracle::class_means(data.train);
        const Eigen::MatrixXd test_protos = oracle::class_means(data.test);
        const double gap =
            (train_protos.bottomRows(1) - test_protos.bottomRows(1)).norm();
        CHECK(gap < previous);
        previous = gap;
    }
    CHECK(previous < 0.05);
}

TEST_CASE("feature file round-trip is bit-exact including negative zero") {
    const FeatureDataset ds = tiny_dataset();
    const std::string path = temp_path("dcr_roundtrip.dcrf");
    write_features(ds, path);
    const FeatureDataset back = read_features(path);

    REQUIRE(back.size() == ds.size());
    REQUIRE(back.dim() == ds.dim());
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(std::memcmp(back.features.data(), ds.features.data(),
                      sizeof(float) * static_cast<std::size_t>(ds.features.size())) == 0);
    // Negative zero keeps its sign bit.
    CHECK(std::signbit(back.features(1, 0)));
    std::remove(path.c_str());
}

TEST_CASE("feature file errors are distinct") {
    const std::string path = temp_path("dcr_badfile.dcrf");
    write_features(tiny_dataset(), path);

    auto corrupt = [&](std::size_t offset, char value) {
        std::fstream fs(path, std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(static_cast<std::streamoff>(offset));
        fs.write(&value, 1);
    };

    SUBCASE("bad magic") {
        corrupt(0, 'X');
        try {
            read_features(path);
            FAIL("expected bad magic");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::BadMagic);
        }
    }
    SUBCASE("bad version") {
        corrupt(4, 9);
        try {
            read_features(path);
            FAIL("expected bad version");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::BadVersion);
        }
    }
    SUBCASE("truncated payload") {
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
        try {
            read_features(path);
            FAIL("expected truncation");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::Truncated);
        }
    }
    SUBCASE("declared rows exceed written rows") {
        // Header says N=5 but the payload holds 3 rows.
        corrupt(8, 5);
        try {
            read_features(path);
            FAIL("expected truncation");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::Truncated);
        }
    }
    SUBCASE("trailing bytes") {
        std::ofstream fs(path, std::ios::app | std::ios::binary);
        fs << "junk";
        fs.close();
        try {
            read_features(path);
            FAIL("expected trailing bytes");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::TrailingBytes);
        }
    }
    SUBCASE("label out of range") {
        // First label lives right after the 24-byte header.
        corrupt(24, 7);
        try {
            read_features(path);
            FAIL("expected label range error");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::LabelRange);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("csv importer") {
    const std::string path = temp_path("dcr_import.csv");
    {
        std::ofstream os(path);
        os << "label,f0,f1\n0,1.5,2\n1,-0.25,3\n1,0,0\n";
    }
    const FeatureDataset ds = read_features_csv(path);
    CHECK(ds.num_classes == 2);
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.features(0, 0) == 1.5f);
    CHECK(ds.class_counts == std::vector<std::int64_t>{1, 2});

    SUBCASE("bad header") {
        std::ofstream os(path);
        os << "label,x0\n0,1\n";
        os.close();
        try {
            read_features_csv(path);
            FAIL("expected header error");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::BadHeader);
        }
    }
    SUBCASE("short row") {
        std::ofstream os(path);
        os << "label,f0,f1\n0,1\n";
        os.close();
        try {
            read_features_csv(path);
            FAIL("expected row error");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatError::Kind::BadRow);
        }
    }
    std::remove(path.c_str());
}

namespace {

FeatureDataset two_class_dataset(std::int64_t n0, std::int64_t n1) {
    FeatureMatrix f(n0 + n1, 1);
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(n0 + n1));
    for (std::int64_t i = 0; i < n0 + n1; ++i) {
        f(i, 0) = static_cast<float>(i);
        labels[static_cast<std::size_t>(i)] = i < n0 ? 0 : 1;
    }
    return FeatureDataset::create(f, labels, 2);
}

}  // namespace

TEST_CASE("uniform sampler epoch is a permutation") {
    const FeatureDataset ds = two_class_dataset(2, 2);
    UniformSampler sampler(ds, 4, 1);
    const Batch batch = sampler.next();
    std::vector<std::int64_t> sorted = batch.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::int64_t>{0, 1, 2, 3});
}

TEST_CASE("uniform sampler covers every index once per epoch") {
    const FeatureDataset ds = two_class_dataset(900, 100);
    UniformSampler sampler(ds, 128, 17);
    for (int epoch = 0; epoch < 2; ++epoch) {
        std::vector<int> seen(1000, 0);
        std::int64_t class0 = 0;
        for (std::int64_t b = 0; b < sampler.batches_per_epoch(); ++b) {
            const Batch batch = sampler.next();
            for (std::size_t i = 0; i < batch.indices.size(); ++i) {
                ++seen[static_cast<std::size_t>(batch.indices[i])];
                if (batch.labels[i] == 0) ++class0;
            }
        }
        for (int count : seen) CHECK(count == 1);
        CHECK(class0 == 900);
    }
}

TEST_CASE("samplers are deterministic under a fixed seed") {
    const FeatureDataset ds = two_class_dataset(30, 10);
    UniformSampler a(ds, 7, 5), b(ds, 7, 5);
    ClassBalancedSampler c(ds, 7, 5), d(ds, 7, 5);
    for (int i = 0; i < 10; ++i) {
        CHECK(a.next().indices == b.next().indices);
        CHECK(c.next().indices == d.next().indices);
    }
}

TEST_CASE("sampler construction errors") {
    const FeatureDataset ds = two_class_dataset(3, 3);
    CHECK_THROWS_AS(UniformSampler(ds, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(UniformSampler(ds, 7, 1), std::invalid_argument);

    // A class with zero samples is rejected by the balanced sampler.
    FeatureMatrix f(2, 1);
    f << 0.0f, 1.0f;
    const FeatureDataset gap = FeatureDataset::create(f, {0, 2}, 3);
    CHECK_THROWS_AS(ClassBalancedSampler(gap, 1, 1), std::invalid_argument);
}

TEST_CASE("class-balanced sampler draws classes uniformly") {
    const FeatureDataset ds = two_class_dataset(900, 100);
    ClassBalancedSampler sampler(ds, 1000, 23);
    std::int64_t class0 = 0, draws = 0;
    for (int b = 0; b < 100; ++b) {
        const Batch batch = sampler.next();
        for (std::uint32_t label : batch.labels) {
            if (label == 0) ++class0;
            ++draws;
        }
    }
    REQUIRE(draws == 100000);
    const double freq = static_cast<double>(class0) / static_cast<double>(draws);
    CHECK(freq == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("class-balanced frequencies pass a chi-square test") {
    // Three classes with very uneven counts; 1e5 draws, dof = 2,
    // chi-square critical value at p = 0.001 is 13.816.
    FeatureMatrix f(903, 1);
    std::vector<std::uint32_t> labels(903);
    for (std::int64_t i = 0; i < 903; ++i) {
        f(i, 0) = static_cast<float>(i);
        labels[static_cast<std::size_t>(i)] = i < 500 ? 0 : (i < 900 ? 1 : 2);
    }
    const FeatureDataset ds = FeatureDataset::create(f, labels, 3);

    ClassBalancedSampler sampler(ds, 500, 29);
    std::array<double, 3> observed{0, 0, 0};
    for (int b = 0; b < 200; ++b)
        for (std::uint32_t label : sampler.next().labels) ++observed[label];

    const double expected = 100000.0 / 3.0;
    double chi2 = 0.0;
    for (double obs : observed)
        chi2 += (obs - expected) * (obs - expected) / expected;
    CHECK(chi2 < 13.816);
}

TEST_CASE("single-class dataset keeps the balanced sampler trivial") {
    FeatureMatrix f(4, 1);
    f << 0.f, 1.f, 2.f, 3.f;
    const FeatureDataset ds = FeatureDataset::create(f, {0, 0, 0, 0}, 1);
    ClassBalancedSampler sampler(ds, 4, 2);
    for (std::uint32_t label : sampler.next().labels) CHECK(label == 0);
}
