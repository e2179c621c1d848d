#include <doctest.h>

#include <cmath>

#include "dcr/lcm.hpp"
#include "dcr/rng.hpp"
#include "oracles.hpp"

using namespace dcr;

namespace {

// Two heads and two tails with drift data, built by hand so every value is
// known exactly.
ClassStats toy_stats(double beta, double sigma) {
    ClassStats stats;
    stats.prototypes = Eigen::MatrixXd::Zero(4, 3);
    stats.prototypes << 1, 0, 0, 0, 1, 0, 0.9, 0.1, 0, 0.1, 0.9, 0;
    stats.std_devs = Eigen::MatrixXd::Constant(4, 3, sigma);
    stats.head_classes = {0, 1};
    stats.tail_classes = {2, 3};
    stats.tail_flags = {0, 0, 1, 1};
    stats.drift.resize(4);
    for (int t : {2, 3}) {
        TailDrift entry;
        entry.neighbors = {t - 2};
        entry.offsets = (stats.prototypes.row(t - 2) - stats.prototypes.row(t)) * 0.5;
        entry.probs = Eigen::Vector2d(0.3, 0.7);
        entry.alpha = 0.5;
        entry.beta = beta;
        stats.drift[static_cast<std::size_t>(t)] = entry;
    }
    return stats;
}

Eigen::MatrixXd random_weights(int dim, int num_classes, Rng& rng) {
    Eigen::MatrixXd w(dim, num_classes);
    for (int k = 0; k < num_classes; ++k)
        for (int d = 0; d < dim; ++d) w(d, k) = rng.normal();
    return w;
}

}  // namespace

TEST_CASE("cross entropy of uniform logits is log K") {
    Eigen::VectorXd z = Eigen::VectorXd::Constant(7, 3.25);
    CHECK(cross_entropy(z, 2) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy survives huge logits") {
    Eigen::VectorXd z(3);
    z << 5000.0, 4999.0, -5000.0;
    const double loss = cross_entropy(z, 0);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))));
}

TEST_CASE("compensate_logits") {
    SUBCASE("beta zero is the exact identity") {
        Eigen::VectorXd z(2);
        z << 0.5, -1.5;
        Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 2);
        Eigen::VectorXd sigma = Eigen::VectorXd::Ones(3);
        CHECK(compensate_logits(z, w, 0, 0.0, sigma) == z);
    }
    SUBCASE("zero variance is the exact identity") {
        Eigen::VectorXd z(2);
        z << 0.5, -1.5;
        Eigen::MatrixXd w(1, 2);
        w << 1.0, 3.0;
        Eigen::VectorXd sigma = Eigen::VectorXd::Zero(1);
        CHECK(compensate_logits(z, w, 0, 2.0, sigma) == z);
    }
    SUBCASE("matches the direct formula in one dimension") {
        // W = [1, 3], t = 0, beta = 2, sigma^2 = 0.25:
        // adjustment = (0, 2*(3-1)^2*0.25/2) = (0, 1).
        Eigen::VectorXd z(2);
        z << 0.5, -1.5;
        Eigen::MatrixXd w(1, 2);
        w << 1.0, 3.0;
        Eigen::VectorXd sigma(1);
        sigma << 0.5;
        const Eigen::VectorXd out = compensate_logits(z, w, 0, 2.0, sigma);
        CHECK(out[0] == 0.5);
        CHECK(out[1] == doctest::Approx(-0.5));
    }
    SUBCASE("true-class entry never moves and others never shrink") {
        Rng rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::MatrixXd w = random_weights(4, 5, rng);
            Eigen::VectorXd z(5), sigma(4);
            for (int k = 0; k < 5; ++k) z[k] = rng.normal();
            for (int d = 0; d < 4; ++d) sigma[d] = std::abs(rng.normal());
            const int label = trial % 5;
            const Eigen::VectorXd out = compensate_logits(z, w, label, 1.5, sigma);
            CHECK(out[label] == z[label]);
            for (int k = 0; k < 5; ++k) CHECK(out[k] >= z[k]);
        }
    }
}

TEST_CASE("lcm_loss") {
    SUBCASE("single uniform-logit mode gives log K") {
        LogitBundle bundle;
        bundle.raw = Eigen::VectorXd::Zero(6);
        bundle.compensated = bundle.raw;
        bundle.prob = 1.0;
        CHECK(lcm_loss({bundle}, 3) == doctest::Approx(std::log(6.0)));
    }
    SUBCASE("identical modes collapse to the single-mode loss") {
        LogitBundle a;
        a.raw = Eigen::Vector3d(0.2, -0.4, 1.0);
        a.compensated = a.raw;
        a.prob = 0.25;
        LogitBundle b = a;
        b.prob = 0.75;
        CHECK(lcm_loss({a, b}, 1) ==
              doctest::Approx(cross_entropy(a.raw, 1)).epsilon(1e-12));
    }
    SUBCASE("matches the high-precision oracle") {
        Rng rng(11);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<LogitBundle> bundles(3);
            double total = 0.0;
            for (auto& bundle : bundles) {
                bundle.raw = Eigen::VectorXd(5);
                for (int k = 0; k < 5; ++k) bundle.raw[k] = 3.0 * rng.normal();
                bundle.compensated = bundle.raw;
                bundle.prob = rng.uniform() + 0.1;
                total += bundle.prob;
            }
            for (auto& bundle : bundles) bundle.prob /= total;

            long double expected = 0.0L;
            for (const auto& bundle : bundles)
                expected += static_cast<long double>(bundle.prob) *
                            oracle::cross_entropy(bundle.compensated, 2);
            CHECK(std::abs(lcm_loss(bundles, 2) -
                           static_cast<double>(expected)) < 1e-10);
        }
    }
}

TEST_CASE("lcm loss is non-decreasing in beta") {
    Rng rng(13);
    const ClassStats base = toy_stats(0.0, 0.8);
    const Eigen::MatrixXd w = random_weights(3, 4, rng);
    Eigen::VectorXd f(3);
    f << 0.9, 0.2, -0.1;

    double previous = -1e300;
    for (double beta : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const ClassStats stats = toy_stats(beta, 0.8);
        const double loss = lcm_loss(linear_bundles(f, 2, w, stats), 2);
        CHECK(loss >= previous - 1e-12);
        previous = loss;
    }
}

TEST_CASE("head labels produce one unadjusted bundle") {
    const ClassStats stats = toy_stats(2.0, 0.8);
    Rng rng(17);
    const Eigen::MatrixXd w = random_weights(3, 4, rng);
    Eigen::VectorXd f(3);
    f << 1.0, -0.5, 0.25;
    const auto bundles = linear_bundles(f, 0, w, stats);
    REQUIRE(bundles.size() == 1);
    CHECK(bundles[0].prob == 1.0);
    CHECK(bundles[0].raw == bundles[0].compensated);
}

TEST_CASE("monte-carlo estimator") {
    Rng rng(19);
    const Eigen::MatrixXd w = random_weights(3, 4, rng);
    Eigen::VectorXd f(3);
    f << 0.4, -0.2, 0.6;

    SUBCASE("fixed seed reproduces the estimate") {
        const ClassStats stats = toy_stats(1.5, 0.8);
        const McEstimate a = mc_expected_loss(f, 2, w, stats, 1, 5);
        const McEstimate b = mc_expected_loss(f, 2, w, stats, 1, 5);
        CHECK(a.mean == b.mean);
        CHECK(a.std_error == 0.0);
    }
    SUBCASE("beta zero reduces to the mode mixture") {
        const ClassStats stats = toy_stats(0.0, 0.8);
        const double closed = lcm_loss(linear_bundles(f, 2, w, stats), 2);
        const McEstimate mc = mc_expected_loss(f, 2, w, stats, 50000, 7);
        CHECK(std::abs(mc.mean - closed) <= 3.0 * mc.std_error);
    }
    SUBCASE("closed form upper-bounds the sampled loss") {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const ClassStats stats = toy_stats(1.5, 0.8);
            const double closed = lcm_loss(linear_bundles(f, 3, w, stats), 3);
            const McEstimate mc = mc_expected_loss(f, 3, w, stats, 100000, seed);
            CHECK(mc.mean <= closed + 3.0 * mc.std_error);
        }
    }
}
