#include "fsd/mixture.hpp"
#include "support.hpp"

#include <numbers>

using namespace fsd;

namespace {

FeatureMatrix gaussian_rows(std::size_t n, std::vector<double> mean, std::vector<double> sd, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    FeatureMatrix out(0, mean.size());
    std::vector<double> row(mean.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < mean.size(); ++d) row[d] = mean[d] + sd[d] * normal(rng);
        out.append(row);
    }
    return out;
}

FeatureMatrix planted_pair(std::mt19937_64& rng) {
    FeatureMatrix a = gaussian_rows(1000, {-2.0, 1.0}, {0.5, 0.5}, rng);
    const FeatureMatrix b = gaussian_rows(1000, {2.0, -1.0}, {0.5, 0.5}, rng);
    for (std::size_t i = 0; i < b.rows; ++i) a.append(b.row(i));
    return a;
}

// Extended-precision naive evaluation with an explicit max shift.
long double oracle_log_likelihood(const GaussianMixture& m, std::span<const double> x) {
    std::vector<long double> terms;
    for (std::size_t c = 0; c < m.components(); ++c) {
        long double t = std::log(static_cast<long double>(m.weights[c]));
        for (std::size_t d = 0; d < m.dimension(); ++d) {
            const long double z = (static_cast<long double>(x[d]) - m.stats.mean[d]) / m.stats.stddev[d];
            const long double v = m.variance(c)[d];
            const long double diff = z - m.mean(c)[d];
            t -= 0.5L * (std::log(2.0L * std::numbers::pi_v<long double>* v) + diff * diff / v);
        }
        terms.push_back(t);
    }
    const long double top = *std::max_element(terms.begin(), terms.end());
    long double s = 0.0L;
    for (long double t : terms) s += std::exp(t - top);
    return top + std::log(s);
}

}  // namespace

TEST_SUITE("mixture") {

TEST_CASE("single component is the closed-form Gaussian fit") {
    std::mt19937_64 rng(1);
    const FeatureMatrix x = gaussian_rows(500, {3.0, -1.0, 0.2}, {2.0, 0.1, 1.0}, rng);
    GmmConfig cfg;
    cfg.components = 1;
    const GaussianMixture g = fit_gmm(x, cfg).model;
    REQUIRE(g.components() == 1);
    CHECK(g.weights[0] == doctest::Approx(1.0));
    for (std::size_t d = 0; d < 3; ++d) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) mean += x.row(i)[d];
        mean /= x.rows;
        double var = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) var += (x.row(i)[d] - mean) * (x.row(i)[d] - mean);
        var /= x.rows;
        const double raw_mean = g.stats.mean[d] + g.stats.stddev[d] * g.mean(0)[d];
        const double raw_var = g.variance(0)[d] * g.stats.stddev[d] * g.stats.stddev[d];
        CHECK(std::abs(raw_mean - mean) < 1e-9 * std::max(1.0, std::abs(mean)));
        CHECK(std::abs(raw_var - var) < 1e-9 * var);
    }
}

TEST_CASE("identical samples sit at the variance floor") {
    FeatureMatrix x(0, 2);
    for (int i = 0; i < 10; ++i) x.append(std::vector<double>{0.3, -4.0});
    GmmConfig cfg;
    cfg.components = 1;
    const GaussianMixture g = fit_gmm(x, cfg).model;
    for (double v : g.variances) CHECK(v == kVarianceFloor);
    const auto back = g.stats.unstandardize(g.mean(0));
    CHECK(std::abs(back[0] - 0.3) < 1e-12);
    CHECK(std::abs(back[1] + 4.0) < 1e-12);
    CHECK(std::isfinite(log_likelihood(g, std::vector<double>{0.3, -4.0})));
}

TEST_CASE("planted two-component mixture is recovered") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const FeatureMatrix x = planted_pair(rng);
        GmmConfig cfg;
        cfg.components = 2;
        cfg.seed = seed;
        const GaussianMixture g = fit_gmm(x, cfg).model;
        auto m0 = g.stats.unstandardize(g.mean(0));
        auto m1 = g.stats.unstandardize(g.mean(1));
        if (m0[0] > m1[0]) std::swap(m0, m1);
        CHECK(std::abs(m0[0] + 2.0) < 0.1);
        CHECK(std::abs(m0[1] - 1.0) < 0.1);
        CHECK(std::abs(m1[0] - 2.0) < 0.1);
        CHECK(std::abs(m1[1] + 1.0) < 0.1);
    }
}

TEST_CASE("log-likelihood at the mean of one component") {
    std::mt19937_64 rng(2);
    const FeatureMatrix x = gaussian_rows(200, {1.0, 2.0, 3.0}, {1.0, 0.5, 2.0}, rng);
    GmmConfig cfg;
    cfg.components = 1;
    const GaussianMixture g = fit_gmm(x, cfg).model;
    double expected = 0.0;
    for (double v : g.variance(0)) expected -= 0.5 * std::log(2.0 * std::numbers::pi * v);
    CHECK(std::abs(log_likelihood(g, g.stats.unstandardize(g.mean(0))) - expected) < 1e-12);
    CHECK(std::abs(log_likelihood_standardized(g, g.mean(0)) - expected) < 1e-12);
}

TEST_CASE("far-away points keep a finite log-likelihood") {
    std::mt19937_64 rng(3);
    const FeatureMatrix x = planted_pair(rng);
    GmmConfig cfg;
    cfg.components = 2;
    const GaussianMixture g = fit_gmm(x, cfg).model;
    std::vector<double> far(2);
    for (std::size_t d = 0; d < 2; ++d) far[d] = g.stats.mean[d] + 50.0 * g.stats.stddev[d];
    const double ll = log_likelihood(g, far);
    CHECK(std::isfinite(ll));
    CHECK(ll < -1000.0);
    const auto resp = responsibilities(g, far);
    CHECK(std::abs(resp[0] + resp[1] - 1.0) < 1e-12);
}

TEST_CASE("log-likelihood matches an extended-precision oracle") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        GaussianMixture g;
        const std::size_t c = 1 + trial % 4, d = 6;
        g.stats.mean = test::uniform_vector(d, rng, -1, 1);
        for (std::size_t i = 0; i < d; ++i) g.stats.stddev.push_back(u(rng));
        for (std::size_t i = 0; i < c; ++i) g.weights.push_back(u(rng));
        double total = 0.0;
        for (double w : g.weights) total += w;
        for (double& w : g.weights) w /= total;
        g.means = test::uniform_vector(c * d, rng, -3, 3);
        for (std::size_t i = 0; i < c * d; ++i) g.variances.push_back(u(rng));
        CHECK_NOTHROW(g.validate());
        for (int s = 0; s < 5; ++s) {
            const auto x = test::uniform_vector(d, rng, -8, 8);
            const long double ref = oracle_log_likelihood(g, x);
            CHECK(std::abs(log_likelihood(g, x) - static_cast<double>(ref)) <= 1e-10 * std::abs(static_cast<double>(ref)));
        }
    }
}

TEST_CASE("EM trace never decreases and responsibilities are row-stochastic") {
    std::mt19937_64 rng(5);
    FeatureMatrix x = gaussian_rows(300, {0, 0, 0, 0}, {1, 1, 1, 1}, rng);
    const FeatureMatrix y = gaussian_rows(300, {3, 1, -2, 0}, {0.5, 2, 1, 1}, rng);
    for (std::size_t i = 0; i < y.rows; ++i) x.append(y.row(i));
    for (std::size_t comps : {2u, 3u, 5u}) {
        GmmConfig cfg;
        cfg.components = comps;
        cfg.seed = comps;
        const GmmFit fit = fit_gmm(x, cfg);
        for (std::size_t i = 1; i < fit.mean_log_likelihood.size(); ++i) {
            if (fit.reseeds == 0) CHECK(fit.mean_log_likelihood[i] >= fit.mean_log_likelihood[i - 1] - 1e-9);
        }
        for (std::size_t i = 0; i < x.rows; i += 37) {
            const auto r = responsibilities(fit.model, x.row(i));
            double s = 0.0;
            for (double v : r) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        CHECK_NOTHROW(fit.model.validate());
    }
}

TEST_CASE("scores are consistent across raw and standardized inputs") {
    std::mt19937_64 rng(6);
    const FeatureMatrix x = gaussian_rows(100, {10, -10}, {3, 0.01}, rng);
    GmmConfig cfg;
    cfg.components = 2;
    const GaussianMixture g = fit_gmm(x, cfg).model;
    const auto scores = score_rows(g, x);
    for (std::size_t i = 0; i < x.rows; ++i) {
        CHECK(scores[i] == log_likelihood(g, x.row(i)));
        CHECK(std::abs(scores[i] - log_likelihood_standardized(g, g.stats.standardize(x.row(i)))) < 1e-12);
    }
}

TEST_CASE("same seed gives the same model") {
    std::mt19937_64 rng(7);
    const FeatureMatrix x = planted_pair(rng);
    GmmConfig cfg;
    cfg.components = 3;
    cfg.seed = 11;
    CHECK(fit_gmm(x, cfg).model == fit_gmm(x, cfg).model);
}

TEST_CASE("mixture errors") {
    FeatureMatrix x(0, 2);
    x.append(std::vector<double>{1, 2});
    GmmConfig cfg;
    cfg.components = 2;
    CHECK(test::error_of([&] { fit_gmm(x, cfg); }) == ErrorCode::TooFewSamples);
    cfg.components = 1;
    const GaussianMixture g = fit_gmm(x, cfg).model;
    CHECK(test::error_of([&] { log_likelihood(g, std::vector<double>{1.0}); }) == ErrorCode::DimensionMismatch);
    GaussianMixture bad = g;
    bad.weights[0] = 0.5;
    CHECK(test::error_of([&] { bad.validate(); }) == ErrorCode::InvariantViolation);
    bad = g;
    bad.variances[0] = 1e-9;
    CHECK(test::error_of([&] { bad.validate(); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("feature standardization floors the std") {
    FeatureMatrix x(0, 2);
    x.append(std::vector<double>{1.0, 5.0});
    x.append(std::vector<double>{3.0, 5.0});
    const FeatureStats s = FeatureStats::fit(x);
    CHECK(s.mean[0] == 2.0);
    CHECK(s.stddev[0] == 1.0);
    CHECK(s.stddev[1] == kStdFloor);
    const auto z = s.standardize(std::vector<double>{3.0, 5.0});
    CHECK(z[0] == 1.0);
    CHECK(z[1] == 0.0);
    CHECK(s.unstandardize(z) == std::vector<double>{3.0, 5.0});
}

}
