#pragma once

#include "fsd/features.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fsd {

inline constexpr double kStdFloor = 1e-8;
inline constexpr double kVarianceFloor = 1e-6;

// Per-dimension standardization fitted on a training set.
struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population std, floored at kStdFloor

    static FeatureStats fit(const FeatureMatrix& features);
    std::size_t dimension() const noexcept { return mean.size(); }
    std::vector<double> standardize(std::span<const double> x) const;
    std::vector<double> unstandardize(std::span<const double> z) const;

    friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

// Diagonal-covariance mixture over standardized features.
struct GaussianMixture {
    FeatureStats stats;
    std::vector<double> weights;    // C
    std::vector<double> means;      // C x D, standardized space
    std::vector<double> variances;  // C x D, standardized space

    std::size_t components() const noexcept { return weights.size(); }
    std::size_t dimension() const noexcept { return stats.dimension(); }
    std::span<const double> mean(std::size_t c) const noexcept {
        return std::span<const double>(means).subspan(c * dimension(), dimension());
    }
    std::span<const double> variance(std::size_t c) const noexcept {
        return std::span<const double>(variances).subspan(c * dimension(), dimension());
    }

    // Throws InvariantViolation when weights leave the simplex, variances fall under the floor, or shapes disagree.
    void validate() const;

    friend bool operator==(const GaussianMixture&, const GaussianMixture&) = default;
};

struct GmmConfig {
    std::size_t components = 8;
    std::size_t max_iterations = 200;
    double tolerance = 1e-6;
    double variance_floor = kVarianceFloor;
    std::uint64_t seed = 0;
};

struct GmmFit {
    GaussianMixture model;
    std::vector<double> mean_log_likelihood;  // per EM iteration, averaged over samples
    std::size_t reseeds = 0;
};

GmmFit fit_gmm(const FeatureMatrix& features, const GmmConfig& config);

// log sum_c pi_c N(z; mu_c, Sigma_c) with z the standardized x.
double log_likelihood(const GaussianMixture& model, std::span<const double> x);
double log_likelihood_standardized(const GaussianMixture& model, std::span<const double> z);

// Posterior component probabilities for a raw feature vector.
std::vector<double> responsibilities(const GaussianMixture& model, std::span<const double> x);

std::vector<double> score_rows(const GaussianMixture& model, const FeatureMatrix& features);

}  // namespace fsd
