#pragma once

#include "fsd/features.hpp"
#include "fsd/mixture.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsd {

// Linear-interpolation quantile of unsorted values, q in [0,1].
double interpolated_quantile(std::vector<double> values, double q);

struct DetectorModel {
    GaussianMixture real_model;
    double threshold = 0.0;  // log-likelihood; real iff score >= threshold
    double quantile = 0.05;
    std::size_t validation_size = 0;
};

DetectorModel calibrate_detector(GaussianMixture model, std::span<const double> validation_scores, double quantile);
DetectorModel calibrate_detector(GaussianMixture model, const FeatureMatrix& validation_reals, double quantile = 0.05);

struct Detection {
    bool real = false;
    double score = 0.0;
};

Detection detect(const DetectorModel& model, std::span<const double> x);

struct AttributorModel {
    // Sorted by label, labels unique.
    std::vector<std::pair<std::string, GaussianMixture>> sources;
    double reject_threshold = 0.0;

    std::size_t dimension() const noexcept { return sources.empty() ? 0 : sources.front().second.dimension(); }
    void validate() const;
};

struct Attribution {
    std::optional<std::size_t> source;  // empty when rejected as unknown
    std::size_t best = 0;               // argmax regardless of rejection
    std::vector<double> scores;         // one per source, model order
};

Attribution attribute(const AttributorModel& model, std::span<const double> x);

// Decision rule on per-source scores (model order): argmax with ties to the lowest index,
// rejected when the maximum falls below the threshold.
Attribution decide_source(std::vector<double> scores, double reject_threshold);

// One mixture per label of `training`. The rejection threshold is the minimum over sources of
// each source's own `quantile` of its scores on `validation` rows (or training rows when
// validation holds none for that label).
AttributorModel fit_attributor(const FeatureMatrix& training, const FeatureMatrix& validation, const GmmConfig& config,
                               double quantile = 0.05);

struct KMeansConfig {
    std::size_t restarts = 10;
    std::size_t max_iterations = 300;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
};

struct ClusterAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> labels;
    std::vector<double> centroids;  // k x D
    double inertia = 0.0;
    std::size_t restart = 0;
    std::vector<double> inertia_trace;  // chosen restart, one per Lloyd assignment step
};

ClusterAssignment kmeans(const FeatureMatrix& features, std::size_t k, const KMeansConfig& config);

double silhouette(const FeatureMatrix& features, std::span<const std::size_t> labels);

}  // namespace fsd
