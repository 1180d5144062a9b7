#include "fsd/tasks.hpp"

#include "fsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>

namespace fsd {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

std::vector<double> kmeans_plus_plus(const FeatureMatrix& x, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = x.rows;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> chosen{pick(rng)};
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(x.row(i), x.row(chosen.back())));
            total += nearest[i];
        }
        std::size_t next = pick(rng);
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                target -= nearest[i];
                if (target <= 0.0 && nearest[i] > 0.0) {
                    next = i;
                    break;
                }
            }
        }
        chosen.push_back(next);
    }
    std::vector<double> centroids;
    centroids.reserve(k * x.cols);
    for (std::size_t c : chosen) centroids.insert(centroids.end(), x.row(c).begin(), x.row(c).end());
    return centroids;
}

// Returns inertia; fills labels and per-point distances.
double assign(const FeatureMatrix& x, std::span<const double> centroids, std::size_t k,
              std::vector<std::size_t>& labels, std::vector<double>& distance) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double d = squared_distance(x.row(i), centroids.subspan(c * x.cols, x.cols));
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        labels[i] = arg;
        distance[i] = best;
        inertia += best;
    }
    return inertia;
}

ClusterAssignment lloyd(const FeatureMatrix& x, std::size_t k, const KMeansConfig& config, std::size_t restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    std::mt19937_64 rng(seq);
    ClusterAssignment out;
    out.k = k;
    out.restart = restart;
    out.centroids = kmeans_plus_plus(x, k, rng);
    out.labels.assign(x.rows, 0);
    std::vector<double> distance(x.rows);
    std::vector<std::size_t> sizes(k);
    const std::size_t dim = x.cols;

    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        out.inertia_trace.push_back(assign(x, out.centroids, k, out.labels, distance));

        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t label : out.labels) ++sizes[label];
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] != 0) continue;
            // Re-seed an empty cluster with the point farthest from its centroid.
            std::size_t far = x.rows;
            for (std::size_t i = 0; i < x.rows; ++i) {
                if (sizes[out.labels[i]] > 1 && (far == x.rows || distance[i] > distance[far])) far = i;
            }
            if (far == x.rows) break;
            --sizes[out.labels[far]];
            out.labels[far] = c;
            sizes[c] = 1;
            distance[far] = 0.0;
        }

        std::vector<double> next(k * dim, 0.0);
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto row = x.row(i);
            double* dst = next.data() + out.labels[i] * dim;
            for (std::size_t d = 0; d < dim; ++d) dst[d] += row[d];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t d = 0; d < dim; ++d) {
                double& v = next[c * dim + d];
                v = sizes[c] ? v / static_cast<double>(sizes[c]) : out.centroids[c * dim + d];
                const double diff = v - out.centroids[c * dim + d];
                shift += diff * diff;
            }
        }
        out.centroids = std::move(next);
        if (std::sqrt(shift) < config.tolerance) break;
    }
    out.inertia = assign(x, out.centroids, k, out.labels, distance);
    out.inertia_trace.push_back(out.inertia);
    return out;
}

}  // namespace

double interpolated_quantile(std::vector<double> values, double q) {
    require(!values.empty(), ErrorCode::EmptyValidation, "quantile of an empty set");
    require(q >= 0.0 && q <= 1.0, ErrorCode::InvalidArgument, "quantile must be within [0,1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

DetectorModel calibrate_detector(GaussianMixture model, std::span<const double> validation_scores, double quantile) {
    require(!validation_scores.empty(), ErrorCode::EmptyValidation, "detector calibration needs validation reals");
    DetectorModel out;
    out.threshold = interpolated_quantile(std::vector<double>(validation_scores.begin(), validation_scores.end()), quantile);
    require(std::isfinite(out.threshold), ErrorCode::InvariantViolation, "detector threshold is not finite");
    out.real_model = std::move(model);
    out.quantile = quantile;
    out.validation_size = validation_scores.size();
    return out;
}

DetectorModel calibrate_detector(GaussianMixture model, const FeatureMatrix& validation_reals, double quantile) {
    require(validation_reals.rows > 0, ErrorCode::EmptyValidation, "detector calibration needs validation reals");
    const auto scores = score_rows(model, validation_reals);
    return calibrate_detector(std::move(model), scores, quantile);
}

Detection detect(const DetectorModel& model, std::span<const double> x) {
    Detection out;
    out.score = log_likelihood(model.real_model, x);
    out.real = out.score >= model.threshold;
    return out;
}

void AttributorModel::validate() const {
    if (sources.empty()) fail(ErrorCode::InvariantViolation, "attributor needs at least one source");
    std::set<std::string> seen;
    for (const auto& [label, gmm] : sources) {
        if (label.empty()) fail(ErrorCode::InvariantViolation, "attributor source labels must be non-empty");
        if (!seen.insert(label).second) fail(ErrorCode::InvariantViolation, "duplicate source label " + label);
        gmm.validate();
        if (gmm.dimension() != dimension()) fail(ErrorCode::InvariantViolation, "source models disagree on dimension");
    }
    if (!std::is_sorted(sources.begin(), sources.end(), [](const auto& a, const auto& b) { return a.first < b.first; })) {
        fail(ErrorCode::InvariantViolation, "attributor sources must be sorted by label");
    }
    if (std::isnan(reject_threshold)) fail(ErrorCode::InvariantViolation, "rejection threshold is NaN");
}

Attribution decide_source(std::vector<double> scores, double reject_threshold) {
    require(!scores.empty(), ErrorCode::InvalidArgument, "no source scores");
    Attribution out;
    out.scores = std::move(scores);
    // Strict comparison keeps the first (lexicographically smallest) label on ties.
    for (std::size_t i = 1; i < out.scores.size(); ++i) {
        if (out.scores[i] > out.scores[out.best]) out.best = i;
    }
    if (!(out.scores[out.best] < reject_threshold)) out.source = out.best;
    return out;
}

Attribution attribute(const AttributorModel& model, std::span<const double> x) {
    require(x.size() == model.dimension(), ErrorCode::DimensionMismatch,
            "feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                std::to_string(model.dimension()));
    std::vector<double> scores;
    scores.reserve(model.sources.size());
    for (const auto& entry : model.sources) scores.push_back(log_likelihood(entry.second, x));
    return decide_source(std::move(scores), model.reject_threshold);
}

AttributorModel fit_attributor(const FeatureMatrix& training, const FeatureMatrix& validation, const GmmConfig& config,
                               double quantile) {
    require(training.labels.size() == training.rows && training.rows > 0, ErrorCode::InvalidArgument,
            "attributor training features must be labelled");
    std::set<std::string> labels(training.labels.begin(), training.labels.end());
    AttributorModel out;
    out.reject_threshold = std::numeric_limits<double>::infinity();
    for (const std::string& label : labels) {
        require(!label.empty(), ErrorCode::InvalidArgument, "source labels must be non-empty");
        const FeatureMatrix own = training.select_label(label);
        GaussianMixture gmm = fit_gmm(own, config).model;
        FeatureMatrix held = validation.labels.empty() ? FeatureMatrix{} : validation.select_label(label);
        const auto scores = score_rows(gmm, held.rows > 0 ? held : own);
        out.reject_threshold = std::min(out.reject_threshold, interpolated_quantile(scores, quantile));
        out.sources.emplace_back(label, std::move(gmm));
    }
    out.validate();
    return out;
}

ClusterAssignment kmeans(const FeatureMatrix& features, std::size_t k, const KMeansConfig& config) {
    require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
    require(features.rows >= k, ErrorCode::TooFewSamples,
            std::to_string(features.rows) + " samples cannot form " + std::to_string(k) + " clusters");
    require(config.restarts >= 1, ErrorCode::InvalidArgument, "need at least one restart");
    ClusterAssignment best;
    for (std::size_t r = 0; r < config.restarts; ++r) {
        ClusterAssignment candidate = lloyd(features, k, config, r);
        if (r == 0 || candidate.inertia < best.inertia) best = std::move(candidate);
    }
    return best;
}

double silhouette(const FeatureMatrix& features, std::span<const std::size_t> labels) {
    require(labels.size() == features.rows, ErrorCode::LengthMismatch, "one label per row required");
    std::map<std::size_t, std::size_t> sizes;
    for (std::size_t l : labels) ++sizes[l];
    require(sizes.size() >= 2, ErrorCode::SingleCluster, "silhouette needs at least two clusters");

    const std::size_t n = features.rows;
    double total = 0.0;
    std::map<std::size_t, double> sums;
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] == 1) continue;
        sums.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[labels[j]] += std::sqrt(squared_distance(features.row(i), features.row(j)));
        }
        const double a = sums[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, sum] : sums) {
            if (label != labels[i]) b = std::min(b, sum / static_cast<double>(sizes[label]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

}  // namespace fsd
