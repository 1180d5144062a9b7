#include "fsd/mixture.hpp"

#include "fsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace fsd {

namespace {

constexpr double kDegenerateMass = 1e-8;
constexpr double kWeightTolerance = 1e-9;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double component_log_density(std::span<const double> z, std::span<const double> mean, std::span<const double> var) {
    double acc = 0.0;
    for (std::size_t d = 0; d < z.size(); ++d) {
        const double diff = z[d] - mean[d];
        acc += kLog2Pi + std::log(var[d]) + diff * diff / var[d];
    }
    return -0.5 * acc;
}

double log_sum_exp(std::span<const double> values) {
    const double top = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(top)) return top;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - top);
    return top + std::log(sum);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

// k-means++ seeding followed by one assignment/update pass.
std::vector<std::size_t> initial_partition(const FeatureMatrix& z, std::size_t clusters, std::mt19937_64& rng) {
    const std::size_t n = z.rows;
    std::vector<std::size_t> centers;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    centers.push_back(pick(rng));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (centers.size() < clusters) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(z.row(i), z.row(centers.back())));
            total += nearest[i];
        }
        std::size_t chosen = pick(rng);
        if (total > 0.0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                target -= nearest[i];
                if (target <= 0.0 && nearest[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.push_back(chosen);
    }
    std::vector<double> centroids;
    for (std::size_t c : centers) centroids.insert(centroids.end(), z.row(c).begin(), z.row(c).end());

    std::vector<std::size_t> assignment(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < clusters; ++c) {
            const double d = squared_distance(z.row(i), std::span<const double>(centroids).subspan(c * z.cols, z.cols));
            if (d < best) {
                best = d;
                assignment[i] = c;
            }
        }
    }
    return assignment;
}

}  // namespace

FeatureStats FeatureStats::fit(const FeatureMatrix& features) {
    require(features.rows >= 1 && features.cols >= 1, ErrorCode::TooFewSamples, "cannot standardize an empty matrix");
    FeatureStats stats;
    stats.mean.assign(features.cols, 0.0);
    stats.stddev.assign(features.cols, 0.0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto row = features.row(i);
        for (std::size_t d = 0; d < features.cols; ++d) stats.mean[d] += row[d];
    }
    for (double& m : stats.mean) m /= static_cast<double>(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto row = features.row(i);
        for (std::size_t d = 0; d < features.cols; ++d) {
            const double diff = row[d] - stats.mean[d];
            stats.stddev[d] += diff * diff;
        }
    }
    for (double& s : stats.stddev) s = std::max(std::sqrt(s / static_cast<double>(features.rows)), kStdFloor);
    return stats;
}

std::vector<double> FeatureStats::standardize(std::span<const double> x) const {
    require(x.size() == dimension(), ErrorCode::DimensionMismatch,
            "feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                std::to_string(dimension()));
    std::vector<double> z(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) z[d] = (x[d] - mean[d]) / stddev[d];
    return z;
}

std::vector<double> FeatureStats::unstandardize(std::span<const double> z) const {
    require(z.size() == dimension(), ErrorCode::DimensionMismatch, "dimension mismatch");
    std::vector<double> x(z.size());
    for (std::size_t d = 0; d < z.size(); ++d) x[d] = z[d] * stddev[d] + mean[d];
    return x;
}

void GaussianMixture::validate() const {
    const std::size_t c = weights.size();
    const std::size_t d = stats.dimension();
    if (c == 0 || d == 0 || stats.stddev.size() != d || means.size() != c * d || variances.size() != c * d) {
        fail(ErrorCode::InvariantViolation, "mixture shape: components, means, variances and stats disagree");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::InvariantViolation, "mixture weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightTolerance) {
        fail(ErrorCode::InvariantViolation, "mixture weights must sum to 1 (simplex), got " + std::to_string(sum));
    }
    for (double v : variances) {
        if (!(v >= kVarianceFloor) || !std::isfinite(v)) {
            fail(ErrorCode::InvariantViolation, "mixture variances must be finite and >= 1e-6 (variance floor)");
        }
    }
    for (double m : means) {
        if (!std::isfinite(m)) fail(ErrorCode::InvariantViolation, "mixture means must be finite");
    }
    for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite(stats.mean[i]) || !(stats.stddev[i] >= kStdFloor) || !std::isfinite(stats.stddev[i])) {
            fail(ErrorCode::InvariantViolation, "feature stats must be finite with std >= 1e-8 (std floor)");
        }
    }
}

GmmFit fit_gmm(const FeatureMatrix& features, const GmmConfig& config) {
    const std::size_t n = features.rows;
    const std::size_t dim = features.cols;
    const std::size_t clusters = config.components;
    require(clusters >= 1, ErrorCode::InvalidArgument, "mixture needs at least one component");
    require(dim >= 1, ErrorCode::InvalidArgument, "features need at least one dimension");
    require(n >= clusters, ErrorCode::TooFewSamples,
            std::to_string(n) + " samples cannot support " + std::to_string(clusters) + " components");
    require(config.variance_floor >= kVarianceFloor, ErrorCode::InvalidArgument, "variance floor below 1e-6");

    GmmFit fit;
    GaussianMixture& model = fit.model;
    model.stats = FeatureStats::fit(features);
    FeatureMatrix z(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = model.stats.standardize(features.row(i));
        std::copy(s.begin(), s.end(), z.row(i).begin());
    }
    std::vector<double> global_var(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) global_var[d] += z.row(i)[d] * z.row(i)[d];
    }
    for (double& v : global_var) v = std::max(v / static_cast<double>(n), config.variance_floor);

    std::mt19937_64 rng(config.seed);
    const auto partition = initial_partition(z, clusters, rng);
    std::vector<double> resp(n * clusters, 0.0);
    for (std::size_t i = 0; i < n; ++i) resp[i * clusters + partition[i]] = 1.0;

    model.weights.assign(clusters, 0.0);
    model.means.assign(clusters * dim, 0.0);
    model.variances.assign(clusters * dim, 0.0);
    std::vector<double> point_ll(n, 0.0);
    std::vector<double> log_terms(clusters);

    auto m_step = [&] {
        for (std::size_t c = 0; c < clusters; ++c) {
            double mass = 0.0;
            for (std::size_t i = 0; i < n; ++i) mass += resp[i * clusters + c];
            double* mean = model.means.data() + c * dim;
            double* var = model.variances.data() + c * dim;
            if (mass < kDegenerateMass) {
                if (++fit.reseeds >= clusters) {
                    fail(ErrorCode::DegenerateComponent, "mixture components collapsed " +
                                                             std::to_string(fit.reseeds) + " times");
                }
                const std::size_t worst = static_cast<std::size_t>(
                    std::min_element(point_ll.begin(), point_ll.end()) - point_ll.begin());
                std::copy(z.row(worst).begin(), z.row(worst).end(), mean);
                std::copy(global_var.begin(), global_var.end(), var);
                model.weights[c] = 1.0 / static_cast<double>(n);
                point_ll[worst] = std::numeric_limits<double>::infinity();
                continue;
            }
            std::fill(mean, mean + dim, 0.0);
            std::fill(var, var + dim, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp[i * clusters + c];
                if (r == 0.0) continue;
                const auto row = z.row(i);
                for (std::size_t d = 0; d < dim; ++d) mean[d] += r * row[d];
            }
            for (std::size_t d = 0; d < dim; ++d) mean[d] /= mass;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp[i * clusters + c];
                if (r == 0.0) continue;
                const auto row = z.row(i);
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = row[d] - mean[d];
                    var[d] += r * diff * diff;
                }
            }
            for (std::size_t d = 0; d < dim; ++d) var[d] = std::max(var[d] / mass, config.variance_floor);
            model.weights[c] = mass / static_cast<double>(n);
        }
        double total = 0.0;
        for (double w : model.weights) total += w;
        for (double& w : model.weights) w /= total;
    };

    m_step();
    double previous = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < clusters; ++c) {
                log_terms[c] = std::log(model.weights[c]) +
                               component_log_density(z.row(i), model.mean(c), model.variance(c));
            }
            const double lse = log_sum_exp(log_terms);
            point_ll[i] = lse;
            total += lse;
            for (std::size_t c = 0; c < clusters; ++c) resp[i * clusters + c] = std::exp(log_terms[c] - lse);
        }
        const double mean_ll = total / static_cast<double>(n);
        fit.mean_log_likelihood.push_back(mean_ll);
        if (iter > 0 && mean_ll - previous < config.tolerance * std::abs(previous)) break;
        previous = mean_ll;
        m_step();
    }
    model.validate();
    return fit;
}

double log_likelihood_standardized(const GaussianMixture& model, std::span<const double> z) {
    require(z.size() == model.dimension(), ErrorCode::DimensionMismatch, "dimension mismatch");
    std::vector<double> terms(model.components());
    for (std::size_t c = 0; c < model.components(); ++c) {
        terms[c] = std::log(model.weights[c]) + component_log_density(z, model.mean(c), model.variance(c));
    }
    return log_sum_exp(terms);
}

double log_likelihood(const GaussianMixture& model, std::span<const double> x) {
    return log_likelihood_standardized(model, model.stats.standardize(x));
}

std::vector<double> responsibilities(const GaussianMixture& model, std::span<const double> x) {
    const auto z = model.stats.standardize(x);
    std::vector<double> terms(model.components());
    for (std::size_t c = 0; c < model.components(); ++c) {
        terms[c] = std::log(model.weights[c]) + component_log_density(z, model.mean(c), model.variance(c));
    }
    const double lse = log_sum_exp(terms);
    for (double& t : terms) t = std::exp(t - lse);
    return terms;
}

std::vector<double> score_rows(const GaussianMixture& model, const FeatureMatrix& features) {
    require(features.cols == model.dimension(), ErrorCode::DimensionMismatch,
            "features have dimension " + std::to_string(features.cols) + ", model expects " +
                std::to_string(model.dimension()));
    std::vector<double> out(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) out[i] = log_likelihood(model, features.row(i));
    return out;
}

}  // namespace fsd
