#include "fsd/self_description.hpp"

#include "fsd/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fsd {

namespace {

constexpr std::size_t kGramBlockRows = 1024;
constexpr double kExactRidge = 1e-8;
constexpr std::size_t kExactMaxDimension = 4096;

void check_pyramid(const ResidualPyramid& pyramid, std::size_t side) {
    require(pyramid.scale_count() >= 1 && pyramid.filter_count() >= 1, ErrorCode::ShapeMismatch,
            "pyramid must hold at least one scale and one residual");
    require(side >= 3 && side % 2 == 1, ErrorCode::InvalidArgument, "model neighborhood must be odd and >= 3");
    for (const auto& scale : pyramid.scales) {
        require(scale.size() == pyramid.filter_count(), ErrorCode::ShapeMismatch, "scales disagree on residual count");
        for (const Field& f : scale) {
            require(f.width() == scale.front().width() && f.height() == scale.front().height(),
                    ErrorCode::ShapeMismatch, "residuals within a scale must share dimensions");
        }
        require(scale.front().width() >= side && scale.front().height() >= side, ErrorCode::ShapeMismatch,
                "scale smaller than the model neighborhood");
    }
}

std::size_t valid_locations(const ResidualPyramid& pyramid, std::size_t side) {
    std::size_t n = 0;
    for (const auto& scale : pyramid.scales) {
        n += (scale.front().width() - side + 1) * (scale.front().height() - side + 1);
    }
    return n;
}

// Coupled error field at one scale: sum_k (r_k - rhat_k) over the valid region.
Field coupled_error(const std::vector<Field>& residuals, const SelfDescription& phi) {
    const std::size_t side = phi.side();
    const std::size_t half = side / 2;
    const std::size_t out_w = residuals.front().width() - side + 1;
    const std::size_t out_h = residuals.front().height() - side + 1;
    Field error(out_w, out_h);
    for (std::size_t k = 0; k < residuals.size(); ++k) {
        const Field& r = residuals[k];
        for (std::size_t row = 0; row < out_h; ++row) {
            const double* src = r.row(row + half) + half;
            double* dst = error.row(row);
            for (std::size_t c = 0; c < out_w; ++c) dst[c] += src[c];
        }
        for (std::size_t a = 0; a < side; ++a) {
            for (std::size_t b = 0; b < side; ++b) {
                if (a == half && b == half) continue;
                const double w = phi.coefficient(k, a, b);
                if (w == 0.0) continue;
                for (std::size_t row = 0; row < out_h; ++row) {
                    const double* src = r.row(row + a) + b;
                    double* dst = error.row(row);
                    for (std::size_t c = 0; c < out_w; ++c) dst[c] -= w * src[c];
                }
            }
        }
    }
    return error;
}

struct NormalEquations {
    Eigen::MatrixXd gram;  // A^T A / N
    Eigen::VectorXd rhs;   // A^T y / N
    double target_power = 0.0;  // y^T y / N
};

// Streams design-matrix rows through blocked rank updates; memory stays O(D^2).
NormalEquations accumulate_normal_equations(const ResidualPyramid& pyramid, std::size_t side) {
    const std::size_t count = pyramid.filter_count();
    const std::size_t taps = side * side;
    const std::size_t half = side / 2;
    const auto dim = static_cast<Eigen::Index>(description_dimension(count, side));

    NormalEquations eq;
    eq.gram = Eigen::MatrixXd::Zero(dim, dim);
    eq.rhs = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd block(dim, static_cast<Eigen::Index>(kGramBlockRows));
    Eigen::VectorXd targets(static_cast<Eigen::Index>(kGramBlockRows));
    Eigen::Index filled = 0;

    auto flush = [&] {
        if (filled == 0) return;
        const auto cols = block.leftCols(filled);
        eq.gram.selfadjointView<Eigen::Lower>().rankUpdate(cols);
        eq.rhs.noalias() += cols * targets.head(filled);
        eq.target_power += targets.head(filled).squaredNorm();
        filled = 0;
    };

    for (const auto& scale : pyramid.scales) {
        const std::size_t out_w = scale.front().width() - side + 1;
        const std::size_t out_h = scale.front().height() - side + 1;
        for (std::size_t row = 0; row < out_h; ++row) {
            for (std::size_t col = 0; col < out_w; ++col) {
                double* column = block.col(filled).data();
                double y = 0.0;
                Eigen::Index f = 0;
                for (std::size_t k = 0; k < count; ++k) {
                    const Field& r = scale[k];
                    y += r(row + half, col + half);
                    for (std::size_t a = 0; a < side; ++a) {
                        const double* src = r.row(row + a) + col;
                        for (std::size_t b = 0; b < side; ++b) {
                            if (a * side + b == taps / 2) continue;
                            column[f++] = src[b];
                        }
                    }
                }
                targets[filled] = y;
                if (++filled == static_cast<Eigen::Index>(kGramBlockRows)) flush();
            }
        }
    }
    flush();
    const double inv_n = 1.0 / static_cast<double>(valid_locations(pyramid, side));
    eq.gram = eq.gram.selfadjointView<Eigen::Lower>();
    eq.gram *= inv_n;
    eq.rhs *= inv_n;
    eq.target_power *= inv_n;
    return eq;
}

SelfDescription finish(const ResidualPyramid& pyramid, std::size_t side, const Eigen::VectorXd& free) {
    SelfDescription phi = SelfDescription::from_vector(pyramid.filter_count(), side,
                                                       std::span<const double>(free.data(), free.size()));
    phi.scale_count = pyramid.scale_count();
    phi.objective = model_error(pyramid, phi);
    return phi;
}

}  // namespace

ResidualPyramid build_pyramid(const ResidualStack& stack, std::size_t scale_count, std::size_t neighborhood) {
    require(scale_count >= 1, ErrorCode::InvalidArgument, "scale count must be at least 1");
    require(stack.count() >= 1, ErrorCode::ShapeMismatch, "residual stack is empty");
    ResidualPyramid pyramid;
    pyramid.scales.push_back(stack.fields);
    for (std::size_t l = 1; l < scale_count; ++l) {
        const auto& previous = pyramid.scales.back();
        if (previous.front().width() < 2 || previous.front().height() < 2) {
            fail(ErrorCode::TooSmall, "residuals too small for " + std::to_string(scale_count) + " scales");
        }
        std::vector<Field> next;
        next.reserve(previous.size());
        for (const Field& f : previous) next.push_back(downsample_dyadic(f, 2));
        pyramid.scales.push_back(std::move(next));
    }
    const Field& coarsest = pyramid.scales.back().front();
    if (coarsest.width() < neighborhood || coarsest.height() < neighborhood) {
        fail(ErrorCode::TooSmall, "coarsest scale " + std::to_string(coarsest.width()) + "x" +
                                      std::to_string(coarsest.height()) + " is below the " +
                                      std::to_string(neighborhood) + "x" + std::to_string(neighborhood) +
                                      " model neighborhood");
    }
    return pyramid;
}

SelfDescription::SelfDescription(std::size_t filter_count, std::size_t side)
    : filter_count_(filter_count), side_(side), grids_(filter_count * side * side, 0.0) {
    require(side >= 3 && side % 2 == 1, ErrorCode::InvalidArgument, "description side must be odd and >= 3");
}

SelfDescription SelfDescription::from_vector(std::size_t filter_count, std::size_t side,
                                             std::span<const double> features) {
    SelfDescription phi(filter_count, side);
    require(features.size() == phi.dimension(), ErrorCode::DimensionMismatch,
            "feature vector has " + std::to_string(features.size()) + " entries, expected " +
                std::to_string(phi.dimension()));
    const std::size_t taps = side * side;
    std::size_t f = 0;
    for (std::size_t k = 0; k < filter_count; ++k) {
        for (std::size_t t = 0; t < taps; ++t) {
            if (t == taps / 2) continue;
            phi.grids_[k * taps + t] = features[f++];
        }
    }
    return phi;
}

void SelfDescription::set_coefficient(std::size_t k, std::size_t a, std::size_t b, double value) {
    require(!(a == side_ / 2 && b == side_ / 2), ErrorCode::InvalidArgument, "center coefficient is pinned to 0");
    grids_[(k * side_ + a) * side_ + b] = value;
}

std::vector<double> SelfDescription::to_vector() const {
    std::vector<double> out;
    out.reserve(dimension());
    const std::size_t taps = side_ * side_;
    for (std::size_t k = 0; k < filter_count_; ++k) {
        for (std::size_t t = 0; t < taps; ++t) {
            if (t != taps / 2) out.push_back(grids_[k * taps + t]);
        }
    }
    return out;
}

double model_error(const ResidualPyramid& pyramid, const SelfDescription& phi) {
    check_pyramid(pyramid, phi.side());
    require(phi.filter_count() == pyramid.filter_count(), ErrorCode::ShapeMismatch,
            "description and pyramid disagree on residual count");
    double total = 0.0;
    for (const auto& scale : pyramid.scales) {
        const Field error = coupled_error(scale, phi);
        for (double e : error.values()) total += e * e;
    }
    return total / static_cast<double>(valid_locations(pyramid, phi.side()));
}

LossGradient model_error_gradient(const ResidualPyramid& pyramid, const SelfDescription& phi) {
    check_pyramid(pyramid, phi.side());
    require(phi.filter_count() == pyramid.filter_count(), ErrorCode::ShapeMismatch,
            "description and pyramid disagree on residual count");
    const std::size_t side = phi.side();
    const std::size_t half = side / 2;
    LossGradient out;
    out.gradient.assign(phi.dimension(), 0.0);
    for (const auto& scale : pyramid.scales) {
        const Field error = coupled_error(scale, phi);
        for (double e : error.values()) out.value += e * e;
        std::size_t f = 0;
        for (std::size_t k = 0; k < scale.size(); ++k) {
            for (std::size_t a = 0; a < side; ++a) {
                for (std::size_t b = 0; b < side; ++b) {
                    if (a == half && b == half) continue;
                    double acc = 0.0;
                    for (std::size_t row = 0; row < error.height(); ++row) {
                        const double* src = scale[k].row(row + a) + b;
                        const double* err = error.row(row);
                        for (std::size_t c = 0; c < error.width(); ++c) acc += err[c] * src[c];
                    }
                    out.gradient[f++] -= 2.0 * acc;
                }
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(valid_locations(pyramid, side));
    out.value *= inv_n;
    for (double& g : out.gradient) g *= inv_n;
    return out;
}

void FitConfig::validate() const {
    require(learning_rate > 0.0, ErrorCode::InvalidArgument, "fit learning rate must be > 0");
    require(plateau_factor > 0.0 && plateau_factor < 1.0, ErrorCode::InvalidArgument, "plateau factor must be in (0,1)");
    require(patience >= 1, ErrorCode::InvalidArgument, "patience must be at least 1");
    require(improvement_floor >= 0.0, ErrorCode::InvalidArgument, "improvement floor must be >= 0");
    require(min_learning_rate > 0.0, ErrorCode::InvalidArgument, "minimum learning rate must be > 0");
}

SelfDescription fit_self_description(const ResidualPyramid& pyramid, std::size_t side, const FitConfig& config,
                                     FitTrace* trace) {
    config.validate();
    check_pyramid(pyramid, side);
    const NormalEquations eq = accumulate_normal_equations(pyramid, side);
    const Eigen::Index dim = eq.rhs.size();

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd best_phi = phi;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd gram_phi(dim);
    Eigen::VectorXd grad(dim);
    double beta1_t = 1.0;
    double beta2_t = 1.0;
    double lr = config.learning_rate;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stalled = 0;
    std::size_t iteration = 0;

    for (; iteration < config.max_iterations; ++iteration) {
        gram_phi.noalias() = eq.gram * phi;
        grad = 2.0 * (gram_phi - eq.rhs);
        const double objective = phi.dot(gram_phi) - 2.0 * eq.rhs.dot(phi) + eq.target_power;
        if (!std::isfinite(objective) || !grad.allFinite()) {
            fail(ErrorCode::NonFiniteObjective, "self-description objective diverged at iteration " +
                                                    std::to_string(iteration));
        }
        if (trace) {
            trace->objective.push_back(objective);
            trace->learning_rate.push_back(lr);
        }
        if (objective < best * (1.0 - config.improvement_floor)) {
            stalled = 0;
        } else if (++stalled >= config.patience) {
            lr *= config.plateau_factor;
            stalled = 0;
            if (trace) trace->halvings.push_back(iteration);
        }
        if (objective < best) {
            best = objective;
            best_phi = phi;
        }
        if (lr < config.min_learning_rate || grad.isZero(0.0)) break;

        beta1_t *= kBeta1;
        beta2_t *= kBeta2;
        m = kBeta1 * m + (1.0 - kBeta1) * grad;
        v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
        phi.array() -= lr * (m.array() / (1.0 - beta1_t)) / ((v.array() / (1.0 - beta2_t)).sqrt() + kEps);
    }

    SelfDescription out = finish(pyramid, side, best_phi);
    out.iterations = iteration;
    if (!std::isfinite(out.objective)) fail(ErrorCode::NonFiniteObjective, "final objective is not finite");
    return out;
}

SelfDescription fit_self_description_exact(const ResidualPyramid& pyramid, std::size_t side) {
    check_pyramid(pyramid, side);
    const std::size_t count = pyramid.filter_count();
    const std::size_t dim = description_dimension(count, side);
    require(dim <= kExactMaxDimension, ErrorCode::InvalidArgument,
            "exact solver limited to " + std::to_string(kExactMaxDimension) + " coefficients");
    const std::size_t n = valid_locations(pyramid, side);
    const std::size_t half = side / 2;

    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    Eigen::Index row_index = 0;
    for (const auto& scale : pyramid.scales) {
        const std::size_t out_w = scale.front().width() - side + 1;
        const std::size_t out_h = scale.front().height() - side + 1;
        for (std::size_t row = 0; row < out_h; ++row) {
            for (std::size_t col = 0; col < out_w; ++col, ++row_index) {
                double y = 0.0;
                Eigen::Index f = 0;
                for (std::size_t k = 0; k < count; ++k) {
                    y += scale[k](row + half, col + half);
                    for (std::size_t a = 0; a < side; ++a) {
                        for (std::size_t b = 0; b < side; ++b) {
                            if (a == half && b == half) continue;
                            design(row_index, f++) = scale[k](row + a, col + b);
                        }
                    }
                }
                target[row_index] = y;
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd normal = (design.transpose() * design) * inv_n;
    normal.diagonal().array() += kExactRidge;
    const Eigen::VectorXd rhs = (design.transpose() * target) * inv_n;
    const Eigen::VectorXd solution = normal.ldlt().solve(rhs);
    SelfDescription out = finish(pyramid, side, solution);
    out.iterations = 0;
    return out;
}

SelfDescription describe_image(const Field& image, const FilterBank& bank, const DescribeConfig& config) {
    const ResidualStack stack = extract_residuals(bank, image);
    const ResidualPyramid pyramid = build_pyramid(stack, config.scale_count, config.side);
    SelfDescription phi = fit_self_description(pyramid, config.side, config.fit);
    phi.bank_hash = bank.hash();
    return phi;
}

}  // namespace fsd
