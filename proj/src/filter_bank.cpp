#include "fsd/filter_bank.hpp"

#include "fsd/error.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace fsd {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
        h ^= (word >> (8 * i)) & 0xFFu;
        h *= kFnvPrime;
    }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_shape(std::span<const double> weights, std::size_t count, std::size_t side) {
    require(count >= 1, ErrorCode::InvalidArgument, "filter count must be at least 1");
    require(side >= 3 && side % 2 == 1, ErrorCode::InvalidArgument,
            "filter side must be odd and at least 3, got " + std::to_string(side));
    require(weights.size() == count * side * side, ErrorCode::ShapeMismatch, "weight count does not match K*M*M");
}

// Accumulates out += w * image shifted by (a, b) over the valid region.
void accumulate_prediction(const Field& image, std::span<const double> filter, std::size_t side, Field& out) {
    const std::size_t center = (side / 2) * side + side / 2;
    const std::size_t out_w = out.width();
    const std::size_t out_h = out.height();
    for (std::size_t a = 0; a < side; ++a) {
        for (std::size_t b = 0; b < side; ++b) {
            const std::size_t tap = a * side + b;
            if (tap == center) continue;
            const double w = filter[tap];
            for (std::size_t r = 0; r < out_h; ++r) {
                const double* src = image.row(r + a) + b;
                double* dst = out.row(r);
                for (std::size_t c = 0; c < out_w; ++c) dst[c] += w * src[c];
            }
        }
    }
}

Field residual_field(const Field& image, std::span<const double> filter, std::size_t side) {
    const std::size_t half = side / 2;
    Field prediction(image.width() - side + 1, image.height() - side + 1);
    accumulate_prediction(image, filter, side, prediction);
    for (std::size_t r = 0; r < prediction.height(); ++r) {
        const double* src = image.row(r + half) + half;
        double* dst = prediction.row(r);
        for (std::size_t c = 0; c < prediction.width(); ++c) dst[c] = src[c] - dst[c];
    }
    return prediction;
}

void require_window(const Field& image, std::size_t side) {
    if (image.width() < side || image.height() < side) {
        fail(ErrorCode::TooSmall, std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                                      " cannot hold a " + std::to_string(side) + "x" + std::to_string(side) +
                                      " window");
    }
}

}  // namespace

FilterBank::FilterBank(std::size_t count, std::size_t side, std::vector<double> weights)
    : count_(count), side_(side), weights_(std::move(weights)) {
    check_filter_constraints(weights_, count_, side_);
}

std::uint64_t FilterBank::hash() const noexcept {
    std::uint64_t h = kFnvOffset;
    fnv_mix(h, count_);
    fnv_mix(h, side_);
    for (double w : weights_) fnv_mix(h, std::bit_cast<std::uint64_t>(w));
    return h;
}

void check_filter_constraints(std::span<const double> weights, std::size_t count, std::size_t side) {
    if (count == 0 || side < 3 || side % 2 == 0 || weights.size() != count * side * side) {
        fail(ErrorCode::InvariantViolation, "filter bank shape: need K >= 1, odd M >= 3 and K*M*M weights");
    }
    const std::size_t taps = side * side;
    const std::size_t center = taps / 2;
    for (std::size_t k = 0; k < count; ++k) {
        const auto filter = weights.subspan(k * taps, taps);
        for (double w : filter) {
            if (!std::isfinite(w)) fail(ErrorCode::InvariantViolation, "filter " + std::to_string(k) + ": non-finite weight");
        }
        if (filter[center] != 0.0) {
            fail(ErrorCode::InvariantViolation, "filter " + std::to_string(k) + ": center weight must be 0");
        }
        const double sum = std::accumulate(filter.begin(), filter.end(), 0.0);
        if (std::abs(sum - 1.0) > kFilterSumTolerance) {
            fail(ErrorCode::InvariantViolation,
                 "filter " + std::to_string(k) + ": weights must sum to 1 (sum constraint), got " + std::to_string(sum));
        }
    }
}

void project_constraints(std::span<double> grid, std::size_t side) {
    require(side % 2 == 1 && grid.size() == side * side, ErrorCode::ShapeMismatch, "grid must be M x M with M odd");
    const std::size_t center = grid.size() / 2;
    grid[center] = 0.0;
    const double sum = std::accumulate(grid.begin(), grid.end(), 0.0);
    const double shift = (1.0 - sum) / static_cast<double>(grid.size() - 1);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i != center) grid[i] += shift;
    }
}

std::vector<double> project_constraints(std::vector<double> grid, std::size_t side) {
    project_constraints(std::span<double>(grid), side);
    return grid;
}

std::vector<Field> predict_scene(const FilterBank& bank, const Field& image) {
    require_window(image, bank.side());
    std::vector<Field> out;
    out.reserve(bank.count());
    for (std::size_t k = 0; k < bank.count(); ++k) {
        Field prediction(image.width() - bank.side() + 1, image.height() - bank.side() + 1);
        accumulate_prediction(image, bank.filter(k), bank.side(), prediction);
        out.push_back(std::move(prediction));
    }
    return out;
}

ResidualStack extract_residuals(const FilterBank& bank, const Field& image) {
    require_window(image, bank.side());
    ResidualStack stack;
    stack.source_width = image.width();
    stack.source_height = image.height();
    stack.fields.reserve(bank.count());
    for (std::size_t k = 0; k < bank.count(); ++k) {
        stack.fields.push_back(residual_field(image, bank.filter(k), bank.side()));
    }
    return stack;
}

std::vector<double> singular_values(std::span<const double> weights, std::size_t count, std::size_t side) {
    check_shape(weights, count, side);
    const Eigen::Map<const RowMatrix> w(weights.data(), static_cast<Eigen::Index>(count),
                                        static_cast<Eigen::Index>(side * side));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
    const auto& s = svd.singularValues();
    return std::vector<double>(s.data(), s.data() + s.size());
}

double min_singular_value(std::span<const double> weights, std::size_t count, std::size_t side) {
    const auto s = singular_values(weights, count, side);
    return *std::min_element(s.begin(), s.end());
}

LossGradient diversity_loss(std::span<const double> weights, std::size_t count, std::size_t side, double alpha) {
    check_shape(weights, count, side);
    require(alpha > 0.0, ErrorCode::InvalidArgument, "alpha must be positive");
    const auto rows = static_cast<Eigen::Index>(count);
    const auto cols = static_cast<Eigen::Index>(side * side);
    const Eigen::Map<const RowMatrix> w(weights.data(), rows, cols);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sigma = svd.singularValues();

    LossGradient out;
    Eigen::VectorXd inv(sigma.size());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        out.value -= std::log(sigma[i] + alpha);
        inv[i] = 1.0 / (sigma[i] + alpha);
    }
    // d sigma_i / dW = u_i v_i^T
    const RowMatrix grad = -(svd.matrixU() * inv.asDiagonal() * svd.matrixV().transpose());
    out.gradient.assign(grad.data(), grad.data() + grad.size());
    const std::size_t taps = side * side;
    for (std::size_t k = 0; k < count; ++k) out.gradient[k * taps + taps / 2] = 0.0;
    return out;
}

LossGradient energy_loss(std::span<const double> weights, std::size_t count, std::size_t side,
                         std::span<const Field> batch) {
    check_shape(weights, count, side);
    require(!batch.empty(), ErrorCode::EmptyBatch, "energy loss needs at least one image");
    const std::size_t taps = side * side;
    const std::size_t center = taps / 2;

    LossGradient out;
    out.gradient.assign(weights.size(), 0.0);
    std::size_t locations = 0;
    for (const Field& image : batch) {
        require_window(image, side);
        for (std::size_t k = 0; k < count; ++k) {
            const Field residual = residual_field(image, weights.subspan(k * taps, taps), side);
            for (double r : residual.values()) out.value += r * r;
            double* grad = out.gradient.data() + k * taps;
            for (std::size_t a = 0; a < side; ++a) {
                for (std::size_t b = 0; b < side; ++b) {
                    const std::size_t tap = a * side + b;
                    if (tap == center) continue;
                    double acc = 0.0;
                    for (std::size_t r = 0; r < residual.height(); ++r) {
                        const double* src = image.row(r + a) + b;
                        const double* res = residual.row(r);
                        for (std::size_t c = 0; c < residual.width(); ++c) acc += res[c] * src[c];
                    }
                    grad[tap] -= 2.0 * acc;
                }
            }
        }
        locations += (image.width() - side + 1) * (image.height() - side + 1);
    }
    const double norm = 1.0 / (static_cast<double>(locations) * static_cast<double>(count));
    out.value *= norm;
    for (double& g : out.gradient) g *= norm;
    return out;
}

void TrainConfig::validate() const {
    require(filter_count >= 1, ErrorCode::InvalidArgument, "filter count must be at least 1");
    require(side >= 3 && side % 2 == 1, ErrorCode::InvalidArgument, "filter side must be odd and at least 3");
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::InvalidArgument, "lambda must be >= 0");
    require(alpha > 0.0, ErrorCode::InvalidArgument, "alpha must be > 0");
    require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning rate must be > 0");
    require(crop >= side, ErrorCode::InvalidArgument, "crop must be at least the filter side");
    require(crops_per_image >= 1, ErrorCode::InvalidArgument, "crops per image must be at least 1");
}

TrainResult train_filter_bank(std::span<const GrayImage> corpus, const TrainConfig& config,
                              const StepObserver& observer) {
    config.validate();
    require(!corpus.empty(), ErrorCode::EmptyCorpus, "training corpus is empty");
    const std::size_t count = config.filter_count;
    const std::size_t side = config.side;
    const std::size_t taps = side * side;
    for (const GrayImage& image : corpus) require_window(image.field(), side);

    std::mt19937_64 rng(config.seed);
    const double bound = 1.0 / static_cast<double>(taps);
    std::uniform_real_distribution<double> init(-bound, bound);
    std::vector<double> weights(count * taps);
    for (double& w : weights) w = init(rng);
    for (std::size_t k = 0; k < count; ++k) project_constraints(std::span<double>(weights).subspan(k * taps, taps), side);

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    std::vector<double> m(weights.size(), 0.0);
    std::vector<double> v(weights.size(), 0.0);
    double beta1_t = 1.0;
    double beta2_t = 1.0;

    TrainResult result;
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    std::vector<Field> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t index : order) {
            const Field& image = corpus[index].field();
            const std::size_t cw = std::min(config.crop, image.width());
            const std::size_t ch = std::min(config.crop, image.height());
            batch.clear();
            for (std::size_t i = 0; i < config.crops_per_image; ++i) {
                const std::size_t r0 = static_cast<std::size_t>(rng() % (image.height() - ch + 1));
                const std::size_t c0 = static_cast<std::size_t>(rng() % (image.width() - cw + 1));
                batch.push_back(image.crop(r0, c0, cw, ch));
            }

            const LossGradient energy = energy_loss(weights, count, side, batch);
            const LossGradient diversity = diversity_loss(weights, count, side, config.alpha);
            TrainStep record;
            record.energy = energy.value;
            record.diversity = diversity.value;
            record.total = energy.value + config.lambda * diversity.value;
            record.sigma_min = min_singular_value(weights, count, side);
            if (!std::isfinite(record.total)) {
                fail(ErrorCode::NonFiniteLoss, "loss diverged at step " + std::to_string(step) +
                                                   "; lower the learning rate or lambda");
            }
            if (step == 0) result.initial = record;
            result.trace.push_back(record);

            beta1_t *= kBeta1;
            beta2_t *= kBeta2;
            for (std::size_t i = 0; i < weights.size(); ++i) {
                const double g = energy.gradient[i] + config.lambda * diversity.gradient[i];
                m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
                v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
                const double m_hat = m[i] / (1.0 - beta1_t);
                const double v_hat = v[i] / (1.0 - beta2_t);
                weights[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + kEps);
            }
            for (std::size_t k = 0; k < count; ++k) {
                project_constraints(std::span<double>(weights).subspan(k * taps, taps), side);
            }
            for (double w : weights) {
                if (!std::isfinite(w)) fail(ErrorCode::NonFiniteLoss, "weights diverged at step " + std::to_string(step));
            }
            if (observer) observer(step, weights);
            ++step;
        }
    }
    result.bank = FilterBank(count, side, std::move(weights));
    return result;
}

FilterBank fixed_highpass_bank(HighpassKind kind) {
    if (kind == HighpassKind::Square3x3) {
        std::vector<double> w(9, 0.125);
        w[4] = 0.0;
        return FilterBank(1, 3, std::move(w));
    }
    // KV predictor: the non-center coefficients sum to 12.
    static constexpr double kSquare5x5[25] = {
        -1, 2,  -2, 2,  -1,
        2,  -6, 8,  -6, 2,
        -2, 8,  0,  8,  -2,
        2,  -6, 8,  -6, 2,
        -1, 2,  -2, 2,  -1,
    };
    std::vector<double> w(25);
    for (std::size_t i = 0; i < 25; ++i) w[i] = kSquare5x5[i] / 12.0;
    return FilterBank(1, 5, std::move(w));
}

}  // namespace fsd
