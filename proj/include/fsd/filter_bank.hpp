#pragma once

#include "fsd/image.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fsd {

// K constrained linear predictors on an M x M neighborhood. Each filter is stored
// row-major; entry (a, b) multiplies the pixel at row offset a - M/2, column offset
// b - M/2. The center entry is 0 and the remaining entries sum to 1.
class FilterBank {
public:
    FilterBank() = default;
    // Throws InvariantViolation when the constraints do not hold.
    FilterBank(std::size_t count, std::size_t side, std::vector<double> weights);

    std::size_t count() const noexcept { return count_; }
    std::size_t side() const noexcept { return side_; }
    std::size_t taps() const noexcept { return side_ * side_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> filter(std::size_t k) const noexcept {
        return std::span<const double>(weights_).subspan(k * taps(), taps());
    }

    // FNV-1a over the shape and the IEEE-754 bytes of the weights.
    std::uint64_t hash() const noexcept;

    friend bool operator==(const FilterBank&, const FilterBank&) = default;

private:
    std::size_t count_ = 0;
    std::size_t side_ = 0;
    std::vector<double> weights_;
};

inline constexpr double kFilterSumTolerance = 1e-9;

// Throws InvariantViolation naming the first violated constraint.
void check_filter_constraints(std::span<const double> weights, std::size_t count, std::size_t side);

// Euclidean projection of one M x M grid onto {center = 0, non-center sum = 1}.
void project_constraints(std::span<double> grid, std::size_t side);
std::vector<double> project_constraints(std::vector<double> grid, std::size_t side);

// K residual fields over the valid region, (H-M+1) x (W-M+1) each.
struct ResidualStack {
    std::vector<Field> fields;
    std::size_t source_width = 0;
    std::size_t source_height = 0;

    std::size_t count() const noexcept { return fields.size(); }
};

std::vector<Field> predict_scene(const FilterBank& bank, const Field& image);
ResidualStack extract_residuals(const FilterBank& bank, const Field& image);
inline ResidualStack extract_residuals(const FilterBank& bank, const GrayImage& image) {
    return extract_residuals(bank, image.field());
}

struct LossGradient {
    double value = 0.0;
    std::vector<double> gradient;
};

// -sum_i log(sigma_i + alpha) over the singular values of the K x M^2 filter matrix.
// The weights need not satisfy the constraints; the center gradient is zeroed.
LossGradient diversity_loss(std::span<const double> weights, std::size_t count, std::size_t side, double alpha);

// Mean squared residual over all batch locations and filters.
LossGradient energy_loss(std::span<const double> weights, std::size_t count, std::size_t side,
                         std::span<const Field> batch);

std::vector<double> singular_values(std::span<const double> weights, std::size_t count, std::size_t side);
double min_singular_value(std::span<const double> weights, std::size_t count, std::size_t side);

struct TrainConfig {
    std::size_t filter_count = 8;
    std::size_t side = 11;
    double lambda = 1.0;
    double alpha = 1e-6;
    double learning_rate = 0.001;
    std::size_t epochs = 10;
    std::size_t crop = 128;
    std::size_t crops_per_image = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainStep {
    double energy = 0.0;
    double diversity = 0.0;
    double total = 0.0;
    double sigma_min = 0.0;
};

struct TrainResult {
    FilterBank bank;
    TrainStep initial;
    std::vector<TrainStep> trace;  // one entry per optimizer step, evaluated before the update
};

// Called after every projected update with the step index and the current weights.
using StepObserver = std::function<void(std::size_t step, std::span<const double> weights)>;

TrainResult train_filter_bank(std::span<const GrayImage> corpus, const TrainConfig& config,
                              const StepObserver& observer = {});

enum class HighpassKind { Square3x3, Square5x5 };

FilterBank fixed_highpass_bank(HighpassKind kind);

}  // namespace fsd
