#pragma once

#include "fsd/filter_bank.hpp"
#include "fsd/image.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fsd {

// scales[l][k] is residual k downsampled by 2^l.
struct ResidualPyramid {
    std::vector<std::vector<Field>> scales;

    std::size_t scale_count() const noexcept { return scales.size(); }
    std::size_t filter_count() const noexcept { return scales.empty() ? 0 : scales.front().size(); }
};

ResidualPyramid build_pyramid(const ResidualStack& stack, std::size_t scale_count, std::size_t neighborhood);

// Per-image model parameters: K grids of B x B coefficients with a zero center.
class SelfDescription {
public:
    SelfDescription() = default;
    SelfDescription(std::size_t filter_count, std::size_t side);

    // Inverse of to_vector(); `features` has K*(B*B-1) entries.
    static SelfDescription from_vector(std::size_t filter_count, std::size_t side, std::span<const double> features);

    std::size_t filter_count() const noexcept { return filter_count_; }
    std::size_t side() const noexcept { return side_; }
    std::size_t dimension() const noexcept { return filter_count_ * (side_ * side_ - 1); }

    // Grid form, K*B*B entries, center of every grid 0.
    std::span<const double> grids() const noexcept { return grids_; }
    double coefficient(std::size_t k, std::size_t a, std::size_t b) const noexcept {
        return grids_[(k * side_ + a) * side_ + b];
    }
    void set_coefficient(std::size_t k, std::size_t a, std::size_t b, double value);

    // Filter-major, row-major within a filter, center skipped.
    std::vector<double> to_vector() const;

    std::size_t scale_count = 0;
    std::uint64_t bank_hash = 0;
    double objective = 0.0;
    std::size_t iterations = 0;

    friend bool operator==(const SelfDescription&, const SelfDescription&) = default;

private:
    std::size_t filter_count_ = 0;
    std::size_t side_ = 0;
    std::vector<double> grids_;
};

inline std::size_t description_dimension(std::size_t filter_count, std::size_t side) {
    return filter_count * (side * side - 1);
}

// Mean over all scale-l valid locations of (sum_k r_k - rhat_k)^2.
double model_error(const ResidualPyramid& pyramid, const SelfDescription& phi);

// Same objective with its gradient with respect to the free (vector-form) coefficients.
LossGradient model_error_gradient(const ResidualPyramid& pyramid, const SelfDescription& phi);

struct FitConfig {
    double learning_rate = 0.1;
    std::size_t patience = 20;
    double plateau_factor = 0.5;
    double improvement_floor = 1e-5;
    std::size_t max_iterations = 10000;
    double min_learning_rate = 1e-4;

    void validate() const;
};

struct FitTrace {
    std::vector<double> objective;      // objective at the start of each iteration
    std::vector<double> learning_rate;  // learning rate used by each iteration
    std::vector<std::size_t> halvings;  // iterations after which the rate was reduced
};

SelfDescription fit_self_description(const ResidualPyramid& pyramid, std::size_t side, const FitConfig& config,
                                     FitTrace* trace = nullptr);

// Closed-form minimizer through dense ridge-regularized normal equations.
SelfDescription fit_self_description_exact(const ResidualPyramid& pyramid, std::size_t side);

struct DescribeConfig {
    std::size_t side = 11;
    std::size_t scale_count = 3;
    FitConfig fit;
};

SelfDescription describe_image(const Field& image, const FilterBank& bank, const DescribeConfig& config);
inline SelfDescription describe_image(const GrayImage& image, const FilterBank& bank, const DescribeConfig& config) {
    return describe_image(image.field(), bank, config);
}

}  // namespace fsd
