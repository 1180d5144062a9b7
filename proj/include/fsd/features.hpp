#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fsd {

// N x D row-major matrix of self-description vectors with optional per-row labels.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<std::string> labels;  // empty or one per row

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows(rows), cols(cols), values(rows * cols, 0.0) {}

    std::span<const double> row(std::size_t i) const noexcept {
        return std::span<const double>(values).subspan(i * cols, cols);
    }
    std::span<double> row(std::size_t i) noexcept { return std::span<double>(values).subspan(i * cols, cols); }

    void append(std::span<const double> features, std::string label = {});

    // Rows whose label equals `label`, labels kept.
    FeatureMatrix select_label(const std::string& label) const;
    FeatureMatrix select_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

}  // namespace fsd
