#include "fsd/features.hpp"

#include "fsd/error.hpp"

namespace fsd {

void FeatureMatrix::append(std::span<const double> features, std::string label) {
    if (rows == 0 && cols == 0) cols = features.size();
    require(features.size() == cols, ErrorCode::DimensionMismatch, "row dimension mismatch");
    const bool labelled = !labels.empty() || (rows == 0 && !label.empty());
    require(labelled == !label.empty(), ErrorCode::SizeMismatch, "labels must be given for every row or none");
    values.insert(values.end(), features.begin(), features.end());
    if (labelled) labels.push_back(std::move(label));
    ++rows;
}

FeatureMatrix FeatureMatrix::select_label(const std::string& label) const {
    FeatureMatrix out(0, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (i < labels.size() && labels[i] == label) {
            out.values.insert(out.values.end(), row(i).begin(), row(i).end());
            out.labels.push_back(labels[i]);
            ++out.rows;
        }
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> indices) const {
    FeatureMatrix out(0, cols);
    for (std::size_t i : indices) {
        require(i < rows, ErrorCode::InvalidArgument, "row index out of range");
        out.values.insert(out.values.end(), row(i).begin(), row(i).end());
        if (!labels.empty()) out.labels.push_back(labels[i]);
        ++out.rows;
    }
    return out;
}

}  // namespace fsd
