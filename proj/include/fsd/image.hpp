#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fsd {

// Row-major 2-D array of doubles. Holds images, predictions and residuals.
class Field {
public:
    Field() = default;
    Field(std::size_t width, std::size_t height, double fill = 0.0);
    Field(std::size_t width, std::size_t height, std::vector<double> values);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double operator()(std::size_t row, std::size_t col) const noexcept { return values_[row * width_ + col]; }
    double& operator()(std::size_t row, std::size_t col) noexcept { return values_[row * width_ + col]; }

    const double* row(std::size_t r) const noexcept { return values_.data() + r * width_; }
    double* row(std::size_t r) noexcept { return values_.data() + r * width_; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    // Sub-rectangle copy; the rectangle must lie inside the field.
    Field crop(std::size_t row0, std::size_t col0, std::size_t width, std::size_t height) const;

    friend bool operator==(const Field&, const Field&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> values_;
};

// Luminance image with every value finite and inside [0,1].
class GrayImage {
public:
    GrayImage() = default;
    // Throws InvalidArgument when a value is non-finite or outside [0,1].
    explicit GrayImage(Field field);
    GrayImage(std::size_t width, std::size_t height, std::vector<double> values);

    std::size_t width() const noexcept { return field_.width(); }
    std::size_t height() const noexcept { return field_.height(); }
    const Field& field() const noexcept { return field_; }
    std::span<const double> values() const noexcept { return field_.values(); }
    double operator()(std::size_t row, std::size_t col) const noexcept { return field_(row, col); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    Field field_;
};

struct PreprocessOptions {
    std::size_t max_side = 512;  // center-crop cap per axis, 0 disables cropping
    std::size_t min_side = 23;   // smallest accepted side after cropping (2M+1 for M=11)
};

GrayImage load_grayscale(const std::filesystem::path& path, const PreprocessOptions& options = {});
GrayImage decode_grayscale(std::span<const std::uint8_t> bytes, const PreprocessOptions& options = {});

GrayImage center_crop(const GrayImage& image, std::size_t max_side);

// factor 2^p: p successive 2x2 block-mean halvings, odd trailing row/column dropped first.
Field downsample_dyadic(const Field& field, std::size_t factor);
GrayImage downsample_dyadic(const GrayImage& image, std::size_t factor);

// Baseline grayscale JPEG encode + decode, quality in [1,100].
GrayImage jpeg_recompress(const GrayImage& image, int quality);

// 8-bit PNG writers. `channels` is 1 (gray), 3 (RGB) or 4 (RGBA).
void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
               std::span<const std::uint8_t> samples);
void write_png(const std::filesystem::path& path, const GrayImage& image);
// 8-bit baseline JPEG writer, for fixtures and corpora.
void write_jpeg(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
                std::span<const std::uint8_t> samples, int quality);

std::uint8_t to_u8(double value) noexcept;

}  // namespace fsd
