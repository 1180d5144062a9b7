#include "fsd/image.hpp"

#include "fsd/error.hpp"

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

namespace fsd {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnreadableFile: return "UnreadableFile";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::TooSmall: return "TooSmall";
        case ErrorCode::DegenerateOutput: return "DegenerateOutput";
        case ErrorCode::CodecFailure: return "CodecFailure";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::DegenerateComponent: return "DegenerateComponent";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyValidation: return "EmptyValidation";
        case ErrorCode::SingleCluster: return "SingleCluster";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadVersion: return "BadVersion";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::KindMismatch: return "KindMismatch";
        case ErrorCode::SizeMismatch: return "SizeMismatch";
    }
    return "Unknown";
}

Field::Field(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), values_(width * height, fill) {}

Field::Field(std::size_t width, std::size_t height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    require(values_.size() == width_ * height_, ErrorCode::ShapeMismatch,
            "field data length " + std::to_string(values_.size()) + " does not match " +
                std::to_string(width_) + "x" + std::to_string(height_));
}

Field Field::crop(std::size_t row0, std::size_t col0, std::size_t width, std::size_t height) const {
    require(row0 + height <= height_ && col0 + width <= width_, ErrorCode::InvalidArgument,
            "crop rectangle exceeds field bounds");
    Field out(width, height);
    for (std::size_t r = 0; r < height; ++r) {
        std::copy_n(row(row0 + r) + col0, width, out.row(r));
    }
    return out;
}

GrayImage::GrayImage(Field field) : field_(std::move(field)) {
    for (double v : field_.values()) {
        require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorCode::InvalidArgument,
                "gray image values must be finite and within [0,1]");
    }
}

GrayImage::GrayImage(std::size_t width, std::size_t height, std::vector<double> values)
    : GrayImage(Field(width, height, std::move(values))) {}

std::uint8_t to_u8(double value) noexcept {
    const double scaled = std::round(std::clamp(value, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(scaled);
}

namespace {

struct Decoded {
    std::size_t width = 0;
    std::size_t height = 0;
    int channels = 0;  // 1 or 3, alpha already dropped
    int max_value = 255;
    std::vector<std::uint16_t> samples;
};

GrayImage to_gray(const Decoded& d) {
    std::vector<double> values(d.width * d.height);
    const auto max_value = static_cast<double>(d.max_value);
    if (d.channels == 1) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = d.samples[i] / max_value;
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double r = d.samples[3 * i] / max_value;
            const double g = d.samples[3 * i + 1] / max_value;
            const double b = d.samples[3 * i + 2] / max_value;
            values[i] = std::clamp(0.299 * r + 0.587 * g + 0.114 * b, 0.0, 1.0);
        }
    }
    return GrayImage(d.width, d.height, std::move(values));
}

// ---- PNG ----

struct PngReadState {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t length) {
    auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (state->offset + length > state->bytes.size()) png_error(png, "truncated PNG stream");
    std::memcpy(out, state->bytes.data() + state->offset, length);
    state->offset += length;
}

void png_error_handler(png_structp png, png_const_charp message) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = message;
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

Decoded decode_png(std::span<const std::uint8_t> bytes) {
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
    if (!png) fail(ErrorCode::UnreadableFile, "cannot allocate PNG reader");
    png_infop info = png_create_info_struct(png);
    PngReadState state{bytes, 0};
    Decoded out;
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> raw;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::UnreadableFile, "PNG decode failed: " + message);
    }
    png_set_read_fn(png, &state, png_read_from_span);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    const int channels = png_get_channels(png, info);
    const int depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    raw.resize(row_bytes * out.height);
    rows.resize(out.height);
    for (std::size_t r = 0; r < out.height; ++r) rows[r] = raw.data() + r * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    // After palette/tRNS expansion a stray alpha may remain for palette images.
    const int color_channels = (channels >= 3) ? 3 : 1;
    out.channels = color_channels;
    out.max_value = depth == 16 ? 65535 : 255;
    out.samples.resize(out.width * out.height * color_channels);
    const std::size_t bytes_per_sample = depth == 16 ? 2 : 1;
    for (std::size_t r = 0; r < out.height; ++r) {
        const std::uint8_t* src = rows[r];
        for (std::size_t c = 0; c < out.width; ++c) {
            for (int ch = 0; ch < color_channels; ++ch) {
                const std::uint8_t* p = src + (c * channels + ch) * bytes_per_sample;
                const std::uint16_t v = depth == 16 ? static_cast<std::uint16_t>(p[0] | (p[1] << 8)) : p[0];
                out.samples[(r * out.width + c) * color_channels + ch] = v;
            }
        }
    }
    return out;
}

// ---- JPEG ----

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

Decoded decode_jpeg(std::span<const std::uint8_t> bytes, ErrorCode code) {
    jpeg_decompress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    err.mgr.emit_message = jpeg_silent;
    Decoded out;
    std::vector<std::uint8_t> row;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        fail(code, std::string("JPEG decode failed: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = cinfo.output_width;
    out.height = cinfo.output_height;
    out.channels = cinfo.output_components;
    row.resize(out.width * out.channels);
    out.samples.resize(out.width * out.height * out.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        const std::size_t r = cinfo.output_scanline;
        JSAMPROW ptr = row.data();
        jpeg_read_scanlines(&cinfo, &ptr, 1);
        std::copy(row.begin(), row.end(), out.samples.begin() + r * row.size());
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

std::vector<std::uint8_t> encode_jpeg(std::size_t width, std::size_t height, int channels,
                                      std::span<const std::uint8_t> samples, int quality) {
    jpeg_compress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    err.mgr.emit_message = jpeg_silent;
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        fail(ErrorCode::CodecFailure, std::string("JPEG encode failed: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(width);
    cinfo.image_height = static_cast<JDIMENSION>(height);
    cinfo.input_components = channels;
    cinfo.in_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* ptr = const_cast<JSAMPROW>(samples.data() + cinfo.next_scanline * width * channels);
        jpeg_write_scanlines(&cinfo, &ptr, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::vector<std::uint8_t> out(buffer, buffer + size);
    std::free(buffer);
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::UnreadableFile, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::UnreadableFile, "read error on " + path.string());
    return bytes;
}

}  // namespace

GrayImage center_crop(const GrayImage& image, std::size_t max_side) {
    if (max_side == 0) return image;
    const std::size_t w = std::min(image.width(), max_side);
    const std::size_t h = std::min(image.height(), max_side);
    if (w == image.width() && h == image.height()) return image;
    return GrayImage(image.field().crop((image.height() - h) / 2, (image.width() - w) / 2, w, h));
}

GrayImage decode_grayscale(std::span<const std::uint8_t> bytes, const PreprocessOptions& options) {
    static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    Decoded decoded;
    if (bytes.size() >= 8 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
        decoded = decode_png(bytes);
    } else if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
        decoded = decode_jpeg(bytes, ErrorCode::UnreadableFile);
    } else {
        fail(ErrorCode::UnreadableFile, "not a PNG or JPEG stream");
    }
    GrayImage image = center_crop(to_gray(decoded), options.max_side);
    if (image.width() < options.min_side || image.height() < options.min_side) {
        fail(ErrorCode::TooSmall, std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                                      " is below the minimum side " + std::to_string(options.min_side));
    }
    return image;
}

GrayImage load_grayscale(const std::filesystem::path& path, const PreprocessOptions& options) {
    const auto bytes = read_file(path);
    try {
        return decode_grayscale(bytes, options);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::TooSmall) fail(ErrorCode::TooSmall, path.string() + ": " + e.what());
        fail(e.code(), path.string() + ": " + e.what());
    }
}

Field downsample_dyadic(const Field& field, std::size_t factor) {
    require(factor >= 1 && (factor & (factor - 1)) == 0, ErrorCode::InvalidArgument,
            "downsampling factor must be a power of two");
    Field current = field;
    for (std::size_t f = factor; f > 1; f /= 2) {
        const std::size_t w = current.width() / 2;
        const std::size_t h = current.height() / 2;
        if (w == 0 || h == 0) {
            fail(ErrorCode::DegenerateOutput, "downsampling " + std::to_string(field.width()) + "x" +
                                                  std::to_string(field.height()) + " by " +
                                                  std::to_string(factor) + " leaves an empty field");
        }
        Field next(w, h);
        for (std::size_t r = 0; r < h; ++r) {
            const double* top = current.row(2 * r);
            const double* bottom = current.row(2 * r + 1);
            double* out = next.row(r);
            for (std::size_t c = 0; c < w; ++c) {
                out[c] = (top[2 * c] + top[2 * c + 1] + bottom[2 * c] + bottom[2 * c + 1]) * 0.25;
            }
        }
        current = std::move(next);
    }
    return current;
}

GrayImage downsample_dyadic(const GrayImage& image, std::size_t factor) {
    return GrayImage(downsample_dyadic(image.field(), factor));
}

GrayImage jpeg_recompress(const GrayImage& image, int quality) {
    require(quality >= 1 && quality <= 100, ErrorCode::CodecFailure,
            "JPEG quality " + std::to_string(quality) + " outside [1,100]");
    std::vector<std::uint8_t> samples(image.values().size());
    std::transform(image.values().begin(), image.values().end(), samples.begin(), to_u8);
    const auto encoded = encode_jpeg(image.width(), image.height(), 1, samples, quality);
    const Decoded decoded = decode_jpeg(encoded, ErrorCode::CodecFailure);
    require(decoded.width == image.width() && decoded.height == image.height(), ErrorCode::CodecFailure,
            "JPEG round trip changed the image size");
    return to_gray(decoded);
}

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
               std::span<const std::uint8_t> samples) {
    require(channels == 1 || channels == 3 || channels == 4, ErrorCode::InvalidArgument, "unsupported channel count");
    require(samples.size() == width * height * channels, ErrorCode::SizeMismatch, "sample buffer size mismatch");
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = channels == 1 ? PNG_FORMAT_GRAY : (channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA);
    if (!png_image_write_to_file(&img, path.c_str(), 0, samples.data(), 0, nullptr)) {
        const std::string message = img.message;
        png_image_free(&img);
        fail(ErrorCode::IoError, "cannot write " + path.string() + ": " + message);
    }
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
    std::vector<std::uint8_t> samples(image.values().size());
    std::transform(image.values().begin(), image.values().end(), samples.begin(), to_u8);
    write_png(path, image.width(), image.height(), 1, samples);
}

void write_jpeg(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
                std::span<const std::uint8_t> samples, int quality) {
    require(channels == 1 || channels == 3, ErrorCode::InvalidArgument, "unsupported channel count");
    require(samples.size() == width * height * channels, ErrorCode::SizeMismatch, "sample buffer size mismatch");
    const auto encoded = encode_jpeg(width, height, channels, samples, quality);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(encoded.size()));
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
}

}  // namespace fsd
