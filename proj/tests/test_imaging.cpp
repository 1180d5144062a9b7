#include "fsd/image.hpp"
#include "support.hpp"

#include <png.h>

#include <cstdio>

using namespace fsd;
using fsd::test::TempDir;

namespace {

std::vector<std::uint8_t> rgb_fill(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::vector<std::uint8_t> px;
    for (std::size_t i = 0; i < w * h; ++i) px.insert(px.end(), {r, g, b});
    return px;
}

void write_png16(const std::filesystem::path& path, std::size_t w, std::size_t h, const std::vector<std::uint16_t>& v) {
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    REQUIRE(fp != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(2 * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            row[2 * c] = static_cast<std::uint8_t>(v[r * w + c] >> 8);
            row[2 * c + 1] = static_cast<std::uint8_t>(v[r * w + c] & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

double block_mean_oracle(const Field& f, std::size_t r0, std::size_t c0, std::size_t n) {
    double s = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) s += f(r0 + a, c0 + b);
    }
    return s / static_cast<double>(n * n);
}

}  // namespace

TEST_SUITE("imaging") {

TEST_CASE("solid white RGB decodes to ones") {
    TempDir dir;
    write_png(dir / "white.png", 32, 24, 3, rgb_fill(32, 24, 255, 255, 255));
    const GrayImage img = load_grayscale(dir / "white.png");
    CHECK(img.width() == 32);
    CHECK(img.height() == 24);
    for (double v : img.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pure red uses BT.601 luma") {
    TempDir dir;
    write_png(dir / "red.png", 30, 30, 3, rgb_fill(30, 30, 255, 0, 0));
    const GrayImage img = load_grayscale(dir / "red.png");
    for (double v : img.values()) CHECK(std::abs(v - 0.299) < 1e-12);
}

TEST_CASE("RGBA alpha is ignored and gray PNG maps k to k/255") {
    TempDir dir;
    std::vector<std::uint8_t> rgba;
    for (int i = 0; i < 25 * 25; ++i) rgba.insert(rgba.end(), {0, 255, 0, 7});
    write_png(dir / "green.png", 25, 25, 4, rgba);
    for (double v : load_grayscale(dir / "green.png").values()) CHECK(std::abs(v - 0.587) < 1e-12);

    std::vector<std::uint8_t> gray(25 * 25);
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<std::uint8_t>(i % 256);
    write_png(dir / "gray.png", 25, 25, 1, gray);
    const GrayImage g = load_grayscale(dir / "gray.png");
    for (std::size_t i = 0; i < gray.size(); ++i) CHECK(g.values()[i] == gray[i] / 255.0);
}

TEST_CASE("16-bit PNG divides by 65535") {
    TempDir dir;
    std::vector<std::uint16_t> v(24 * 24, 32768);
    v[0] = 65535;
    v[1] = 0;
    write_png16(dir / "deep.png", 24, 24, v);
    const GrayImage img = load_grayscale(dir / "deep.png");
    CHECK(img(0, 0) == 1.0);
    CHECK(img(0, 1) == 0.0);
    CHECK(std::abs(img(5, 5) - 32768.0 / 65535.0) < 1e-12);
}

TEST_CASE("oversized image is center cropped to the cap") {
    TempDir dir;
    std::vector<std::uint8_t> gray(100 * 100);
    for (std::size_t r = 0; r < 100; ++r) {
        for (std::size_t c = 0; c < 100; ++c) gray[r * 100 + c] = static_cast<std::uint8_t>((r * 7 + c * 3) % 256);
    }
    write_png(dir / "big.png", 100, 100, 1, gray);
    const GrayImage img = load_grayscale(dir / "big.png", {64, 23});
    REQUIRE(img.width() == 64);
    REQUIRE(img.height() == 64);
    for (std::size_t r = 0; r < 64; ++r) {
        for (std::size_t c = 0; c < 64; ++c) CHECK(img(r, c) == gray[(r + 18) * 100 + c + 18] / 255.0);
    }
}

TEST_CASE("small dimensions are left alone by the crop") {
    GrayImage img(30, 80, std::vector<double>(30 * 80, 0.25));
    const GrayImage cropped = center_crop(img, 64);
    CHECK(cropped.width() == 30);
    CHECK(cropped.height() == 64);
}

TEST_CASE("JPEG input decodes to luminance") {
    TempDir dir;
    write_jpeg(dir / "flat.jpg", 40, 40, 3, rgb_fill(40, 40, 128, 128, 128), 95);
    const GrayImage img = load_grayscale(dir / "flat.jpg");
    CHECK(img.width() == 40);
    for (double v : img.values()) CHECK(std::abs(v - 128.0 / 255.0) < 0.02);
}

TEST_CASE("load failures carry the right codes") {
    TempDir dir;
    CHECK(test::error_of([&] { load_grayscale(dir / "missing.png"); }) == ErrorCode::UnreadableFile);
    test::write_text(dir / "garbage.png", "definitely not an image");
    CHECK(test::error_of([&] { load_grayscale(dir / "garbage.png"); }) == ErrorCode::UnreadableFile);
    write_png(dir / "tiny.png", 10, 10, 1, std::vector<std::uint8_t>(100, 9));
    CHECK(test::error_of([&] { load_grayscale(dir / "tiny.png"); }) == ErrorCode::TooSmall);
}

TEST_CASE("decoding is deterministic") {
    TempDir dir;
    std::mt19937_64 rng(5);
    std::vector<std::uint8_t> px(48 * 48 * 3);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng() % 256);
    write_png(dir / "n.png", 48, 48, 3, px);
    write_jpeg(dir / "n.jpg", 48, 48, 3, px, 80);
    CHECK(load_grayscale(dir / "n.png") == load_grayscale(dir / "n.png"));
    CHECK(load_grayscale(dir / "n.jpg") == load_grayscale(dir / "n.jpg"));
}

TEST_CASE("GrayImage rejects out-of-range values") {
    CHECK(test::error_of([] { GrayImage(2, 1, {0.5, 1.5}); }) == ErrorCode::InvalidArgument);
    CHECK(test::error_of([] { GrayImage(2, 1, {0.5, std::nan("")}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("2x2 block mean example") {
    const Field f(2, 2, {1 / 8.0, 3 / 8.0, 5 / 8.0, 7 / 8.0});
    const Field d = downsample_dyadic(f, 2);
    REQUIRE(d.width() == 1);
    REQUIRE(d.height() == 1);
    CHECK(d(0, 0) == 0.5);
}

TEST_CASE("odd trailing row and column are dropped") {
    std::mt19937_64 rng(11);
    const Field f = test::uniform_field(5, 5, rng);
    const Field d = downsample_dyadic(f, 2);
    REQUIRE(d.width() == 2);
    REQUIRE(d.height() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(d(r, c) - block_mean_oracle(f, 2 * r, 2 * c, 2)) < 1e-15);
    }
}

TEST_CASE("factor 1 is the identity and factor 4 halves twice") {
    std::mt19937_64 rng(12);
    const Field f = test::uniform_field(17, 13, rng);
    CHECK(downsample_dyadic(f, 1) == f);
    CHECK(downsample_dyadic(f, 4) == downsample_dyadic(downsample_dyadic(f, 2), 2));
    const Field d = downsample_dyadic(f, 4);
    CHECK(d.width() == 4);
    CHECK(d.height() == 3);
    CHECK(std::abs(d(1, 2) - block_mean_oracle(f, 4, 8, 4)) < 1e-14);
}

TEST_CASE("even-sized downsampling preserves the mean") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const Field f = test::uniform_field(32, 16, rng);
        for (std::size_t factor : {2u, 4u, 8u}) {
            const Field d = downsample_dyadic(f, factor);
            double a = 0.0, b = 0.0;
            for (double v : f.values()) a += v;
            for (double v : d.values()) b += v;
            CHECK(std::abs(a / f.size() - b / d.size()) < 1e-12);
        }
    }
}

TEST_CASE("downsampling a one-pixel-wide image degenerates") {
    const Field f(1, 5, 0.5);
    CHECK(test::error_of([&] { downsample_dyadic(f, 2); }) == ErrorCode::DegenerateOutput);
    CHECK(test::error_of([&] { downsample_dyadic(Field(8, 8), 3); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("JPEG at quality 100 stays close") {
    std::mt19937_64 rng(21);
    const GrayImage smooth(test::smooth_field(64, 64, rng));
    const GrayImage r = jpeg_recompress(smooth, 100);
    REQUIRE(r.width() == 64);
    double worst = 0.0;
    for (std::size_t i = 0; i < r.values().size(); ++i) worst = std::max(worst, std::abs(r.values()[i] - smooth.values()[i]));
    CHECK(worst <= 0.05);
}

TEST_CASE("JPEG keeps a constant image nearly constant") {
    for (int level = 0; level <= 255; level += 17) {
        const double c = level / 255.0;
        const GrayImage flat(48, 48, std::vector<double>(48 * 48, c));
        for (int q = 10; q <= 100; q += 5) {
            const GrayImage r = jpeg_recompress(flat, q);
            for (double v : r.values()) CHECK(std::abs(v - c) <= 0.02);
        }
        // Below quality 10 the baseline DC quantizer step saturates at 255, so a flat block
        // may land up to step/16 gray levels away.
        for (int q = 1; q < 10; ++q) {
            const GrayImage r = jpeg_recompress(flat, q);
            for (double v : r.values()) CHECK(std::abs(v - c) <= (255.0 / 16.0 + 0.5) / 255.0);
        }
    }
}

TEST_CASE("JPEG output is quantized and deterministic") {
    std::mt19937_64 rng(22);
    const GrayImage img(test::smooth_field(40, 40, rng));
    const GrayImage a = jpeg_recompress(img, 70);
    CHECK(a == jpeg_recompress(img, 70));
    for (double v : a.values()) CHECK(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
}

TEST_CASE("JPEG quality outside [1,100] fails") {
    const GrayImage flat(16, 16, std::vector<double>(256, 0.5));
    CHECK(test::error_of([&] { jpeg_recompress(flat, 0); }) == ErrorCode::CodecFailure);
    CHECK(test::error_of([&] { jpeg_recompress(flat, 101); }) == ErrorCode::CodecFailure);
}

TEST_CASE("PNG round trip of a quantized image is exact") {
    TempDir dir;
    std::vector<double> v(30 * 30);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 256) / 255.0;
    const GrayImage img(30, 30, v);
    write_png(dir / "rt.png", img);
    CHECK(load_grayscale(dir / "rt.png") == img);
}

}
