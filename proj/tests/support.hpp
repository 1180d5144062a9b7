#pragma once

#include "fsd/error.hpp"
#include "fsd/image.hpp"
#include "scratch.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fsd::test {

inline Field uniform_field(std::size_t width, std::size_t height, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Field f(width, height);
    for (double& v : f.values()) v = dist(rng);
    return f;
}

// White noise through a 3x3 box blur, so neighbouring pixels correlate.
inline Field smooth_field(std::size_t width, std::size_t height, std::mt19937_64& rng) {
    const Field noise = uniform_field(width + 2, height + 2, rng);
    Field out(width, height);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            double acc = 0.0;
            for (std::size_t a = 0; a < 3; ++a) {
                for (std::size_t b = 0; b < 3; ++b) acc += noise(r + a, c + b);
            }
            out(r, c) = acc / 9.0;
        }
    }
    return out;
}

inline std::vector<double> uniform_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double relative_error(std::span<const double> estimate, std::span<const double> reference) {
    double diff = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) diff += (estimate[i] - reference[i]) * (estimate[i] - reference[i]);
    return std::sqrt(diff) / std::max(norm2(reference), 1e-300);
}

template <class F>
ErrorCode error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an fsd::Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace fsd::test
