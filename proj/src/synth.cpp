#include "fsd/synth.hpp"

#include "fsd/error.hpp"
#include "fsd/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace fsd {

using nlohmann::json;

namespace {

constexpr double kSceneSigmas[] = {1.0, 2.0, 4.0, 8.0};
constexpr std::uint32_t kSceneStream = 0xffffffffu;

std::mt19937_64 stream_rng(std::uint64_t seed, std::size_t index, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream};
    return std::mt19937_64(seq);
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= m) i = i < 0 ? -i - 1 : 2 * m - i - 1;
    return static_cast<std::size_t>(i);
}

Field gaussian_blur(const Field& in, double sigma) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        taps[static_cast<std::size_t>(t + radius)] = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
        total += taps[static_cast<std::size_t>(t + radius)];
    }
    for (double& t : taps) t /= total;
    const std::size_t w = in.width();
    const std::size_t h = in.height();
    Field tmp(w, h);
    Field out(w, h);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                acc += taps[static_cast<std::size_t>(t + radius)] * in(r, reflect(static_cast<std::ptrdiff_t>(c) + t, w));
            }
            tmp(r, c) = acc;
        }
    }
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                acc += taps[static_cast<std::size_t>(t + radius)] * tmp(reflect(static_cast<std::ptrdiff_t>(r) + t, h), c);
            }
            out(r, c) = acc;
        }
    }
    return out;
}

Field convolve(const Field& in, const SyntheticSource& source) {
    const std::size_t side = source.kernel_side;
    const auto half = static_cast<std::ptrdiff_t>(side / 2);
    Field out(in.width(), in.height());
    for (std::size_t r = 0; r < in.height(); ++r) {
        for (std::size_t c = 0; c < in.width(); ++c) {
            double acc = 0.0;
            for (std::size_t a = 0; a < side; ++a) {
                const std::size_t rr = reflect(static_cast<std::ptrdiff_t>(r + a) - half, in.height());
                for (std::size_t b = 0; b < side; ++b) {
                    const std::size_t cc = reflect(static_cast<std::ptrdiff_t>(c + b) - half, in.width());
                    acc += source.kernel[a * side + b] * in(rr, cc);
                }
            }
            out(r, c) = acc;
        }
    }
    return out;
}

// Kernels compare equal after zero-padding to a common centered size.
std::vector<double> padded_kernel(const SyntheticSource& s, std::size_t side) {
    std::vector<double> out(side * side, 0.0);
    const std::size_t off = (side - s.kernel_side) / 2;
    for (std::size_t a = 0; a < s.kernel_side; ++a) {
        for (std::size_t b = 0; b < s.kernel_side; ++b) out[(a + off) * side + b + off] = s.kernel[a * s.kernel_side + b];
    }
    return out;
}

}  // namespace

void SyntheticSourceSpec::validate() const {
    require(!sources.empty(), ErrorCode::InvalidArgument, "synthetic spec needs at least one source");
    require(count >= 1 && size >= 8, ErrorCode::InvalidArgument, "synthetic spec needs count >= 1 and size >= 8");
    require(std::isfinite(scene_contrast) && scene_contrast > 0.0, ErrorCode::InvalidArgument, "scene_contrast must be positive");
    std::set<std::string> ids;
    std::size_t widest = 1;
    for (const auto& s : sources) {
        require(!s.id.empty() && s.id.find_first_of(",\n/\\") == std::string::npos, ErrorCode::InvalidArgument,
                "source ids must be non-empty and free of ',', '/' and newlines");
        require(ids.insert(s.id).second, ErrorCode::InvalidArgument, "duplicate source id " + s.id);
        require(s.kernel_side % 2 == 1 && s.kernel.size() == s.kernel_side * s.kernel_side, ErrorCode::InvalidArgument,
                "kernel of source " + s.id + " must be an odd square");
        require(std::all_of(s.kernel.begin(), s.kernel.end(), [](double v) { return std::isfinite(v); }),
                ErrorCode::InvalidArgument, "kernel of source " + s.id + " must be finite");
        require(std::isfinite(s.noise) && s.noise >= 0.0, ErrorCode::InvalidArgument, "noise must be >= 0");
        widest = std::max(widest, s.kernel_side);
    }
    if (allow_duplicate_kernels) return;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        for (std::size_t j = i + 1; j < sources.size(); ++j) {
            require(padded_kernel(sources[i], widest) != padded_kernel(sources[j], widest), ErrorCode::InvalidArgument,
                    "sources " + sources[i].id + " and " + sources[j].id + " share a kernel");
        }
    }
}

SyntheticSourceSpec default_synthetic_spec() {
    SyntheticSourceSpec spec;
    spec.sources = {
        {"real", 1, {1.0}, 0.03},
        {"blur", 3, {1 / 16., 2 / 16., 1 / 16., 2 / 16., 4 / 16., 2 / 16., 1 / 16., 2 / 16., 1 / 16.}, 0.03},
        {"hblur", 3, {0, 0, 0, 0.25, 0.5, 0.25, 0, 0, 0}, 0.03},
        {"vblur", 3, {0, 0.25, 0, 0, 0.5, 0, 0, 0.25, 0}, 0.03},
        {"sharpen", 3, {0, -0.2, 0, -0.2, 1.8, -0.2, 0, -0.2, 0}, 0.03},
    };
    return spec;
}

json to_json(const SyntheticSourceSpec& spec) {
    json sources = json::array();
    for (const auto& s : spec.sources) {
        sources.push_back(json{{"id", s.id}, {"kernel_side", s.kernel_side}, {"kernel", s.kernel}, {"noise", s.noise}});
    }
    return json{{"seed", spec.seed},
                {"count", spec.count},
                {"size", spec.size},
                {"scene_offset", spec.scene_offset},
                {"scene_contrast", spec.scene_contrast},
                {"allow_duplicate_kernels", spec.allow_duplicate_kernels},
                {"sources", sources}};
}

SyntheticSourceSpec synthetic_spec_from_json(const json& doc) {
    SyntheticSourceSpec spec;
    try {
        spec.seed = doc.value("seed", spec.seed);
        spec.count = doc.value("count", spec.count);
        spec.size = doc.value("size", spec.size);
        spec.scene_offset = doc.value("scene_offset", spec.scene_offset);
        spec.scene_contrast = doc.value("scene_contrast", spec.scene_contrast);
        spec.allow_duplicate_kernels = doc.value("allow_duplicate_kernels", false);
        for (const json& s : doc.at("sources")) {
            SyntheticSource source;
            source.id = s.at("id").get<std::string>();
            source.kernel_side = s.value("kernel_side", std::size_t{1});
            source.kernel = s.at("kernel").get<std::vector<double>>();
            source.noise = s.value("noise", source.noise);
            spec.sources.push_back(std::move(source));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed synthetic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

Field render_scene(const SyntheticSourceSpec& spec, std::size_t index) {
    auto rng = stream_rng(spec.seed, spec.scene_offset + index, kSceneStream);
    std::normal_distribution<double> normal;
    Field scene(spec.size, spec.size);
    for (double sigma : kSceneSigmas) {
        Field noise(spec.size, spec.size);
        for (double& v : noise.values()) v = normal(rng);
        const Field smooth = gaussian_blur(noise, sigma);
        // Blurring white noise by sigma scales its std by about 1/(2 sqrt(pi) sigma); undo it so octaves weigh equally.
        const double gain = 2.0 * std::sqrt(M_PI) * sigma;
        for (std::size_t i = 0; i < scene.size(); ++i) scene.values()[i] += gain * smooth.values()[i];
    }
    double mean = 0.0;
    for (double v : scene.values()) mean += v;
    mean /= static_cast<double>(scene.size());
    double var = 0.0;
    for (double v : scene.values()) var += (v - mean) * (v - mean);
    const double stddev = std::sqrt(var / static_cast<double>(scene.size()));
    for (double& v : scene.values()) v = 0.5 + spec.scene_contrast * (v - mean) / stddev;
    return scene;
}

GrayImage render_synthetic(const SyntheticSourceSpec& spec, std::size_t source, std::size_t index) {
    require(source < spec.sources.size(), ErrorCode::InvalidArgument, "source index out of range");
    const SyntheticSource& s = spec.sources[source];
    Field base = render_scene(spec, index);
    auto rng = stream_rng(spec.seed, spec.scene_offset + index, static_cast<std::uint32_t>(source));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : base.values()) v += s.noise * normal(rng);
    Field out = convolve(base, s);
    for (double& v : out.values()) v = static_cast<double>(to_u8(v)) / 255.0;
    return GrayImage(std::move(out));
}

std::vector<ManifestEntry> write_synthetic_corpus(const SyntheticSourceSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string());
    std::vector<ManifestEntry> entries;
    std::ostringstream manifest;
    manifest << "path,label\n";
    for (std::size_t s = 0; s < spec.sources.size(); ++s) {
        const std::string& id = spec.sources[s].id;
        std::filesystem::create_directories(out_dir / id, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create " + (out_dir / id).string());
        for (std::size_t i = 0; i < spec.count; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "%04zu.png", i);
            const std::string rel = id + "/" + name;
            write_png(out_dir / rel, render_synthetic(spec, s, i));
            entries.push_back({rel, id});
            manifest << rel << ',' << id << '\n';
        }
    }
    write_file_atomic(out_dir / "manifest.csv", manifest.str());
    write_file_atomic(out_dir / "spec.json", to_json(spec).dump(2) + "\n");
    return entries;
}

}  // namespace fsd
