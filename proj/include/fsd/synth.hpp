#pragma once

#include "fsd/image.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fsd {

// One planted "generator": a small convolution kernel applied to the shared scene plus
// i.i.d. Gaussian noise, then clamped and quantized to 8 bits.
struct SyntheticSource {
    std::string id;
    std::size_t kernel_side = 1;
    std::vector<double> kernel{1.0};  // kernel_side x kernel_side, row-major
    double noise = 0.02;
};

struct SyntheticSourceSpec {
    std::uint64_t seed = 1;
    std::size_t count = 60;   // images per source
    std::size_t size = 96;    // square side in pixels
    std::size_t scene_offset = 0;  // first scene index, lets disjoint corpora share a spec
    double scene_contrast = 0.12;
    bool allow_duplicate_kernels = false;  // only for negative controls
    std::vector<SyntheticSource> sources;

    // Throws InvalidArgument on malformed kernels, duplicate ids, or duplicate kernels.
    void validate() const;
};

// Four planted kernels plus the unfiltered "real" source.
SyntheticSourceSpec default_synthetic_spec();

nlohmann::json to_json(const SyntheticSourceSpec& spec);
SyntheticSourceSpec synthetic_spec_from_json(const nlohmann::json& doc);

// Smoothed-noise scene `index`, shared by all sources; values are not clamped.
Field render_scene(const SyntheticSourceSpec& spec, std::size_t index);
GrayImage render_synthetic(const SyntheticSourceSpec& spec, std::size_t source, std::size_t index);

struct ManifestEntry {
    std::string path;
    std::string label;
};

// Writes <out>/<id>/<index>.png for every source and <out>/manifest.csv; returns the entries.
std::vector<ManifestEntry> write_synthetic_corpus(const SyntheticSourceSpec& spec, const std::filesystem::path& out_dir);

}  // namespace fsd
