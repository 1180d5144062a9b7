#pragma once

#include "fsd/features.hpp"
#include "fsd/filter_bank.hpp"
#include "fsd/mixture.hpp"
#include "fsd/tasks.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsd {

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

enum class ModelKind { FilterBank, Detector, Attributor, KMeans };

std::string_view model_kind_name(ModelKind kind) noexcept;

struct ModelFile {
    int format_version = kModelFormatVersion;
    ModelKind kind = ModelKind::FilterBank;
    nlohmann::json payload;
    nlohmann::json provenance = nlohmann::json::object();
};

// Provenance skeleton with a creation timestamp (SOURCE_DATE_EPOCH when set, otherwise now).
nlohmann::json make_provenance(std::uint64_t seed, nlohmann::json config);

std::string serialize_model(const ModelFile& file);
// Validates the envelope and the kind-specific payload invariants.
ModelFile parse_model(std::string_view text, std::optional<ModelKind> expected = std::nullopt);

void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path, std::optional<ModelKind> expected = std::nullopt);

struct KMeansModel {
    FeatureStats stats;  // standardization applied before clustering
    std::size_t k = 0;
    std::vector<double> centroids;  // k x D, standardized space
    double inertia = 0.0;
};

nlohmann::json to_json(const FilterBank& bank);
nlohmann::json to_json(const GaussianMixture& model);
nlohmann::json to_json(const DetectorModel& model);
nlohmann::json to_json(const AttributorModel& model);
nlohmann::json to_json(const KMeansModel& model);

FilterBank bank_from_json(const nlohmann::json& payload);
GaussianMixture mixture_from_json(const nlohmann::json& payload);
DetectorModel detector_from_json(const nlohmann::json& payload);
AttributorModel attributor_from_json(const nlohmann::json& payload);
KMeansModel kmeans_from_json(const nlohmann::json& payload);

std::string hash_hex(std::uint64_t hash);

// "FSDF", u32 version, u32 N, u32 D, N*D f32 little-endian, optional newline-terminated labels.
std::vector<std::uint8_t> encode_features(const FeatureMatrix& features);
FeatureMatrix decode_features(std::span<const std::uint8_t> bytes);
void save_features(const FeatureMatrix& features, const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace fsd
