#include "fsd/store.hpp"

#include "fsd/error.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <limits>
#include <unistd.h>

namespace fsd {

using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'F', 'S', 'D', 'F'};
constexpr std::size_t kFeatureHeader = 16;

[[noreturn]] void bad_payload(const std::string& what) { fail(ErrorCode::InvariantViolation, what); }

const json& field(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) bad_payload(std::string("missing field '") + key + "'");
    return obj.at(key);
}

std::vector<double> doubles(const json& value, const char* key) {
    const json& arr = field(value, key);
    if (!arr.is_array()) bad_payload(std::string("field '") + key + "' must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const json& v : arr) {
        if (!v.is_number()) bad_payload(std::string("field '") + key + "' must hold numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

std::size_t count(const json& value, const char* key) {
    const json& v = field(value, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        bad_payload(std::string("field '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

// JSON has no infinities; they travel as strings.
json encode_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double decode_real(const json& v, const char* key) {
    if (v.is_string()) {
        if (v == "inf") return std::numeric_limits<double>::infinity();
        if (v == "-inf") return -std::numeric_limits<double>::infinity();
    }
    if (!v.is_number()) bad_payload(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::optional<ModelKind> kind_from_name(const std::string& name) {
    for (ModelKind k : {ModelKind::FilterBank, ModelKind::Detector, ModelKind::Attributor, ModelKind::KMeans}) {
        if (model_kind_name(k) == name) return k;
    }
    return std::nullopt;
}

void validate_payload(ModelKind kind, const json& payload) {
    switch (kind) {
        case ModelKind::FilterBank: (void)bank_from_json(payload); break;
        case ModelKind::Detector: (void)detector_from_json(payload); break;
        case ModelKind::Attributor: (void)attributor_from_json(payload); break;
        case ModelKind::KMeans: (void)kmeans_from_json(payload); break;
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::UnreadableFile, "cannot open " + path.string());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::FilterBank: return "filter_bank";
        case ModelKind::Detector: return "detector";
        case ModelKind::Attributor: return "attributor";
        case ModelKind::KMeans: return "kmeans";
    }
    return "unknown";
}

std::string hash_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

json make_provenance(std::uint64_t seed, json config) {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return json{{"created", stamp}, {"seed", seed}, {"config", std::move(config)}};
}

std::string serialize_model(const ModelFile& file) {
    const json doc{{"format_version", file.format_version},
                   {"kind", std::string(model_kind_name(file.kind))},
                   {"payload", file.payload},
                   {"provenance", file.provenance}};
    return doc.dump(2) + "\n";
}

ModelFile parse_model(std::string_view text, std::optional<ModelKind> expected) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::exception& e) {
        fail(ErrorCode::BadMagic, std::string("not a model document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("format_version") || !doc.contains("kind") || !doc.contains("payload")) {
        fail(ErrorCode::BadMagic, "not a model document: missing format_version/kind/payload");
    }
    if (!doc["format_version"].is_number_integer() || doc["format_version"].get<long long>() != kModelFormatVersion) {
        fail(ErrorCode::BadVersion, "unsupported model format_version " + doc["format_version"].dump());
    }
    const auto kind = doc["kind"].is_string() ? kind_from_name(doc["kind"].get<std::string>()) : std::nullopt;
    if (!kind) fail(ErrorCode::BadMagic, "unknown model kind " + doc["kind"].dump());
    if (expected && *expected != *kind) {
        fail(ErrorCode::KindMismatch, "expected a " + std::string(model_kind_name(*expected)) + " model, found " +
                                          std::string(model_kind_name(*kind)));
    }
    ModelFile file;
    file.kind = *kind;
    file.payload = doc["payload"];
    file.provenance = doc.value("provenance", json::object());
    try {
        validate_payload(file.kind, file.payload);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvariantViolation, std::string("malformed payload: ") + e.what());
    }
    return file;
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
    validate_payload(file.kind, file.payload);
    write_file_atomic(path, serialize_model(file));
}

ModelFile load_model(const std::filesystem::path& path, std::optional<ModelKind> expected) {
    const auto bytes = read_all(path);
    return parse_model(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), expected);
}

json to_json(const FilterBank& bank) {
    return json{{"filter_count", bank.count()},
                {"side", bank.side()},
                {"weights", std::vector<double>(bank.weights().begin(), bank.weights().end())},
                {"hash", hash_hex(bank.hash())},
                {"pixel_range", "[0,1]"},
                {"grayscale", "bt601"}};
}

FilterBank bank_from_json(const json& payload) {
    const std::size_t k = count(payload, "filter_count");
    const std::size_t m = count(payload, "side");
    auto weights = doubles(payload, "weights");
    check_filter_constraints(weights, k, m);
    FilterBank bank(k, m, std::move(weights));
    if (payload.contains("hash") && payload["hash"] != hash_hex(bank.hash())) {
        bad_payload("filter bank hash does not match its weights");
    }
    return bank;
}

json to_json(const GaussianMixture& model) {
    model.validate();
    return json{{"components", model.components()},
                {"dimension", model.dimension()},
                {"weights", model.weights},
                {"means", model.means},
                {"variances", model.variances},
                {"feature_mean", model.stats.mean},
                {"feature_std", model.stats.stddev}};
}

GaussianMixture mixture_from_json(const json& payload) {
    GaussianMixture model;
    const std::size_t c = count(payload, "components");
    const std::size_t d = count(payload, "dimension");
    model.weights = doubles(payload, "weights");
    model.means = doubles(payload, "means");
    model.variances = doubles(payload, "variances");
    model.stats.mean = doubles(payload, "feature_mean");
    model.stats.stddev = doubles(payload, "feature_std");
    if (model.weights.size() != c || model.stats.mean.size() != d) bad_payload("mixture shape does not match header");
    model.validate();
    return model;
}

json to_json(const DetectorModel& model) {
    if (!std::isfinite(model.threshold)) bad_payload("detector threshold must be finite");
    return json{{"mixture", to_json(model.real_model)},
                {"threshold", model.threshold},
                {"quantile", model.quantile},
                {"validation_size", model.validation_size}};
}

DetectorModel detector_from_json(const json& payload) {
    DetectorModel model;
    model.real_model = mixture_from_json(field(payload, "mixture"));
    model.threshold = decode_real(field(payload, "threshold"), "threshold");
    if (!std::isfinite(model.threshold)) bad_payload("detector threshold must be finite");
    model.quantile = decode_real(field(payload, "quantile"), "quantile");
    model.validation_size = count(payload, "validation_size");
    return model;
}

json to_json(const AttributorModel& model) {
    model.validate();
    json sources = json::array();
    for (const auto& [label, gmm] : model.sources) sources.push_back(json{{"label", label}, {"mixture", to_json(gmm)}});
    return json{{"sources", sources}, {"reject_threshold", encode_real(model.reject_threshold)}};
}

AttributorModel attributor_from_json(const json& payload) {
    AttributorModel model;
    const json& sources = field(payload, "sources");
    if (!sources.is_array()) bad_payload("attributor sources must be an array");
    for (const json& s : sources) {
        const json& label = field(s, "label");
        if (!label.is_string()) bad_payload("source label must be a string");
        model.sources.emplace_back(label.get<std::string>(), mixture_from_json(field(s, "mixture")));
    }
    model.reject_threshold = decode_real(field(payload, "reject_threshold"), "reject_threshold");
    model.validate();
    return model;
}

json to_json(const KMeansModel& model) {
    return json{{"k", model.k},
                {"dimension", model.stats.dimension()},
                {"centroids", model.centroids},
                {"inertia", model.inertia},
                {"feature_mean", model.stats.mean},
                {"feature_std", model.stats.stddev}};
}

KMeansModel kmeans_from_json(const json& payload) {
    KMeansModel model;
    model.k = count(payload, "k");
    const std::size_t d = count(payload, "dimension");
    model.centroids = doubles(payload, "centroids");
    model.inertia = decode_real(field(payload, "inertia"), "inertia");
    model.stats.mean = doubles(payload, "feature_mean");
    model.stats.stddev = doubles(payload, "feature_std");
    if (model.k == 0 || d == 0 || model.centroids.size() != model.k * d || model.stats.mean.size() != d ||
        model.stats.stddev.size() != d) {
        bad_payload("kmeans shape: centroids must be k x D with matching stats");
    }
    for (double v : model.centroids) {
        if (!std::isfinite(v)) bad_payload("kmeans centroids must be finite");
    }
    if (!(model.inertia >= 0.0)) bad_payload("kmeans inertia must be >= 0");
    return model;
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& features) {
    require(features.values.size() == features.rows * features.cols, ErrorCode::SizeMismatch, "matrix data size mismatch");
    require(features.labels.empty() || features.labels.size() == features.rows, ErrorCode::SizeMismatch,
            "label count " + std::to_string(features.labels.size()) + " does not match row count " +
                std::to_string(features.rows));
    std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 4);
    put_u32(out, kFeatureFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(features.rows));
    put_u32(out, static_cast<std::uint32_t>(features.cols));
    out.reserve(out.size() + features.values.size() * 4);
    for (double v : features.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    for (const std::string& label : features.labels) {
        require(label.find('\n') == std::string::npos, ErrorCode::InvalidArgument, "labels cannot contain newlines");
        out.insert(out.end(), label.begin(), label.end());
        out.push_back('\n');
    }
    return out;
}

FeatureMatrix decode_features(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFeatureHeader || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
        fail(ErrorCode::BadMagic, "not a feature matrix file");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kFeatureFormatVersion) fail(ErrorCode::BadVersion, "unsupported feature file version " + std::to_string(version));
    FeatureMatrix out(get_u32(bytes, 8), get_u32(bytes, 12));
    const std::size_t payload = out.rows * out.cols * 4;
    if (bytes.size() < kFeatureHeader + payload) {
        fail(ErrorCode::SizeMismatch, "feature file declares " + std::to_string(out.rows) + "x" +
                                          std::to_string(out.cols) + " values but holds fewer");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, kFeatureHeader + 4 * i)));
    }
    const std::size_t tail = kFeatureHeader + payload;
    if (tail < bytes.size()) {
        std::string block(bytes.begin() + static_cast<std::ptrdiff_t>(tail), bytes.end());
        std::size_t start = 0;
        while (start < block.size()) {
            const std::size_t end = block.find('\n', start);
            if (end == std::string::npos) {
                out.labels.push_back(block.substr(start));
                break;
            }
            out.labels.push_back(block.substr(start, end - start));
            start = end + 1;
        }
        if (out.labels.size() != out.rows) {
            fail(ErrorCode::SizeMismatch, "label block holds " + std::to_string(out.labels.size()) + " labels for " +
                                              std::to_string(out.rows) + " rows");
        }
    }
    return out;
}

void save_features(const FeatureMatrix& features, const std::filesystem::path& path) {
    write_file_atomic(path, encode_features(features));
}

FeatureMatrix load_features(const std::filesystem::path& path) { return decode_features(read_all(path)); }

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) fail(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorCode::IoError, "cannot move output into " + path.string());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace fsd
