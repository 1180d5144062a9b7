#include "fsd/store.hpp"
#include "support.hpp"

#include <cstring>
#include <limits>

using namespace fsd;
using nlohmann::json;
using fsd::test::TempDir;

namespace {

FilterBank sample_bank() {
    std::mt19937_64 rng(1);
    std::vector<double> w = test::uniform_vector(2 * 9, rng);
    for (std::size_t k = 0; k < 2; ++k) project_constraints(std::span<double>(w).subspan(k * 9, 9), 3);
    return FilterBank(2, 3, w);
}

GaussianMixture sample_mixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FeatureMatrix x(0, 3);
    for (int i = 0; i < 40; ++i) x.append(test::uniform_vector(3, rng));
    GmmConfig cfg;
    cfg.components = 2;
    return fit_gmm(x, cfg).model;
}

std::string bank_text(const FilterBank& bank) {
    ModelFile file;
    file.kind = ModelKind::FilterBank;
    file.payload = to_json(bank);
    file.provenance = json{{"seed", 3}};
    return serialize_model(file);
}

ErrorCode parse_error(const std::string& text, std::optional<ModelKind> kind = std::nullopt) {
    return test::error_of([&] { parse_model(text, kind); });
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("filter bank round trip is exact and byte stable") {
    TempDir dir;
    const FilterBank bank = sample_bank();
    ModelFile file;
    file.kind = ModelKind::FilterBank;
    file.payload = to_json(bank);
    file.provenance = make_provenance(7, json{{"k", 2}});
    save_model(file, dir / "bank.json");
    const ModelFile loaded = load_model(dir / "bank.json", ModelKind::FilterBank);
    CHECK(bank_from_json(loaded.payload) == bank);
    CHECK(loaded.provenance["seed"] == 7);
    save_model(loaded, dir / "again.json");
    CHECK(test::read_bytes(dir / "bank.json") == test::read_bytes(dir / "again.json"));
}

TEST_CASE("corrupted model fixtures are rejected") {
    const std::string good = bank_text(sample_bank());
    CHECK_NOTHROW(parse_model(good, ModelKind::FilterBank));
    CHECK(parse_error(good.substr(0, good.size() / 2)) == ErrorCode::BadMagic);
    CHECK(parse_error("[1,2,3]") == ErrorCode::BadMagic);
    CHECK(parse_error("") == ErrorCode::BadMagic);

    json doc = json::parse(good);
    doc["format_version"] = 2;
    CHECK(parse_error(doc.dump()) == ErrorCode::BadVersion);

    doc = json::parse(good);
    CHECK(parse_error(doc.dump(), ModelKind::Detector) == ErrorCode::KindMismatch);

    doc = json::parse(good);
    std::vector<double> w(9, 0.9 / 8.0);
    w[4] = 0.0;
    doc["payload"]["filter_count"] = 1;
    doc["payload"]["weights"] = w;
    doc["payload"].erase("hash");
    try {
        parse_model(doc.dump());
        FAIL("expected a violation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvariantViolation);
        CHECK(std::string(e.what()).find("sum constraint") != std::string::npos);
    }

    doc = json::parse(good);
    doc["payload"]["weights"][0] = doc["payload"]["weights"][0].get<double>() + 1e-3;
    doc["payload"]["weights"][1] = doc["payload"]["weights"][1].get<double>() - 1e-3;
    CHECK(parse_error(doc.dump()) == ErrorCode::InvariantViolation);
}

TEST_CASE("detector round trip and mixture invariants") {
    DetectorModel det;
    det.real_model = sample_mixture(2);
    det.threshold = -4.25;
    det.quantile = 0.05;
    det.validation_size = 12;
    ModelFile file;
    file.kind = ModelKind::Detector;
    file.payload = to_json(det);
    const std::string text = serialize_model(file);
    const DetectorModel back = detector_from_json(parse_model(text, ModelKind::Detector).payload);
    CHECK(back.real_model == det.real_model);
    CHECK(back.threshold == det.threshold);
    CHECK(back.validation_size == 12);

    json doc = json::parse(text);
    doc["payload"]["mixture"]["weights"][0] = 0.9;
    doc["payload"]["mixture"]["weights"][1] = 0.3;
    try {
        parse_model(doc.dump());
        FAIL("expected a violation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvariantViolation);
        CHECK(std::string(e.what()).find("simplex") != std::string::npos);
    }
    doc = json::parse(text);
    doc["payload"]["mixture"]["variances"][0] = 1e-7;
    try {
        parse_model(doc.dump());
        FAIL("expected a violation");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("variance floor") != std::string::npos);
    }
}

TEST_CASE("attributor round trip keeps infinite thresholds") {
    AttributorModel att;
    att.sources = {{"a", sample_mixture(3)}, {"b", sample_mixture(4)}};
    for (double t : {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), -12.5}) {
        att.reject_threshold = t;
        ModelFile file;
        file.kind = ModelKind::Attributor;
        file.payload = to_json(att);
        const AttributorModel back = attributor_from_json(parse_model(serialize_model(file)).payload);
        CHECK(back.reject_threshold == t);
        CHECK(back.sources == att.sources);
    }
    json bad = to_json(att);
    std::swap(bad["sources"][0], bad["sources"][1]);
    CHECK(test::error_of([&] { attributor_from_json(bad); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("kmeans round trip") {
    KMeansModel km;
    km.k = 2;
    km.stats.mean = {0.5, 1.5};
    km.stats.stddev = {1.0, 2.0};
    km.centroids = {0.1, 0.2, -0.3, 0.4};
    km.inertia = 3.5;
    ModelFile file;
    file.kind = ModelKind::KMeans;
    file.payload = to_json(km);
    const KMeansModel back = kmeans_from_json(parse_model(serialize_model(file), ModelKind::KMeans).payload);
    CHECK(back.centroids == km.centroids);
    CHECK(back.stats == km.stats);
    CHECK(back.inertia == 3.5);
    json bad = to_json(km);
    bad["centroids"].erase(0);
    CHECK(test::error_of([&] { kmeans_from_json(bad); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("provenance honours SOURCE_DATE_EPOCH") {
    ::setenv("SOURCE_DATE_EPOCH", "0", 1);
    const json a = make_provenance(5, json::object());
    const json b = make_provenance(5, json::object());
    ::unsetenv("SOURCE_DATE_EPOCH");
    CHECK(a == b);
    CHECK(a["created"] == "1970-01-01T00:00:00Z");
    CHECK(a["seed"] == 5);
}

TEST_CASE("feature file byte layout") {
    FeatureMatrix m(0, 3);
    m.append(std::vector<double>{1.0, -2.5, 0.25}, "real");
    m.append(std::vector<double>{3.0, 0.0, -0.125}, "gan");
    std::vector<std::uint8_t> expected{'F', 'S', 'D', 'F'};
    put_u32(expected, 1);
    put_u32(expected, 2);
    put_u32(expected, 3);
    for (float f : {1.0f, -2.5f, 0.25f, 3.0f, 0.0f, -0.125f}) put_f32(expected, f);
    for (char c : std::string("real\ngan\n")) expected.push_back(static_cast<std::uint8_t>(c));
    CHECK(encode_features(m) == expected);
    CHECK(decode_features(expected) == m);
}

TEST_CASE("feature files round trip") {
    TempDir dir;
    FeatureMatrix empty(0, 5);
    save_features(empty, dir / "empty.fsdf");
    const FeatureMatrix e = load_features(dir / "empty.fsdf");
    CHECK(e.rows == 0);
    CHECK(e.cols == 5);

    std::mt19937_64 rng(5);
    FeatureMatrix m(0, 4);
    for (int i = 0; i < 7; ++i) {
        std::vector<double> row;
        for (double v : test::uniform_vector(4, rng)) row.push_back(static_cast<float>(v));
        m.append(row);
    }
    save_features(m, dir / "m.fsdf");
    CHECK(load_features(dir / "m.fsdf") == m);
    save_features(load_features(dir / "m.fsdf"), dir / "m2.fsdf");
    CHECK(test::read_bytes(dir / "m.fsdf") == test::read_bytes(dir / "m2.fsdf"));
}

TEST_CASE("corrupted feature files are rejected") {
    FeatureMatrix m(0, 2);
    m.append(std::vector<double>{1, 2}, "a");
    m.append(std::vector<double>{3, 4}, "b");
    const auto good = encode_features(m);

    auto bad = good;
    bad[0] = 'X';
    CHECK(test::error_of([&] { decode_features(bad); }) == ErrorCode::BadMagic);
    bad = good;
    bad[4] = 9;
    CHECK(test::error_of([&] { decode_features(bad); }) == ErrorCode::BadVersion);
    bad.assign(good.begin(), good.begin() + 20);
    CHECK(test::error_of([&] { decode_features(bad); }) == ErrorCode::SizeMismatch);
    bad = good;
    bad.insert(bad.end(), {'c', '\n'});
    CHECK(test::error_of([&] { decode_features(bad); }) == ErrorCode::SizeMismatch);
    CHECK(test::error_of([&] { decode_features(std::vector<std::uint8_t>{'F', 'S'}); }) == ErrorCode::BadMagic);

    FeatureMatrix wrong = m;
    wrong.labels.pop_back();
    CHECK(test::error_of([&] { encode_features(wrong); }) == ErrorCode::SizeMismatch);
    TempDir dir;
    CHECK(test::error_of([&] { load_features(dir / "absent.fsdf"); }) == ErrorCode::UnreadableFile);
}

TEST_CASE("atomic writes leave no temporary behind") {
    TempDir dir;
    write_file_atomic(dir / "a.txt", std::string_view("first"));
    write_file_atomic(dir / "a.txt", std::string_view("second"));
    CHECK(test::read_text(dir / "a.txt") == "second");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir.path())) ++files;
    CHECK(files == 1);
    CHECK(test::error_of([&] { write_file_atomic(dir / "missing" / "x.txt", std::string_view("x")); }) ==
          ErrorCode::IoError);
}

}
