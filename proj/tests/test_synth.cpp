#include "fsd/synth.hpp"
#include "support.hpp"

using namespace fsd;
using fsd::test::TempDir;

TEST_SUITE("synth") {

TEST_CASE("default sources have distinct kernels") {
    const SyntheticSourceSpec spec = default_synthetic_spec();
    CHECK(spec.sources.size() == 5);
    CHECK_NOTHROW(spec.validate());
    for (const auto& s : spec.sources) {
        double sum = 0.0;
        for (double v : s.kernel) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("duplicate kernels need an explicit opt-in") {
    SyntheticSourceSpec spec = default_synthetic_spec();
    spec.sources.push_back({"copy", 3, {0, 0, 0, 0, 1, 0, 0, 0, 0}, 0.05});
    CHECK(test::error_of([&] { spec.validate(); }) == ErrorCode::InvalidArgument);
    spec.allow_duplicate_kernels = true;
    CHECK_NOTHROW(spec.validate());
    spec.sources.back().id = "real";
    CHECK(test::error_of([&] { spec.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("rendering is deterministic and quantized") {
    SyntheticSourceSpec spec = default_synthetic_spec();
    spec.size = 32;
    const GrayImage a = render_synthetic(spec, 2, 5);
    CHECK(a == render_synthetic(spec, 2, 5));
    CHECK_FALSE(a == render_synthetic(spec, 2, 6));
    CHECK(a.width() == 32);
    for (double v : a.values()) CHECK(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
}

TEST_CASE("a noiseless delta source reproduces the shared scene") {
    SyntheticSourceSpec spec;
    spec.size = 24;
    spec.sources = {{"plain", 1, {1.0}, 0.0}};
    const Field scene = render_scene(spec, 3);
    const GrayImage img = render_synthetic(spec, 0, 3);
    for (std::size_t i = 0; i < scene.size(); ++i) CHECK(img.values()[i] == to_u8(scene.values()[i]) / 255.0);
}

TEST_CASE("spec JSON round trip") {
    SyntheticSourceSpec spec = default_synthetic_spec();
    spec.seed = 77;
    spec.scene_offset = 9;
    const SyntheticSourceSpec back = synthetic_spec_from_json(to_json(spec));
    CHECK(to_json(back) == to_json(spec));
    CHECK(test::error_of([] { synthetic_spec_from_json(nlohmann::json{{"seed", 1}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("corpus writer lays out one folder per source") {
    TempDir dir;
    SyntheticSourceSpec spec = default_synthetic_spec();
    spec.count = 2;
    spec.size = 24;
    const auto entries = write_synthetic_corpus(spec, dir.path());
    CHECK(entries.size() == 10);
    CHECK(std::filesystem::exists(dir / "blur/0001.png"));
    CHECK(load_grayscale(dir / "blur/0001.png") == render_synthetic(spec, 1, 1));
    const std::string manifest = test::read_text(dir / "manifest.csv");
    CHECK(manifest.rfind("path,label\nreal/0000.png,real\n", 0) == 0);
}

}
