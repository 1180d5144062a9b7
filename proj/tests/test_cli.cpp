#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli_runner.hpp"
#include "fsd/image.hpp"

#include <cmath>
#include <sstream>

using namespace fsd::test;

namespace {

// Small three-source corpus with a trained bank and described features, built once.
struct Workspace {
    TempDir dir;
    std::filesystem::path log = dir / "log.txt";

    CliResult run(const std::vector<std::string>& args) { return run_cli(args, log); }
    std::string p(const std::string& name) const { return (dir / name).string(); }

    Workspace() {
        write_text(dir / "spec.json", R"({"seed": 4, "count": 8, "size": 48, "sources": [
            {"id": "real", "kernel_side": 1, "kernel": [1.0], "noise": 0.03},
            {"id": "blur", "kernel_side": 3, "kernel": [0.0625,0.125,0.0625,0.125,0.25,0.125,0.0625,0.125,0.0625], "noise": 0.03},
            {"id": "sharp", "kernel_side": 3, "kernel": [0,-0.2,0,-0.2,1.8,-0.2,0,-0.2,0], "noise": 0.03}]})");
        REQUIRE(run({"synth-sources", "--spec", p("spec.json"), "--out-dir", p("corpus")}).exit_code == 0);
        std::ostringstream real;
        real << "path,label\n";
        for (int i = 0; i < 8; ++i) real << "real/000" << i << ".png,real\n";
        write_text(dir / "corpus/real.csv", real.str());
        const CliResult t = run({"train-filters", "--manifest", p("corpus/real.csv"), "--out", p("bank.json"), "--k", "2",
                                 "--m", "5", "--epochs", "2", "--crop", "32", "--seed", "3"});
        REQUIRE_MESSAGE(t.exit_code == 0, t.output);
        const CliResult d = run({"describe", "--manifest", p("corpus/manifest.csv"), "--bank", p("bank.json"), "--out",
                                 p("all.fsdf"), "--b", "3", "--scales", "2", "--workers", "2"});
        REQUIRE_MESSAGE(d.exit_code == 0, d.output);
    }
};

Workspace& workspace() {
    static Workspace ws;
    return ws;
}

std::vector<std::string> data_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
    TempDir dir;
    CHECK(run_cli({"--help"}, dir / "log").exit_code == 0);
    CHECK(run_cli({"no-such-command"}, dir / "log").exit_code == 2);
    CHECK(run_cli({"describe"}, dir / "log").exit_code == 2);
    const CliResult missing = run_cli({"train-filters", "--manifest", (dir / "absent.csv").string(), "--out",
                                       (dir / "b.json").string()}, dir / "log");
    CHECK(missing.exit_code == 2);
    CHECK(missing.output.find("absent.csv") != std::string::npos);
}

TEST_CASE("training is reproducible and reports its losses") {
    Workspace& ws = workspace();
    const CliResult again = ws.run({"train-filters", "--manifest", ws.p("corpus/real.csv"), "--out", ws.p("bank2.json"),
                                    "--k", "2", "--m", "5", "--epochs", "2", "--crop", "32", "--seed", "3"});
    REQUIRE(again.exit_code == 0);
    CHECK(read_bytes(ws.dir / "bank.json") == read_bytes(ws.dir / "bank2.json"));
    CHECK(key_value(again.output, "steps") == 16);
    CHECK(std::isfinite(key_value(again.output, "L_E")));
    CHECK(key_value(again.output, "sigma_min") > 0.0);
}

TEST_CASE("single filter without diversity trains") {
    Workspace& ws = workspace();
    const CliResult r = ws.run({"train-filters", "--manifest", ws.p("corpus/real.csv"), "--out", ws.p("k1.json"), "--k", "1",
                                "--m", "3", "--lambda", "0", "--epochs", "1", "--crop", "24"});
    CHECK(r.exit_code == 0);
}

TEST_CASE("constant images train to zero energy") {
    Workspace& ws = workspace();
    std::filesystem::create_directories(ws.dir / "flat");
    for (int i = 0; i < 3; ++i) {
        fsd::write_png(ws.dir / "flat" / (std::to_string(i) + ".png"), 32, 32, 1, std::vector<std::uint8_t>(32 * 32, 90 + i));
    }
    write_text(ws.dir / "flat/manifest.csv", "path\n0.png\n1.png\n2.png\n");
    const CliResult r = ws.run({"train-filters", "--manifest", ws.p("flat/manifest.csv"), "--out", ws.p("flat_bank.json"),
                                "--k", "2", "--m", "3", "--epochs", "2", "--crop", "24"});
    REQUIRE(r.exit_code == 0);
    CHECK(key_value(r.output, "L_E") < 1e-24);
}

TEST_CASE("description output is identical across worker counts") {
    Workspace& ws = workspace();
    for (const char* workers : {"1", "4"}) {
        const CliResult r = ws.run({"describe", "--manifest", ws.p("corpus/manifest.csv"), "--bank", ws.p("bank.json"),
                                    "--out", ws.p(std::string("w") + workers + ".fsdf"), "--b", "3", "--scales", "2",
                                    "--workers", workers});
        REQUIRE(r.exit_code == 0);
    }
    CHECK(read_bytes(ws.dir / "w1.fsdf") == read_bytes(ws.dir / "w4.fsdf"));
    CHECK(read_bytes(ws.dir / "w1.fsdf") == read_bytes(ws.dir / "all.fsdf"));
}

TEST_CASE("unreadable and undersized images fail unless skipped") {
    Workspace& ws = workspace();
    write_text(ws.dir / "corpus/broken.png", "garbage");
    write_text(ws.dir / "corpus/mixed.csv", "path,label\nreal/0000.png,real\nbroken.png,real\nreal/0001.png,real\n");
    const std::vector<std::string> base{"describe", "--manifest", ws.p("corpus/mixed.csv"), "--bank", ws.p("bank.json"),
                                        "--b", "3", "--scales", "2", "--out"};
    auto args = base;
    args.push_back(ws.p("mixed.fsdf"));
    const CliResult strict = ws.run(args);
    CHECK(strict.exit_code == 1);
    CHECK(strict.output.find("broken.png") != std::string::npos);
    args.push_back("--skip-errors");
    const CliResult lenient = ws.run(args);
    CHECK(lenient.exit_code == 0);
    CHECK(lenient.output.find("described 2/3") != std::string::npos);
}

TEST_CASE("detector, detection and AUC") {
    Workspace& ws = workspace();
    REQUIRE(ws.run({"describe", "--manifest", ws.p("corpus/real.csv"), "--bank", ws.p("bank.json"), "--out",
                    ws.p("real.fsdf"), "--b", "3", "--scales", "2"}).exit_code == 0);
    const CliResult fit = ws.run({"fit-detector", "--features", ws.p("real.fsdf"), "--components", "1", "--out",
                                  ws.p("det.json")});
    REQUIRE_MESSAGE(fit.exit_code == 0, fit.output);
    const CliResult det = ws.run({"detect", "--features", ws.p("all.fsdf"), "--model", ws.p("det.json"), "--out-scores",
                                  ws.p("scores.csv")});
    REQUIRE(det.exit_code == 0);
    const std::string csv = read_text(ws.dir / "scores.csv");
    CHECK(csv.rfind("# seed:", 0) == 0);
    CHECK(csv.find("# config:") != std::string::npos);
    const auto lines = data_lines(csv);
    REQUIRE(lines.size() == 25);
    CHECK(lines[0] == "path,score,label");
    CHECK(lines[1].rfind("real/0000.png,", 0) == 0);
    const CliResult ev = ws.run({"eval", "--metric", "auc", "--scores", ws.p("scores.csv"), "--truth",
                                 ws.p("corpus/manifest.csv")});
    REQUIRE(ev.exit_code == 0);
    const double auc = key_value(ev.output, "auc");
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
    const CliResult sweep = ws.run({"eval", "--metric", "threshold-sweep", "--scores", ws.p("scores.csv"), "--truth",
                                    ws.p("corpus/manifest.csv"), "--points", "11", "--out", ws.p("sweep.csv")});
    REQUIRE(sweep.exit_code == 0);
    CHECK(data_lines(read_text(ws.dir / "sweep.csv")).size() == 12);
}

TEST_CASE("attribution and open-set metrics") {
    Workspace& ws = workspace();
    const CliResult fit = ws.run({"fit-attributor", "--features-per-source", ws.p("all.fsdf"), "--components", "1",
                                  "--out", ws.p("att.json")});
    REQUIRE_MESSAGE(fit.exit_code == 0, fit.output);
    CHECK(key_value(fit.output, "sources") == 3);
    REQUIRE(ws.run({"attribute", "--features", ws.p("all.fsdf"), "--model", ws.p("att.json"), "--out",
                    ws.p("att.csv")}).exit_code == 0);
    const auto lines = data_lines(read_text(ws.dir / "att.csv"));
    REQUIRE(lines.size() == 25);
    CHECK(lines[0] == "path,source,max_ll,best_source");
    const CliResult ev = ws.run({"eval", "--metric", "au-oscr", "--assignments", ws.p("att.csv"), "--truth",
                                 ws.p("corpus/manifest.csv"), "--known", "real,blur"});
    REQUIRE_MESSAGE(ev.exit_code == 0, ev.output);
    CHECK(key_value(ev.output, "au_oscr") >= 0.0);
    CHECK(key_value(ev.output, "au_oscr") <= 1.0);
}

TEST_CASE("clustering reports all three scores") {
    Workspace& ws = workspace();
    const CliResult c = ws.run({"cluster", "--features", ws.p("all.fsdf"), "--k", "3", "--out", ws.p("clusters.csv"),
                                "--model", ws.p("km.json")});
    REQUIRE(c.exit_code == 0);
    CHECK(key_value(c.output, "k") == 3);
    const CliResult ev = ws.run({"eval", "--metric", "clustering", "--assignments", ws.p("clusters.csv"), "--truth",
                                 ws.p("corpus/manifest.csv")});
    REQUIRE(ev.exit_code == 0);
    for (const char* key : {"accuracy", "purity", "nmi"}) CHECK(std::isfinite(key_value(ev.output, key)));
    const CliResult over = ws.run({"eval", "--metric", "clustering", "--features", ws.p("all.fsdf"), "--truth",
                                   ws.p("corpus/manifest.csv"), "--k-multiple", "2"});
    REQUIRE_MESSAGE(over.exit_code == 0, over.output);
    CHECK(over.output.find("k=6") != std::string::npos);
    for (const char* key : {"accuracy", "purity", "nmi"}) CHECK(std::isfinite(key_value(over.output, key)));
    CHECK(ws.run({"cluster", "--features", ws.p("all.fsdf"), "--k", "100", "--out", ws.p("c.csv")}).exit_code == 1);
}

TEST_CASE("corrupted models are domain errors") {
    Workspace& ws = workspace();
    write_text(ws.dir / "bad.json", "{\"format_version\": 1, \"kind\": \"detec");
    CHECK(ws.run({"detect", "--features", ws.p("all.fsdf"), "--model", ws.p("bad.json"), "--out-scores",
                  ws.p("x.csv")}).exit_code == 1);
    CHECK(ws.run({"detect", "--features", ws.p("all.fsdf"), "--model", ws.p("bank.json"), "--out-scores",
                  ws.p("x.csv")}).exit_code == 1);
}

TEST_CASE("robustness sweep starts from the uncompressed baseline") {
    Workspace& ws = workspace();
    if (!std::filesystem::exists(ws.dir / "det.json")) {
        REQUIRE(ws.run({"describe", "--manifest", ws.p("corpus/real.csv"), "--bank", ws.p("bank.json"), "--out",
                        ws.p("real.fsdf"), "--b", "3", "--scales", "2"}).exit_code == 0);
        REQUIRE(ws.run({"fit-detector", "--features", ws.p("real.fsdf"), "--components", "1", "--out",
                        ws.p("det.json")}).exit_code == 0);
    }
    const CliResult r = ws.run({"eval-robustness", "--manifest", ws.p("corpus/manifest.csv"), "--bank", ws.p("bank.json"),
                                "--detector", ws.p("det.json"), "--qualities", "90", "--out", ws.p("rob.csv")});
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    CHECK(r.output.rfind("quality=None", 0) == 0);
    const auto lines = data_lines(read_text(ws.dir / "rob.csv"));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "quality,auc,degradation");
    CHECK(lines[1].rfind("None,", 0) == 0);
    CHECK(lines[1].substr(lines[1].rfind(',')) == ",0");
}

}
