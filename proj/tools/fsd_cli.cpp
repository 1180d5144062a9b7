// Command-line front end over the fsd C interface.

#include "fsd/fsd.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Failure {
    int exit_code;
    std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitUsage, message}; }

void check(fsd_status status) {
    if (status == FSD_OK) return;
    const bool io = status == FSD_ERR_UNREADABLE_FILE || status == FSD_ERR_IO;
    throw Failure{io ? kExitUsage : kExitDomain, fsd_last_error()};
}

struct Free {
    void operator()(fsd_image* p) const { fsd_image_free(p); }
    void operator()(fsd_bank* p) const { fsd_bank_free(p); }
    void operator()(fsd_features* p) const { fsd_features_free(p); }
    void operator()(fsd_detector* p) const { fsd_detector_free(p); }
    void operator()(fsd_attributor* p) const { fsd_attributor_free(p); }
    void operator()(fsd_clusters* p) const { fsd_clusters_free(p); }
    void operator()(char* p) const { fsd_string_free(p); }
};

template <class T>
using Handle = std::unique_ptr<T, Free>;

template <class T, class F>
Handle<T> make(F&& call) {
    T* raw = nullptr;
    check(call(&raw));
    return Handle<T>(raw);
}

// ---- CSV

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else if (c != '\r') {
            out.back() += c;
        }
    }
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name, const std::string& source) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) usage_error(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

// '#' lines are comments; the first remaining line is the header.
Table read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Failure{kExitUsage, "UnreadableFile: cannot open " + path.string()};
    Table t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) usage_error(path.string() + ": ragged row '" + line + "'");
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) usage_error(path.string() + ": empty CSV");
    return t;
}

class CsvWriter {
public:
    explicit CsvWriter(const fs::path& path) : path_(path), out_(path) {
        if (!out_) throw Failure{kExitUsage, "IoError: cannot write " + path.string()};
    }
    void comment(const std::string& key, const json& value) { out_ << "# " << key << ": " << value.dump() << '\n'; }
    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
        out_ << '\n';
    }
    ~CsvWriter() noexcept(false) {
        out_.flush();
        if (!out_ && std::uncaught_exceptions() == 0) throw Failure{kExitUsage, "IoError: write failed for " + path_.string()};
    }

private:
    fs::path path_;
    std::ofstream out_;
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- manifests

struct Manifest {
    std::vector<std::string> paths;     // as written
    std::vector<std::string> resolved;  // relative to the manifest's directory
    std::vector<std::string> labels;    // empty when unlabeled
};

Manifest read_manifest(const fs::path& path) {
    if (!fs::exists(path)) throw Failure{kExitUsage, "UnreadableFile: manifest not found: " + path.string()};
    const Table t = read_csv(path);
    const std::size_t pc = t.column("path", path.string());
    const bool labelled = std::find(t.header.begin(), t.header.end(), "label") != t.header.end();
    const std::size_t lc = labelled ? t.column("label", path.string()) : 0;
    Manifest m;
    std::set<std::string> seen;
    for (const auto& row : t.rows) {
        const std::string& p = row[pc];
        if (p.empty()) usage_error(path.string() + ": empty path");
        if (!seen.insert(p).second) usage_error(path.string() + ": duplicate path " + p);
        m.paths.push_back(p);
        const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : path.parent_path() / p;
        m.resolved.push_back(full.string());
        if (labelled) {
            if (row[lc].empty()) usage_error(path.string() + ": empty label for " + p);
            m.labels.push_back(row[lc]);
        }
    }
    return m;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
    std::vector<const char*> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s.c_str());
    return out;
}

// ---- provenance and sidecars

json provenance(std::uint64_t seed, const json& config) {
    Handle<char> text = make<char>([&](char** out) { return fsd_make_provenance(seed, config.dump().c_str(), out); });
    return json::parse(text.get());
}

json model_provenance(const std::string& path) {
    Handle<char> text = make<char>([&](char** out) { return fsd_model_provenance(path.c_str(), out); });
    return json::parse(text.get());
}

fs::path sidecar_path(const std::string& features) { return fs::path(features + ".meta.json"); }

json read_sidecar(const std::string& features) {
    std::ifstream in(sidecar_path(features));
    if (!in) return json::object();
    try {
        return json::parse(in);
    } catch (const json::exception&) {
        usage_error("malformed sidecar " + sidecar_path(features).string());
    }
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) throw Failure{kExitUsage, "IoError: cannot write " + path.string()};
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Row names for a feature file: manifest paths from the sidecar, otherwise row indices.
std::vector<std::string> row_names(const std::string& features, std::size_t rows) {
    const json meta = read_sidecar(features);
    if (meta.contains("rows") && meta["rows"].is_array() && meta["rows"].size() == rows) {
        return meta["rows"].get<std::vector<std::string>>();
    }
    std::vector<std::string> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = std::to_string(i);
    return out;
}

Handle<fsd_features> load_features(const std::string& path) {
    return make<fsd_features>([&](fsd_features** out) { return fsd_features_load(path.c_str(), out); });
}

std::vector<double> row_of(const fsd_features* f, std::size_t i) {
    const std::size_t d = fsd_features_cols(f);
    const double* p = fsd_features_data(f) + i * d;
    return std::vector<double>(p, p + d);
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            usage_error("bad number '" + item + "' in " + what);
        }
    }
    return out;
}

// ---- describe config shared by describe and eval-robustness

struct DescribeOptions {
    std::size_t side = 11;
    std::size_t scales = 3;
    std::size_t max_iters = 10000;
    double lr = 0.1;
    std::size_t patience = 20;
    double min_lr = 1e-4;
    std::size_t max_side = 512;
    std::size_t workers = 1;

    void add(CLI::App* cmd) {
        cmd->add_option("--b", side, "self-description neighborhood side B")->check(CLI::PositiveNumber);
        cmd->add_option("--scales", scales, "number of dyadic scales L")->check(CLI::PositiveNumber);
        cmd->add_option("--max-iters", max_iters, "fit iteration cap")->check(CLI::PositiveNumber);
        cmd->add_option("--lr", lr, "initial fit learning rate")->check(CLI::PositiveNumber);
        cmd->add_option("--patience", patience, "plateau patience in iterations");
        cmd->add_option("--min-lr", min_lr, "stop once the learning rate falls below this");
        cmd->add_option("--max-side", max_side, "center-crop cap in pixels, 0 disables");
        cmd->add_option("--workers", workers, "parallel description workers")->check(CLI::PositiveNumber);
    }

    fsd_describe_config config() const {
        fsd_describe_config c;
        fsd_describe_config_default(&c);
        c.side = side;
        c.scale_count = scales;
        c.max_iterations = max_iters;
        c.learning_rate = lr;
        c.patience = patience;
        c.min_learning_rate = min_lr;
        return c;
    }

    json echo() const {
        return json{{"b", side}, {"scales", scales}, {"max_iters", max_iters}, {"lr", lr},
                    {"patience", patience}, {"min_lr", min_lr}, {"max_side", max_side}};
    }

    void from_echo(const json& e) {
        side = e.value("b", side);
        scales = e.value("scales", scales);
        max_iters = e.value("max_iters", max_iters);
        lr = e.value("lr", lr);
        patience = e.value("patience", patience);
        min_lr = e.value("min_lr", min_lr);
        max_side = e.value("max_side", max_side);
    }
};

struct BatchOutcome {
    Handle<fsd_features> features;
    std::vector<std::string> rows;
    json failures = json::array();
};

BatchOutcome describe_manifest(const Manifest& m, const fsd_bank* bank, const DescribeOptions& opts, int jpeg_quality) {
    const auto paths = c_strings(m.resolved);
    const auto labels = c_strings(m.labels);
    const fsd_describe_config cfg = opts.config();
    fsd_batch_options batch;
    fsd_batch_options_default(&batch);
    batch.max_side = opts.max_side;
    batch.workers = opts.workers;
    batch.jpeg_quality = jpeg_quality;

    struct Sink {
        const Manifest* manifest;
        std::vector<char> failed;
        json failures = json::array();
    } sink{&m, std::vector<char>(m.paths.size(), 0)};
    auto on_failure = [](void* user, size_t index, fsd_status status, const char* message) {
        auto* s = static_cast<Sink*>(user);
        s->failed[index] = 1;
        s->failures.push_back(json{{"path", s->manifest->paths[index]}, {"status", fsd_status_name(status)}, {"message", message}});
    };
    BatchOutcome out;
    out.features = make<fsd_features>([&](fsd_features** f) {
        return fsd_describe_files(paths.data(), m.labels.empty() ? nullptr : labels.data(), paths.size(), bank, &cfg,
                                  &batch, on_failure, &sink, f);
    });
    for (std::size_t i = 0; i < m.paths.size(); ++i) {
        if (!sink.failed[i]) out.rows.push_back(m.paths[i]);
    }
    out.failures = std::move(sink.failures);
    return out;
}

Handle<fsd_bank> load_bank(const std::string& path) {
    return make<fsd_bank>([&](fsd_bank** out) { return fsd_bank_load(path.c_str(), out); });
}

// ---- commands

struct TrainArgs {
    std::string manifest, out;
    fsd_train_config config{};
    std::size_t max_side = 512;
};

int run_train(const TrainArgs& a) {
    const Manifest m = read_manifest(a.manifest);
    if (m.paths.empty()) usage_error("manifest lists no images");
    std::vector<Handle<fsd_image>> images;
    for (const auto& p : m.resolved) {
        images.push_back(make<fsd_image>([&](fsd_image** out) {
            return fsd_image_load(p.c_str(), a.max_side, 2 * a.config.side + 1, out);
        }));
    }
    std::vector<const fsd_image*> raw;
    for (const auto& img : images) raw.push_back(img.get());
    fsd_train_report report{};
    Handle<fsd_bank> bank = make<fsd_bank>([&](fsd_bank** out) {
        return fsd_bank_train(raw.data(), raw.size(), &a.config, out, &report);
    });
    const json config{{"manifest", a.manifest}, {"k", a.config.filter_count}, {"m", a.config.side},
                      {"lambda", a.config.lambda}, {"alpha", a.config.alpha}, {"lr", a.config.learning_rate},
                      {"epochs", a.config.epochs}, {"crop", a.config.crop},
                      {"crops_per_image", a.config.crops_per_image}, {"max_side", a.max_side},
                      {"images", m.paths.size()}};
    check(fsd_bank_save(bank.get(), a.out.c_str(), provenance(a.config.seed, config).dump().c_str()));
    std::printf("steps=%zu L_E=%.9g L_diversity=%.9g sigma_min=%.9g hash=%s\n", report.steps, report.energy,
                report.diversity, report.sigma_min, hex(fsd_bank_hash(bank.get())).c_str());
    return 0;
}

struct DescribeArgs {
    std::string manifest, bank, out;
    DescribeOptions opts;
    bool skip_errors = false;
};

int run_describe(const DescribeArgs& a) {
    const Manifest m = read_manifest(a.manifest);
    Handle<fsd_bank> bank = load_bank(a.bank);
    const json bank_prov = model_provenance(a.bank);
    BatchOutcome r = describe_manifest(m, bank.get(), a.opts, 0);
    check(fsd_features_save(r.features.get(), a.out.c_str()));
    const json meta{{"seed", bank_prov.value("seed", json())},
                    {"config", a.opts.echo()},
                    {"manifest", a.manifest},
                    {"bank", a.bank},
                    {"bank_hash", hex(fsd_bank_hash(bank.get()))},
                    {"rows", r.rows},
                    {"failures", r.failures}};
    write_json(sidecar_path(a.out), meta);
    std::printf("described %zu/%zu images, dimension %zu\n", fsd_features_rows(r.features.get()), m.paths.size(),
                fsd_features_cols(r.features.get()));
    if (!r.failures.empty()) {
        std::fprintf(stderr, "%zu image(s) failed:\n", r.failures.size());
        for (const auto& f : r.failures) std::fprintf(stderr, "  %s\n", f["message"].get<std::string>().c_str());
        if (!a.skip_errors) return kExitDomain;
    }
    return 0;
}

fsd_gmm_config gmm_config(std::size_t components, std::size_t max_iter, std::uint64_t seed) {
    fsd_gmm_config c;
    fsd_gmm_config_default(&c);
    c.components = components;
    c.max_iterations = max_iter;
    c.seed = seed;
    return c;
}

json depends_on(const std::string& features) {
    const json meta = read_sidecar(features);
    json d = json::object();
    if (meta.contains("bank_hash")) d["bank_hash"] = meta["bank_hash"];
    if (meta.contains("config")) d["describe"] = meta["config"];
    return d;
}

struct FitDetectorArgs {
    std::string features, val_features, out;
    std::size_t components = 8;
    std::size_t max_iter = 200;
    double quantile = 0.05;
    std::uint64_t seed = 0;
};

int run_fit_detector(const FitDetectorArgs& a) {
    Handle<fsd_features> train = load_features(a.features);
    Handle<fsd_features> val = a.val_features.empty() ? nullptr : load_features(a.val_features);
    const fsd_gmm_config cfg = gmm_config(a.components, a.max_iter, a.seed);
    Handle<fsd_detector> det = make<fsd_detector>([&](fsd_detector** out) {
        return fsd_detector_fit(train.get(), val.get(), &cfg, a.quantile, out);
    });
    json prov = provenance(a.seed, json{{"features", a.features}, {"val_features", a.val_features},
                                        {"components", a.components}, {"max_iter", a.max_iter},
                                        {"quantile", a.quantile}});
    prov["depends"] = depends_on(a.features);
    check(fsd_detector_save(det.get(), a.out.c_str(), prov.dump().c_str()));
    std::printf("threshold=%.9g dimension=%zu\n", fsd_detector_threshold(det.get()), fsd_detector_dimension(det.get()));
    return 0;
}

struct DetectArgs {
    std::string features, model, out;
};

int run_detect(const DetectArgs& a) {
    Handle<fsd_features> f = load_features(a.features);
    Handle<fsd_detector> det = make<fsd_detector>([&](fsd_detector** out) { return fsd_detector_load(a.model.c_str(), out); });
    const json prov = model_provenance(a.model);
    const auto names = row_names(a.features, fsd_features_rows(f.get()));
    CsvWriter csv(a.out);
    csv.comment("seed", prov.value("seed", json()));
    csv.comment("config", json{{"features", a.features}, {"model", a.model}, {"threshold", fsd_detector_threshold(det.get())},
                               {"detector", prov.value("config", json())}});
    csv.row({"path", "score", "label"});
    std::size_t real = 0;
    for (std::size_t i = 0; i < fsd_features_rows(f.get()); ++i) {
        const auto x = row_of(f.get(), i);
        double score = 0.0;
        int is_real = 0;
        check(fsd_detector_score(det.get(), x.data(), x.size(), &score, &is_real));
        real += static_cast<std::size_t>(is_real);
        csv.row({names[i], num(score), is_real ? "real" : "synthetic"});
    }
    std::printf("%zu real, %zu synthetic\n", real, fsd_features_rows(f.get()) - real);
    return 0;
}

// "label=path" assigns a label; a bare path keeps the labels stored in the file.
Handle<fsd_features> gather_sources(const std::vector<std::string>& specs) {
    std::vector<Handle<fsd_features>> parts;
    std::vector<std::string> labels;
    std::vector<char> has_label;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        const bool labelled = eq != std::string::npos && eq > 0;
        parts.push_back(load_features(labelled ? s.substr(eq + 1) : s));
        labels.push_back(labelled ? s.substr(0, eq) : std::string());
        has_label.push_back(labelled);
    }
    std::vector<const fsd_features*> raw;
    std::vector<const char*> overrides;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        raw.push_back(parts[i].get());
        overrides.push_back(has_label[i] ? labels[i].c_str() : nullptr);
    }
    return make<fsd_features>([&](fsd_features** out) {
        return fsd_features_concat(raw.data(), overrides.data(), raw.size(), out);
    });
}

struct FitAttributorArgs {
    std::vector<std::string> sources, val_sources;
    std::string out;
    std::size_t components = 8;
    std::size_t max_iter = 200;
    double quantile = 0.05;
    std::uint64_t seed = 0;
};

int run_fit_attributor(const FitAttributorArgs& a) {
    Handle<fsd_features> train = gather_sources(a.sources);
    Handle<fsd_features> val = a.val_sources.empty() ? nullptr : gather_sources(a.val_sources);
    const fsd_gmm_config cfg = gmm_config(a.components, a.max_iter, a.seed);
    Handle<fsd_attributor> att = make<fsd_attributor>([&](fsd_attributor** out) {
        return fsd_attributor_fit(train.get(), val.get(), &cfg, a.quantile, out);
    });
    json prov = provenance(a.seed, json{{"features_per_source", a.sources}, {"val_features_per_source", a.val_sources},
                                        {"components", a.components}, {"max_iter", a.max_iter},
                                        {"quantile", a.quantile}});
    const std::string first = a.sources.front().substr(a.sources.front().find('=') + 1);
    prov["depends"] = depends_on(first);
    check(fsd_attributor_save(att.get(), a.out.c_str(), prov.dump().c_str()));
    std::printf("sources=%zu reject_threshold=%.9g\n", fsd_attributor_source_count(att.get()),
                fsd_attributor_reject_threshold(att.get()));
    return 0;
}

struct AttributeArgs {
    std::string features, model, out;
};

int run_attribute(const AttributeArgs& a) {
    Handle<fsd_features> f = load_features(a.features);
    Handle<fsd_attributor> att = make<fsd_attributor>([&](fsd_attributor** out) {
        return fsd_attributor_load(a.model.c_str(), out);
    });
    const json prov = model_provenance(a.model);
    const auto names = row_names(a.features, fsd_features_rows(f.get()));
    CsvWriter csv(a.out);
    csv.comment("seed", prov.value("seed", json()));
    csv.comment("config", json{{"features", a.features}, {"model", a.model},
                               {"reject_threshold", fsd_attributor_reject_threshold(att.get())},
                               {"attributor", prov.value("config", json())}});
    csv.row({"path", "source", "max_ll", "best_source"});
    std::size_t unknown = 0;
    for (std::size_t i = 0; i < fsd_features_rows(f.get()); ++i) {
        const auto x = row_of(f.get(), i);
        int source = -1;
        std::size_t best = 0;
        double max_ll = 0.0;
        check(fsd_attributor_attribute(att.get(), x.data(), x.size(), &source, &best, &max_ll, nullptr));
        const std::string best_label = fsd_attributor_source_label(att.get(), best);
        unknown += source < 0;
        csv.row({names[i], source < 0 ? "unknown" : best_label, num(max_ll), best_label});
    }
    std::printf("%zu attributed, %zu unknown\n", fsd_features_rows(f.get()) - unknown, unknown);
    return 0;
}

struct ClusterArgs {
    std::string features, out, model;
    std::size_t k = 0;
    fsd_kmeans_config config{};
};

Handle<fsd_clusters> cluster(const fsd_features* f, std::size_t k, const fsd_kmeans_config& cfg) {
    return make<fsd_clusters>([&](fsd_clusters** out) { return fsd_kmeans(f, k, &cfg, out); });
}

int run_cluster(const ClusterArgs& a) {
    Handle<fsd_features> f = load_features(a.features);
    Handle<fsd_clusters> c = cluster(f.get(), a.k, a.config);
    double sil = std::nan("");
    if (a.k >= 2) check(fsd_clusters_silhouette(c.get(), f.get(), &sil));
    const json config{{"features", a.features}, {"k", a.k}, {"restarts", a.config.restarts},
                      {"max_iterations", a.config.max_iterations}, {"tolerance", a.config.tolerance}};
    if (!a.model.empty()) check(fsd_clusters_save(c.get(), a.model.c_str(), provenance(a.config.seed, config).dump().c_str()));
    const auto names = row_names(a.features, fsd_features_rows(f.get()));
    CsvWriter csv(a.out);
    csv.comment("seed", a.config.seed);
    csv.comment("config", config);
    csv.row({"path", "cluster"});
    const std::size_t* labels = fsd_clusters_labels(c.get());
    for (std::size_t i = 0; i < fsd_clusters_size(c.get()); ++i) csv.row({names[i], std::to_string(labels[i])});
    std::printf("k=%zu inertia=%.9g silhouette=%.6f\n", a.k, fsd_clusters_inertia(c.get()), sil);
    return 0;
}

// ---- eval

struct EvalArgs {
    std::string metric, scores, assignments, truth, features, positive = "real", known, out;
    std::size_t k_multiple = 1;
    std::size_t points = 101;
    fsd_kmeans_config config{};
};

std::map<std::string, std::string> read_truth(const std::string& path) {
    const Table t = read_csv(path);
    const std::size_t pc = t.column("path", path);
    const std::size_t lc = t.column("label", path);
    std::map<std::string, std::string> out;
    for (const auto& row : t.rows) out[row[pc]] = row[lc];
    return out;
}

const std::string& truth_of(const std::map<std::string, std::string>& truth, const std::string& path) {
    const auto it = truth.find(path);
    if (it == truth.end()) usage_error("no truth label for " + path);
    return it->second;
}

void split_scores(const EvalArgs& a, std::vector<double>& pos, std::vector<double>& neg) {
    if (a.scores.empty() || a.truth.empty()) usage_error("--scores and --truth are required");
    const Table t = read_csv(a.scores);
    const auto truth = read_truth(a.truth);
    const std::size_t pc = t.column("path", a.scores);
    const std::size_t sc = t.column("score", a.scores);
    for (const auto& row : t.rows) {
        const double s = parse_doubles(row[sc], a.scores).at(0);
        (truth_of(truth, row[pc]) == a.positive ? pos : neg).push_back(s);
    }
}

int eval_auc(const EvalArgs& a) {
    std::vector<double> pos, neg;
    split_scores(a, pos, neg);
    double value = 0.0;
    check(fsd_auc(pos.data(), pos.size(), neg.data(), neg.size(), &value));
    std::printf("auc=%.6f positives=%zu negatives=%zu\n", value, pos.size(), neg.size());
    if (!a.out.empty()) {
        // ROC points swept over every observed score, high to low.
        std::vector<double> thresholds(pos);
        thresholds.insert(thresholds.end(), neg.begin(), neg.end());
        std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
        thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
        CsvWriter csv(a.out);
        csv.comment("config", json{{"metric", "auc"}, {"scores", a.scores}, {"truth", a.truth}, {"positive", a.positive}});
        csv.row({"threshold", "fpr", "tpr"});
        csv.row({"inf", "0", "0"});
        for (double t : thresholds) {
            const auto at_least = [t](const std::vector<double>& v) {
                return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double s) { return s >= t; }));
            };
            csv.row({num(t), num(at_least(neg) / neg.size()), num(at_least(pos) / pos.size())});
        }
    }
    return 0;
}

struct OpenSetData {
    std::vector<double> known_scores;
    std::vector<int> correct;
    std::vector<double> unknown_scores;
};

OpenSetData read_open_set(const EvalArgs& a) {
    if (a.assignments.empty() || a.truth.empty()) usage_error("--assignments (attribution CSV) and --truth are required");
    const Table t = read_csv(a.assignments);
    const auto truth = read_truth(a.truth);
    const std::size_t pc = t.column("path", a.assignments);
    const std::size_t mc = t.column("max_ll", a.assignments);
    const std::size_t bc = t.column("best_source", a.assignments);
    std::set<std::string> known;
    if (!a.known.empty()) {
        std::stringstream ss(a.known);
        std::string item;
        while (std::getline(ss, item, ',')) known.insert(item);
    } else {
        // Without --known, every label the attributor could emit counts as known.
        for (const auto& row : t.rows) known.insert(row[bc]);
    }
    OpenSetData d;
    for (const auto& row : t.rows) {
        const std::string& label = truth_of(truth, row[pc]);
        const double s = parse_doubles(row[mc], a.assignments).at(0);
        if (known.count(label)) {
            d.known_scores.push_back(s);
            d.correct.push_back(row[bc] == label);
        } else {
            d.unknown_scores.push_back(s);
        }
    }
    return d;
}

int eval_open_set(const EvalArgs& a, bool oscr) {
    const OpenSetData d = read_open_set(a);
    double value = 0.0;
    if (oscr) {
        check(fsd_au_oscr(d.known_scores.data(), d.correct.data(), d.known_scores.size(), d.unknown_scores.data(),
                          d.unknown_scores.size(), &value));
        const double acc = d.correct.empty() ? 0.0
                                             : std::accumulate(d.correct.begin(), d.correct.end(), 0.0) / d.correct.size();
        std::printf("au_oscr=%.6f known_accuracy=%.6f known=%zu unknown=%zu\n", value, acc, d.known_scores.size(),
                    d.unknown_scores.size());
    } else {
        check(fsd_au_crr(d.known_scores.data(), d.known_scores.size(), d.unknown_scores.data(), d.unknown_scores.size(),
                         &value));
        std::printf("au_crr=%.6f definition=auc_known_vs_unknown known=%zu unknown=%zu\n", value, d.known_scores.size(),
                    d.unknown_scores.size());
    }
    if (!a.out.empty()) {
        std::vector<double> thresholds(d.known_scores);
        thresholds.insert(thresholds.end(), d.unknown_scores.begin(), d.unknown_scores.end());
        std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
        thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
        CsvWriter csv(a.out);
        csv.comment("config", json{{"metric", oscr ? "au-oscr" : "au-crr"}, {"assignments", a.assignments},
                                   {"truth", a.truth}, {"known", a.known},
                                   {"definition", oscr ? "ccr_vs_fpr" : "auc_known_vs_unknown"}});
        csv.row(oscr ? std::vector<std::string>{"threshold", "fpr", "ccr"}
                     : std::vector<std::string>{"threshold", "known_accepted", "unknown_rejected"});
        const double nk = static_cast<double>(d.known_scores.size());
        const double nu = static_cast<double>(d.unknown_scores.size());
        for (double t : thresholds) {
            double accepted = 0.0, correct = 0.0, unknown_accepted = 0.0;
            for (std::size_t i = 0; i < d.known_scores.size(); ++i) {
                if (d.known_scores[i] >= t) {
                    accepted += 1.0;
                    correct += d.correct[i];
                }
            }
            for (double s : d.unknown_scores) unknown_accepted += s >= t;
            if (oscr) {
                csv.row({num(t), num(unknown_accepted / nu), num(correct / nk)});
            } else {
                csv.row({num(t), num(accepted / nk), num(1.0 - unknown_accepted / nu)});
            }
        }
    }
    return 0;
}

std::vector<std::size_t> dense(const std::vector<std::string>& labels) {
    std::map<std::string, std::size_t> ids;
    for (const auto& l : labels) ids.emplace(l, ids.size());
    std::vector<std::size_t> out;
    for (const auto& l : labels) out.push_back(ids[l]);
    return out;
}

int eval_clustering(const EvalArgs& a) {
    std::vector<std::size_t> assignment;
    std::vector<std::string> truth_labels;
    if (!a.features.empty()) {
        Handle<fsd_features> f = load_features(a.features);
        const std::size_t n = fsd_features_rows(f.get());
        if (a.truth.empty()) {
            for (std::size_t i = 0; i < n; ++i) {
                const char* l = fsd_features_label(f.get(), i);
                if (l == nullptr) usage_error("features are unlabeled; pass --truth");
                truth_labels.emplace_back(l);
            }
        } else {
            const auto truth = read_truth(a.truth);
            for (const auto& name : row_names(a.features, n)) truth_labels.push_back(truth_of(truth, name));
        }
        const std::size_t classes = std::set<std::string>(truth_labels.begin(), truth_labels.end()).size();
        const std::size_t k = a.k_multiple * classes;
        Handle<fsd_clusters> c = cluster(f.get(), k, a.config);
        assignment.assign(fsd_clusters_labels(c.get()), fsd_clusters_labels(c.get()) + n);
        std::printf("k=%zu (%zux%zu sources)\n", k, a.k_multiple, classes);
    } else {
        if (a.assignments.empty() || a.truth.empty()) usage_error("--assignments and --truth, or --features, are required");
        const Table t = read_csv(a.assignments);
        const auto truth = read_truth(a.truth);
        const std::size_t pc = t.column("path", a.assignments);
        const std::size_t cc = t.column("cluster", a.assignments);
        std::vector<std::string> clusters;
        for (const auto& row : t.rows) {
            clusters.push_back(row[cc]);
            truth_labels.push_back(truth_of(truth, row[pc]));
        }
        assignment = dense(clusters);
    }
    const auto truth_ids = dense(truth_labels);
    double acc = 0.0, purity = 0.0, nmi = 0.0;
    check(fsd_clustering_scores(assignment.data(), truth_ids.data(), assignment.size(), &acc, &purity, &nmi));
    std::printf("accuracy=%.6f purity=%.6f nmi=%.6f\n", acc, purity, nmi);
    if (!a.out.empty()) {
        CsvWriter csv(a.out);
        csv.comment("seed", a.config.seed);
        csv.comment("config", json{{"metric", "clustering"}, {"k_multiple", a.k_multiple}, {"features", a.features},
                                   {"assignments", a.assignments}, {"truth", a.truth}});
        csv.row({"accuracy", "purity", "nmi"});
        csv.row({num(acc), num(purity), num(nmi)});
    }
    return 0;
}

int eval_threshold_sweep(const EvalArgs& a) {
    std::vector<double> pos, neg;
    split_scores(a, pos, neg);
    std::vector<double> thresholds(a.points), balanced(a.points);
    check(fsd_threshold_sweep(pos.data(), pos.size(), neg.data(), neg.size(), a.points, thresholds.data(), balanced.data()));
    const auto best = std::max_element(balanced.begin(), balanced.end()) - balanced.begin();
    std::printf("best_threshold=%.9g balanced_accuracy=%.6f\n", thresholds[best], balanced[best]);
    if (!a.out.empty()) {
        CsvWriter csv(a.out);
        csv.comment("config", json{{"metric", "threshold-sweep"}, {"scores", a.scores}, {"truth", a.truth},
                                   {"positive", a.positive}, {"points", a.points}});
        csv.row({"threshold", "balanced_accuracy"});
        for (std::size_t i = 0; i < a.points; ++i) csv.row({num(thresholds[i]), num(balanced[i])});
    }
    return 0;
}

int run_eval(const EvalArgs& a) {
    if (a.metric == "auc") return eval_auc(a);
    if (a.metric == "au-crr") return eval_open_set(a, false);
    if (a.metric == "au-oscr") return eval_open_set(a, true);
    if (a.metric == "clustering") return eval_clustering(a);
    if (a.metric == "threshold-sweep") return eval_threshold_sweep(a);
    usage_error("unknown metric " + a.metric);
}

struct SynthArgs {
    std::string spec, out_dir;
    bool print_default = false;
};

int run_synth(const SynthArgs& a) {
    if (a.print_default) {
        Handle<char> text = make<char>([](char** out) { return fsd_synth_default_spec(out); });
        std::printf("%s\n", text.get());
        return 0;
    }
    if (a.out_dir.empty()) usage_error("--out-dir is required");
    std::string spec_text;
    if (!a.spec.empty()) {
        std::ifstream in(a.spec);
        if (!in) throw Failure{kExitUsage, "UnreadableFile: cannot open " + a.spec};
        spec_text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    std::size_t written = 0;
    check(fsd_synth_write(a.spec.empty() ? nullptr : spec_text.c_str(), a.out_dir.c_str(), &written));
    std::printf("wrote %zu images to %s\n", written, a.out_dir.c_str());
    return 0;
}

struct RobustnessArgs {
    std::string manifest, bank, detector, out, positive = "real";
    std::string qualities = "100,90,80,70,60,50";
    DescribeOptions opts;
    bool opts_from_flags = false;
};

int run_robustness(RobustnessArgs a) {
    const Manifest m = read_manifest(a.manifest);
    if (m.labels.empty()) usage_error("eval-robustness needs a labelled manifest");
    Handle<fsd_bank> bank = load_bank(a.bank);
    Handle<fsd_detector> det = make<fsd_detector>([&](fsd_detector** out) { return fsd_detector_load(a.detector.c_str(), out); });
    const json prov = model_provenance(a.detector);
    const json depends = prov.value("depends", json::object());
    if (depends.contains("bank_hash") && depends["bank_hash"] != hex(fsd_bank_hash(bank.get()))) {
        throw Failure{kExitDomain, "detector was fitted on features from a different filter bank"};
    }
    // The detector's own describe settings take precedence so features stay comparable.
    if (!a.opts_from_flags && depends.contains("describe")) a.opts.from_echo(depends["describe"]);

    std::vector<int> qualities{0};
    for (double q : parse_doubles(a.qualities, "--qualities")) {
        if (q < 1 || q > 100 || q != std::floor(q)) usage_error("qualities must be integers in 1..100");
        qualities.push_back(static_cast<int>(q));
    }
    std::vector<std::pair<std::string, double>> results;
    for (int q : qualities) {
        BatchOutcome r = describe_manifest(m, bank.get(), a.opts, q);
        if (!r.failures.empty()) throw Failure{kExitDomain, r.failures.front()["message"].get<std::string>()};
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < fsd_features_rows(r.features.get()); ++i) {
            const auto x = row_of(r.features.get(), i);
            double score = 0.0;
            check(fsd_detector_score(det.get(), x.data(), x.size(), &score, nullptr));
            (m.labels[i] == a.positive ? pos : neg).push_back(score);
        }
        double value = 0.0;
        check(fsd_auc(pos.data(), pos.size(), neg.data(), neg.size(), &value));
        const std::string name = q == 0 ? "None" : std::to_string(q);
        results.emplace_back(name, value);
        std::printf("quality=%s auc=%.6f\n", name.c_str(), value);
        std::fflush(stdout);
    }
    if (!a.out.empty()) {
        CsvWriter csv(a.out);
        csv.comment("seed", prov.value("seed", json()));
        csv.comment("config", json{{"manifest", a.manifest}, {"bank", a.bank}, {"detector", a.detector},
                                   {"qualities", a.qualities}, {"positive", a.positive}, {"describe", a.opts.echo()}});
        csv.row({"quality", "auc", "degradation"});
        for (const auto& [name, value] : results) csv.row({name, num(value), num(results.front().second - value)});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Forensic self-descriptions: filter learning, per-image description, detection, attribution, clustering"};
    app.require_subcommand(1);
    bool timing = false;
    app.add_flag("--timing", timing, "print elapsed wall time to stderr");

    TrainArgs train;
    fsd_train_config_default(&train.config);
    auto* c_train = app.add_subcommand("train-filters", "learn a constrained predictive filter bank from real images");
    c_train->add_option("--manifest", train.manifest, "CSV manifest of real images")->required();
    c_train->add_option("--out", train.out, "output filter-bank model")->required();
    c_train->add_option("--k", train.config.filter_count, "number of filters")->check(CLI::PositiveNumber);
    c_train->add_option("--m", train.config.side, "filter neighborhood side (odd)")->check(CLI::PositiveNumber);
    c_train->add_option("--lambda", train.config.lambda, "diversity weight")->check(CLI::NonNegativeNumber);
    c_train->add_option("--alpha", train.config.alpha, "diversity stabilizer")->check(CLI::PositiveNumber);
    c_train->add_option("--lr", train.config.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    c_train->add_option("--epochs", train.config.epochs, "passes over the corpus")->check(CLI::PositiveNumber);
    c_train->add_option("--crop", train.config.crop, "random crop side")->check(CLI::PositiveNumber);
    c_train->add_option("--crops-per-image", train.config.crops_per_image, "crops per image per step")
        ->check(CLI::PositiveNumber);
    c_train->add_option("--max-side", train.max_side, "center-crop cap when loading, 0 disables");
    c_train->add_option("--seed", train.config.seed, "random seed");

    DescribeArgs describe;
    auto* c_describe = app.add_subcommand("describe", "fit a self-description per manifest image");
    c_describe->add_option("--manifest", describe.manifest, "CSV manifest")->required();
    c_describe->add_option("--bank", describe.bank, "filter-bank model")->required();
    c_describe->add_option("--out", describe.out, "output feature matrix")->required();
    c_describe->add_flag("--skip-errors", describe.skip_errors, "exit 0 even when some images fail");
    describe.opts.add(c_describe);

    FitDetectorArgs fit_det;
    auto* c_fit_det = app.add_subcommand("fit-detector", "fit a zero-shot detector on real-image features");
    c_fit_det->add_option("--features", fit_det.features, "real-image training features")->required();
    c_fit_det->add_option("--val-features", fit_det.val_features, "held-out real features for the threshold");
    c_fit_det->add_option("--components", fit_det.components, "mixture components")->check(CLI::PositiveNumber);
    c_fit_det->add_option("--max-iter", fit_det.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
    c_fit_det->add_option("--quantile", fit_det.quantile, "validation quantile for the threshold")->check(CLI::Range(0.0, 1.0));
    c_fit_det->add_option("--seed", fit_det.seed, "random seed");
    c_fit_det->add_option("--out", fit_det.out, "output detector model")->required();

    DetectArgs det;
    auto* c_detect = app.add_subcommand("detect", "score features with a detector");
    c_detect->add_option("--features", det.features, "feature matrix")->required();
    c_detect->add_option("--model", det.model, "detector model")->required();
    c_detect->add_option("--out-scores", det.out, "output CSV path,score,label")->required();

    FitAttributorArgs fit_att;
    auto* c_fit_att = app.add_subcommand("fit-attributor", "fit one mixture per known source");
    c_fit_att->add_option("--features-per-source", fit_att.sources, "label=features.fsdf, or a labelled feature file")
        ->required();
    c_fit_att->add_option("--val-features-per-source", fit_att.val_sources, "held-out features for the threshold");
    c_fit_att->add_option("--components", fit_att.components, "mixture components per source")->check(CLI::PositiveNumber);
    c_fit_att->add_option("--max-iter", fit_att.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
    c_fit_att->add_option("--quantile", fit_att.quantile, "validation quantile for rejection")->check(CLI::Range(0.0, 1.0));
    c_fit_att->add_option("--seed", fit_att.seed, "random seed");
    c_fit_att->add_option("--out", fit_att.out, "output attributor model")->required();

    AttributeArgs att;
    auto* c_attr = app.add_subcommand("attribute", "attribute features to known sources or reject as unknown");
    c_attr->add_option("--features", att.features, "feature matrix")->required();
    c_attr->add_option("--model", att.model, "attributor model")->required();
    c_attr->add_option("--out", att.out, "output CSV path,source,max_ll,best_source")->required();

    ClusterArgs clu;
    fsd_kmeans_config_default(&clu.config);
    auto* c_cluster = app.add_subcommand("cluster", "k-means over standardized features");
    c_cluster->add_option("--features", clu.features, "feature matrix")->required();
    c_cluster->add_option("--k", clu.k, "number of clusters")->required()->check(CLI::PositiveNumber);
    c_cluster->add_option("--restarts", clu.config.restarts, "k-means++ restarts")->check(CLI::PositiveNumber);
    c_cluster->add_option("--seed", clu.config.seed, "random seed");
    c_cluster->add_option("--out", clu.out, "output CSV path,cluster")->required();
    c_cluster->add_option("--model", clu.model, "optional k-means model output");

    EvalArgs ev;
    fsd_kmeans_config_default(&ev.config);
    auto* c_eval = app.add_subcommand("eval", "compute evaluation metrics");
    c_eval->add_option("--metric", ev.metric, "metric")
        ->required()
        ->check(CLI::IsMember({"auc", "au-crr", "au-oscr", "clustering", "threshold-sweep"}));
    c_eval->add_option("--scores", ev.scores, "detector CSV with path,score");
    c_eval->add_option("--assignments", ev.assignments, "attribution CSV or cluster CSV");
    c_eval->add_option("--truth", ev.truth, "CSV with path,label (a manifest works)");
    c_eval->add_option("--features", ev.features, "cluster these features at k = multiple x sources");
    c_eval->add_option("--k-multiple", ev.k_multiple, "cluster count as a multiple of the source count")
        ->check(CLI::IsMember({1, 2, 4}));
    c_eval->add_option("--positive", ev.positive, "truth label of real images");
    c_eval->add_option("--known", ev.known, "comma-separated known source labels");
    c_eval->add_option("--points", ev.points, "threshold-sweep grid size")->check(CLI::Range(2, 1000000));
    c_eval->add_option("--restarts", ev.config.restarts, "k-means++ restarts")->check(CLI::PositiveNumber);
    c_eval->add_option("--seed", ev.config.seed, "random seed");
    c_eval->add_option("--out", ev.out, "curve or summary CSV");

    SynthArgs syn;
    auto* c_synth = app.add_subcommand("synth-sources", "write planted-kernel synthetic corpora");
    c_synth->add_option("--spec", syn.spec, "JSON source spec (built-in spec when omitted)");
    c_synth->add_option("--out-dir", syn.out_dir, "output directory");
    c_synth->add_flag("--print-default-spec", syn.print_default, "print the built-in spec and exit");

    RobustnessArgs rob;
    auto* c_rob = app.add_subcommand("eval-robustness", "detector AUC under JPEG recompression");
    c_rob->add_option("--manifest", rob.manifest, "labelled manifest of real and synthetic images")->required();
    c_rob->add_option("--bank", rob.bank, "filter-bank model")->required();
    c_rob->add_option("--detector", rob.detector, "detector model")->required();
    c_rob->add_option("--qualities", rob.qualities, "comma-separated JPEG qualities");
    c_rob->add_option("--positive", rob.positive, "label of real images");
    c_rob->add_option("--out", rob.out, "output CSV quality,auc,degradation");
    c_rob->add_flag("--describe-from-flags", rob.opts_from_flags, "ignore the detector's recorded describe settings");
    rob.opts.add(c_rob);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    try {
        if (c_train->parsed()) code = run_train(train);
        else if (c_describe->parsed()) code = run_describe(describe);
        else if (c_fit_det->parsed()) code = run_fit_detector(fit_det);
        else if (c_detect->parsed()) code = run_detect(det);
        else if (c_fit_att->parsed()) code = run_fit_attributor(fit_att);
        else if (c_attr->parsed()) code = run_attribute(att);
        else if (c_cluster->parsed()) code = run_cluster(clu);
        else if (c_eval->parsed()) code = run_eval(ev);
        else if (c_synth->parsed()) code = run_synth(syn);
        else if (c_rob->parsed()) code = run_robustness(rob);
    } catch (const Failure& f) {
        std::fprintf(stderr, "error: %s\n", f.message.c_str());
        code = f.exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        code = kExitDomain;
    }
    if (timing) {
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::fprintf(stderr, "elapsed %.3f s\n", seconds);
    }
    return code;
}
