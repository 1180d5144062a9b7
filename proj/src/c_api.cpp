#include "fsd/fsd.h"

#include "fsd/error.hpp"
#include "fsd/features.hpp"
#include "fsd/filter_bank.hpp"
#include "fsd/image.hpp"
#include "fsd/metrics.hpp"
#include "fsd/mixture.hpp"
#include "fsd/self_description.hpp"
#include "fsd/store.hpp"
#include "fsd/synth.hpp"
#include "fsd/tasks.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <new>
#include <optional>
#include <string>
#include <thread>
#include <vector>

struct fsd_image {
    fsd::GrayImage image;
};

struct fsd_bank {
    fsd::FilterBank bank;
};

struct fsd_features {
    fsd::FeatureMatrix matrix;
};

struct fsd_detector {
    fsd::DetectorModel model;
};

struct fsd_attributor {
    fsd::AttributorModel model;
};

struct fsd_clusters {
    fsd::KMeansModel model;
    std::vector<std::size_t> labels;
};

namespace {

using fsd::ErrorCode;
using nlohmann::json;

thread_local std::string g_last_error;

fsd_status to_status(ErrorCode code) { return static_cast<fsd_status>(static_cast<int>(code) + 1); }

template <class F>
fsd_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return FSD_OK;
    } catch (const fsd::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
    } catch (const std::exception& e) {
        g_last_error = std::string("internal error: ") + e.what();
    } catch (...) {
        g_last_error = "internal error";
    }
    return FSD_ERR_INTERNAL;
}

template <class T>
const T& deref(const T* p, const char* what) {
    fsd::require(p != nullptr, ErrorCode::InvalidArgument, std::string(what) + " is null");
    return *p;
}

template <class T>
void require_out(T** out) {
    fsd::require(out != nullptr, ErrorCode::InvalidArgument, "output pointer is null");
    *out = nullptr;
}

json parse_object(const char* text) {
    if (text == nullptr) return json::object();
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        fsd::fail(ErrorCode::InvalidArgument, std::string("provenance is not valid JSON: ") + e.what());
    }
    fsd::require(doc.is_object(), ErrorCode::InvalidArgument, "provenance must be a JSON object");
    return doc;
}

char* copy_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::span<const double> values(const double* p, std::size_t n, const char* what) {
    fsd::require(p != nullptr || n == 0, ErrorCode::InvalidArgument, std::string(what) + " is null");
    return {p, n};
}

fsd::DescribeConfig to_describe(const fsd_describe_config* c) {
    fsd::DescribeConfig out;
    if (c == nullptr) return out;
    out.side = c->side;
    out.scale_count = c->scale_count;
    out.fit.learning_rate = c->learning_rate;
    out.fit.patience = c->patience;
    out.fit.plateau_factor = c->plateau_factor;
    out.fit.improvement_floor = c->improvement_floor;
    out.fit.max_iterations = c->max_iterations;
    out.fit.min_learning_rate = c->min_learning_rate;
    return out;
}

fsd::GmmConfig to_gmm(const fsd_gmm_config* c) {
    fsd::GmmConfig out;
    if (c == nullptr) return out;
    out.components = c->components;
    out.max_iterations = c->max_iterations;
    out.tolerance = c->tolerance;
    out.variance_floor = c->variance_floor;
    out.seed = c->seed;
    return out;
}

fsd::FeatureMatrix standardized(const fsd::FeatureMatrix& m, const fsd::FeatureStats& stats) {
    fsd::FeatureMatrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const auto z = stats.standardize(m.row(i));
        std::copy(z.begin(), z.end(), out.row(i).begin());
    }
    return out;
}

struct ItemResult {
    std::vector<double> features;
    fsd_status status = FSD_OK;
    std::string message;
};

ItemResult describe_one(const char* path, const fsd::FilterBank& bank, const fsd::DescribeConfig& config,
                        const fsd::PreprocessOptions& prep, int jpeg_quality) {
    ItemResult out;
    out.status = guarded([&] {
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "null path");
        fsd::GrayImage image = fsd::load_grayscale(path, prep);
        if (jpeg_quality != 0) image = fsd::jpeg_recompress(image, jpeg_quality);
        out.features = fsd::describe_image(image, bank, config).to_vector();
    });
    if (out.status != FSD_OK) out.message = std::string(path ? path : "(null)") + ": " + g_last_error;
    return out;
}

}  // namespace

extern "C" {

const char* fsd_last_error(void) { return g_last_error.c_str(); }

const char* fsd_status_name(fsd_status status) {
    if (status == FSD_OK) return "Ok";
    if (status == FSD_ERR_INTERNAL) return "Internal";
    const int code = static_cast<int>(status) - 1;
    if (code < 0 || code > static_cast<int>(ErrorCode::SizeMismatch)) return "Unknown";
    return fsd::error_code_name(static_cast<ErrorCode>(code)).data();
}

void fsd_string_free(char* text) { delete[] text; }

// ---- images

fsd_status fsd_image_load(const char* path, size_t max_side, size_t min_side, fsd_image** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        *out = new fsd_image{fsd::load_grayscale(path, fsd::PreprocessOptions{max_side, min_side})};
    });
}

fsd_status fsd_image_from_pixels(size_t width, size_t height, const double* pixels, fsd_image** out) {
    return guarded([&] {
        require_out(out);
        const auto v = values(pixels, width * height, "pixels");
        *out = new fsd_image{fsd::GrayImage(width, height, std::vector<double>(v.begin(), v.end()))};
    });
}

fsd_status fsd_image_jpeg_recompress(const fsd_image* image, int quality, fsd_image** out) {
    return guarded([&] {
        require_out(out);
        *out = new fsd_image{fsd::jpeg_recompress(deref(image, "image").image, quality)};
    });
}

fsd_status fsd_image_downsample(const fsd_image* image, size_t factor, fsd_image** out) {
    return guarded([&] {
        require_out(out);
        *out = new fsd_image{fsd::downsample_dyadic(deref(image, "image").image, factor)};
    });
}

size_t fsd_image_width(const fsd_image* image) { return image ? image->image.width() : 0; }
size_t fsd_image_height(const fsd_image* image) { return image ? image->image.height() : 0; }
const double* fsd_image_data(const fsd_image* image) { return image ? image->image.values().data() : nullptr; }
void fsd_image_free(fsd_image* image) { delete image; }

// ---- filter banks

void fsd_train_config_default(fsd_train_config* config) {
    if (config == nullptr) return;
    const fsd::TrainConfig d;
    *config = fsd_train_config{d.filter_count, d.side, d.lambda, d.alpha, d.learning_rate,
                               d.epochs, d.crop, d.crops_per_image, d.seed};
}

fsd_status fsd_bank_train(const fsd_image* const* images, size_t count, const fsd_train_config* config,
                          fsd_bank** out, fsd_train_report* report) {
    return guarded([&] {
        require_out(out);
        const fsd_train_config& c = deref(config, "config");
        fsd::require(images != nullptr || count == 0, ErrorCode::InvalidArgument, "images is null");
        std::vector<fsd::GrayImage> corpus;
        corpus.reserve(count);
        for (size_t i = 0; i < count; ++i) corpus.push_back(deref(images[i], "image").image);
        fsd::TrainConfig tc;
        tc.filter_count = c.filter_count;
        tc.side = c.side;
        tc.lambda = c.lambda;
        tc.alpha = c.alpha;
        tc.learning_rate = c.learning_rate;
        tc.epochs = c.epochs;
        tc.crop = c.crop;
        tc.crops_per_image = c.crops_per_image;
        tc.seed = c.seed;
        fsd::TrainResult result = fsd::train_filter_bank(corpus, tc);
        if (report != nullptr) {
            const auto w = result.bank.weights();
            // Final energy over every training image at full size.
            std::vector<fsd::Field> fields;
            fields.reserve(corpus.size());
            for (const auto& img : corpus) fields.push_back(img.field());
            report->steps = result.trace.size();
            report->energy = fsd::energy_loss(w, tc.filter_count, tc.side, fields).value;
            report->diversity = fsd::diversity_loss(w, tc.filter_count, tc.side, tc.alpha).value;
            report->sigma_min = fsd::min_singular_value(w, tc.filter_count, tc.side);
        }
        *out = new fsd_bank{std::move(result.bank)};
    });
}

fsd_status fsd_bank_from_weights(size_t filter_count, size_t side, const double* weights, fsd_bank** out) {
    return guarded([&] {
        require_out(out);
        const auto w = values(weights, filter_count * side * side, "weights");
        *out = new fsd_bank{fsd::FilterBank(filter_count, side, std::vector<double>(w.begin(), w.end()))};
    });
}

fsd_status fsd_bank_fixed_highpass(fsd_highpass kind, fsd_bank** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(kind == FSD_HIGHPASS_3X3 || kind == FSD_HIGHPASS_5X5, ErrorCode::InvalidArgument,
                     "unknown high-pass kind");
        *out = new fsd_bank{fsd::fixed_highpass_bank(kind == FSD_HIGHPASS_3X3 ? fsd::HighpassKind::Square3x3
                                                                             : fsd::HighpassKind::Square5x5)};
    });
}

size_t fsd_bank_count(const fsd_bank* bank) { return bank ? bank->bank.count() : 0; }
size_t fsd_bank_side(const fsd_bank* bank) { return bank ? bank->bank.side() : 0; }
const double* fsd_bank_weights(const fsd_bank* bank) { return bank ? bank->bank.weights().data() : nullptr; }
uint64_t fsd_bank_hash(const fsd_bank* bank) { return bank ? bank->bank.hash() : 0; }

fsd_status fsd_bank_save(const fsd_bank* bank, const char* path, const char* provenance_json) {
    return guarded([&] {
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        fsd::ModelFile file{fsd::kModelFormatVersion, fsd::ModelKind::FilterBank, fsd::to_json(deref(bank, "bank").bank),
                            parse_object(provenance_json)};
        fsd::save_model(file, path);
    });
}

fsd_status fsd_bank_load(const char* path, fsd_bank** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        *out = new fsd_bank{fsd::bank_from_json(fsd::load_model(path, fsd::ModelKind::FilterBank).payload)};
    });
}

void fsd_bank_free(fsd_bank* bank) { delete bank; }

fsd_status fsd_model_provenance(const char* path, char** json_out) {
    return guarded([&] {
        require_out(json_out);
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        *json_out = copy_string(fsd::load_model(path).provenance.dump());
    });
}

fsd_status fsd_make_provenance(uint64_t seed, const char* config_json, char** json_out) {
    return guarded([&] {
        require_out(json_out);
        *json_out = copy_string(fsd::make_provenance(seed, parse_object(config_json)).dump());
    });
}

// ---- self-descriptions

void fsd_describe_config_default(fsd_describe_config* config) {
    if (config == nullptr) return;
    const fsd::DescribeConfig d;
    *config = fsd_describe_config{d.side, d.scale_count, d.fit.learning_rate, d.fit.patience, d.fit.plateau_factor,
                                  d.fit.improvement_floor, d.fit.max_iterations, d.fit.min_learning_rate};
}

size_t fsd_description_dimension(size_t filter_count, size_t side) { return fsd::description_dimension(filter_count, side); }

fsd_status fsd_describe(const fsd_image* image, const fsd_bank* bank, const fsd_describe_config* config, double* out,
                        size_t capacity, double* objective) {
    return guarded([&] {
        const fsd::FilterBank& b = deref(bank, "bank").bank;
        const fsd::DescribeConfig cfg = to_describe(config);
        const std::size_t dim = fsd::description_dimension(b.count(), cfg.side);
        fsd::require(out != nullptr && capacity >= dim, ErrorCode::SizeMismatch,
                     "output buffer needs " + std::to_string(dim) + " values");
        const fsd::SelfDescription phi = fsd::describe_image(deref(image, "image").image, b, cfg);
        const auto v = phi.to_vector();
        std::copy(v.begin(), v.end(), out);
        if (objective != nullptr) *objective = phi.objective;
    });
}

void fsd_batch_options_default(fsd_batch_options* options) {
    if (options == nullptr) return;
    *options = fsd_batch_options{fsd::PreprocessOptions{}.max_side, 0, 1, 0};
}

fsd_status fsd_describe_files(const char* const* paths, const char* const* labels, size_t count, const fsd_bank* bank,
                              const fsd_describe_config* config, const fsd_batch_options* options,
                              fsd_failure_fn on_failure, void* user, fsd_features** out) {
    std::vector<ItemResult> results;
    fsd_status status = guarded([&] {
        require_out(out);
        fsd::require(paths != nullptr || count == 0, ErrorCode::InvalidArgument, "paths is null");
        const fsd::FilterBank& b = deref(bank, "bank").bank;
        const fsd::DescribeConfig cfg = to_describe(config);
        cfg.fit.validate();
        fsd_batch_options opts;
        fsd_batch_options_default(&opts);
        if (options != nullptr) opts = *options;
        const fsd::PreprocessOptions prep{opts.max_side, opts.min_side ? opts.min_side : 2 * b.side() + 1};

        results.resize(count);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < count; i = next++) {
                results[i] = describe_one(paths[i], b, cfg, prep, opts.jpeg_quality);
            }
        };
        const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(opts.workers, 1), std::max<std::size_t>(count, 1));
        if (workers <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }

        fsd::FeatureMatrix matrix;
        matrix.cols = fsd::description_dimension(b.count(), cfg.side);
        for (std::size_t i = 0; i < count; ++i) {
            if (results[i].status != FSD_OK) continue;
            const char* label = labels != nullptr ? labels[i] : nullptr;
            matrix.append(results[i].features, label ? label : "");
        }
        *out = new fsd_features{std::move(matrix)};
    });
    if (status == FSD_OK && on_failure != nullptr) {
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].status != FSD_OK) on_failure(user, i, results[i].status, results[i].message.c_str());
        }
    }
    return status;
}

// ---- feature matrices

fsd_status fsd_features_create(size_t rows, size_t cols, const double* data, const char* const* labels, fsd_features** out) {
    return guarded([&] {
        require_out(out);
        const auto v = values(data, rows * cols, "values");
        fsd::FeatureMatrix m(rows, cols);
        std::copy(v.begin(), v.end(), m.values.begin());
        if (labels != nullptr) {
            for (size_t i = 0; i < rows; ++i) {
                fsd::require(labels[i] != nullptr && labels[i][0] != '\0', ErrorCode::InvalidArgument,
                             "labels must be non-empty");
                m.labels.emplace_back(labels[i]);
            }
        }
        *out = new fsd_features{std::move(m)};
    });
}

fsd_status fsd_features_concat(const fsd_features* const* parts, const char* const* label_overrides, size_t count,
                               fsd_features** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(parts != nullptr && count > 0, ErrorCode::EmptyBatch, "nothing to concatenate");
        fsd::FeatureMatrix m;
        m.cols = deref(parts[0], "part").matrix.cols;
        for (size_t p = 0; p < count; ++p) {
            const fsd::FeatureMatrix& part = deref(parts[p], "part").matrix;
            fsd::require(part.cols == m.cols, ErrorCode::DimensionMismatch, "parts disagree on dimension");
            const char* override_label = label_overrides ? label_overrides[p] : nullptr;
            for (size_t i = 0; i < part.rows; ++i) {
                std::string label = override_label ? override_label : (part.labels.empty() ? "" : part.labels[i]);
                m.append(part.row(i), std::move(label));
            }
        }
        *out = new fsd_features{std::move(m)};
    });
}

size_t fsd_features_rows(const fsd_features* features) { return features ? features->matrix.rows : 0; }
size_t fsd_features_cols(const fsd_features* features) { return features ? features->matrix.cols : 0; }
const double* fsd_features_data(const fsd_features* features) {
    return features ? features->matrix.values.data() : nullptr;
}

const char* fsd_features_label(const fsd_features* features, size_t row) {
    if (features == nullptr || row >= features->matrix.labels.size()) return nullptr;
    return features->matrix.labels[row].c_str();
}

fsd_status fsd_features_save(const fsd_features* features, const char* path) {
    return guarded([&] {
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        fsd::save_features(deref(features, "features").matrix, path);
    });
}

fsd_status fsd_features_load(const char* path, fsd_features** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        *out = new fsd_features{fsd::load_features(path)};
    });
}

void fsd_features_free(fsd_features* features) { delete features; }

// ---- mixtures and task heads

void fsd_gmm_config_default(fsd_gmm_config* config) {
    if (config == nullptr) return;
    const fsd::GmmConfig d;
    *config = fsd_gmm_config{d.components, d.max_iterations, d.tolerance, d.variance_floor, d.seed};
}

fsd_status fsd_detector_fit(const fsd_features* training, const fsd_features* validation, const fsd_gmm_config* config,
                            double quantile, fsd_detector** out) {
    return guarded([&] {
        require_out(out);
        const fsd::FeatureMatrix& train = deref(training, "training").matrix;
        fsd::GaussianMixture gmm = fsd::fit_gmm(train, to_gmm(config)).model;
        const fsd::FeatureMatrix& val = validation ? validation->matrix : train;
        fsd::require(val.cols == train.cols, ErrorCode::DimensionMismatch, "validation dimension differs from training");
        *out = new fsd_detector{fsd::calibrate_detector(std::move(gmm), val, quantile)};
    });
}

double fsd_detector_threshold(const fsd_detector* detector) { return detector ? detector->model.threshold : 0.0; }
size_t fsd_detector_dimension(const fsd_detector* detector) {
    return detector ? detector->model.real_model.dimension() : 0;
}

fsd_status fsd_detector_score(const fsd_detector* detector, const double* x, size_t dimension, double* score,
                              int* is_real) {
    return guarded([&] {
        const fsd::DetectorModel& m = deref(detector, "detector").model;
        fsd::require(dimension == m.real_model.dimension(), ErrorCode::DimensionMismatch,
                     "feature dimension " + std::to_string(dimension) + " does not match model dimension " +
                         std::to_string(m.real_model.dimension()));
        const fsd::Detection d = fsd::detect(m, values(x, dimension, "x"));
        if (score) *score = d.score;
        if (is_real) *is_real = d.real ? 1 : 0;
    });
}

fsd_status fsd_detector_save(const fsd_detector* detector, const char* path, const char* provenance_json) {
    return guarded([&] {
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        fsd::ModelFile file{fsd::kModelFormatVersion, fsd::ModelKind::Detector,
                            fsd::to_json(deref(detector, "detector").model), parse_object(provenance_json)};
        fsd::save_model(file, path);
    });
}

fsd_status fsd_detector_load(const char* path, fsd_detector** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        *out = new fsd_detector{fsd::detector_from_json(fsd::load_model(path, fsd::ModelKind::Detector).payload)};
    });
}

void fsd_detector_free(fsd_detector* detector) { delete detector; }

fsd_status fsd_attributor_fit(const fsd_features* training, const fsd_features* validation,
                              const fsd_gmm_config* config, double quantile, fsd_attributor** out) {
    return guarded([&] {
        require_out(out);
        const fsd::FeatureMatrix empty;
        *out = new fsd_attributor{fsd::fit_attributor(deref(training, "training").matrix,
                                                      validation ? validation->matrix : empty, to_gmm(config), quantile)};
    });
}

size_t fsd_attributor_source_count(const fsd_attributor* a) { return a ? a->model.sources.size() : 0; }

const char* fsd_attributor_source_label(const fsd_attributor* a, size_t index) {
    if (a == nullptr || index >= a->model.sources.size()) return nullptr;
    return a->model.sources[index].first.c_str();
}

size_t fsd_attributor_dimension(const fsd_attributor* a) { return a ? a->model.dimension() : 0; }
double fsd_attributor_reject_threshold(const fsd_attributor* a) { return a ? a->model.reject_threshold : 0.0; }

fsd_status fsd_attributor_set_reject_threshold(fsd_attributor* a, double threshold) {
    return guarded([&] {
        fsd::require(a != nullptr, ErrorCode::InvalidArgument, "attributor is null");
        fsd::require(!std::isnan(threshold), ErrorCode::InvalidArgument, "threshold is NaN");
        a->model.reject_threshold = threshold;
    });
}

fsd_status fsd_attributor_attribute(const fsd_attributor* a, const double* x, size_t dimension, int* source,
                                    size_t* best, double* max_log_likelihood, double* scores) {
    return guarded([&] {
        const fsd::Attribution r = fsd::attribute(deref(a, "attributor").model, values(x, dimension, "x"));
        if (source) *source = r.source ? static_cast<int>(*r.source) : -1;
        if (best) *best = r.best;
        if (max_log_likelihood) *max_log_likelihood = r.scores[r.best];
        if (scores) std::copy(r.scores.begin(), r.scores.end(), scores);
    });
}

fsd_status fsd_attributor_save(const fsd_attributor* a, const char* path, const char* provenance_json) {
    return guarded([&] {
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        fsd::ModelFile file{fsd::kModelFormatVersion, fsd::ModelKind::Attributor,
                            fsd::to_json(deref(a, "attributor").model), parse_object(provenance_json)};
        fsd::save_model(file, path);
    });
}

fsd_status fsd_attributor_load(const char* path, fsd_attributor** out) {
    return guarded([&] {
        require_out(out);
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        *out = new fsd_attributor{fsd::attributor_from_json(fsd::load_model(path, fsd::ModelKind::Attributor).payload)};
    });
}

void fsd_attributor_free(fsd_attributor* a) { delete a; }

// ---- clustering

void fsd_kmeans_config_default(fsd_kmeans_config* config) {
    if (config == nullptr) return;
    const fsd::KMeansConfig d;
    *config = fsd_kmeans_config{d.restarts, d.max_iterations, d.tolerance, d.seed};
}

fsd_status fsd_kmeans(const fsd_features* features, size_t k, const fsd_kmeans_config* config, fsd_clusters** out) {
    return guarded([&] {
        require_out(out);
        const fsd::FeatureMatrix& m = deref(features, "features").matrix;
        fsd::require(m.rows > 0, ErrorCode::TooFewSamples, "no rows to cluster");
        fsd::KMeansConfig kc;
        if (config != nullptr) kc = fsd::KMeansConfig{config->restarts, config->max_iterations, config->tolerance, config->seed};
        const fsd::FeatureStats stats = fsd::FeatureStats::fit(m);
        fsd::ClusterAssignment a = fsd::kmeans(standardized(m, stats), k, kc);
        *out = new fsd_clusters{fsd::KMeansModel{stats, a.k, std::move(a.centroids), a.inertia}, std::move(a.labels)};
    });
}

size_t fsd_clusters_k(const fsd_clusters* c) { return c ? c->model.k : 0; }
size_t fsd_clusters_size(const fsd_clusters* c) { return c ? c->labels.size() : 0; }
const size_t* fsd_clusters_labels(const fsd_clusters* c) { return c ? c->labels.data() : nullptr; }
double fsd_clusters_inertia(const fsd_clusters* c) { return c ? c->model.inertia : 0.0; }

fsd_status fsd_clusters_silhouette(const fsd_clusters* c, const fsd_features* features, double* out) {
    return guarded([&] {
        const fsd_clusters& cl = deref(c, "clusters");
        const fsd::FeatureMatrix& m = deref(features, "features").matrix;
        fsd::require(m.cols == cl.model.stats.dimension(), ErrorCode::DimensionMismatch, "feature dimension differs");
        fsd::require(out != nullptr, ErrorCode::InvalidArgument, "output pointer is null");
        *out = fsd::silhouette(standardized(m, cl.model.stats), cl.labels);
    });
}

fsd_status fsd_clusters_save(const fsd_clusters* c, const char* path, const char* provenance_json) {
    return guarded([&] {
        fsd::require(path != nullptr, ErrorCode::InvalidArgument, "path is null");
        fsd::ModelFile file{fsd::kModelFormatVersion, fsd::ModelKind::KMeans, fsd::to_json(deref(c, "clusters").model),
                            parse_object(provenance_json)};
        fsd::save_model(file, path);
    });
}

void fsd_clusters_free(fsd_clusters* c) { delete c; }

// ---- metrics

fsd_status fsd_auc(const double* positives, size_t n_positive, const double* negatives, size_t n_negative, double* out) {
    return guarded([&] {
        fsd::require(out != nullptr, ErrorCode::InvalidArgument, "output pointer is null");
        *out = fsd::auc(values(positives, n_positive, "positives"), values(negatives, n_negative, "negatives"));
    });
}

fsd_status fsd_au_crr(const double* known, size_t n_known, const double* unknown, size_t n_unknown, double* out) {
    return guarded([&] {
        fsd::require(out != nullptr, ErrorCode::InvalidArgument, "output pointer is null");
        *out = fsd::au_crr(values(known, n_known, "known"), values(unknown, n_unknown, "unknown"));
    });
}

fsd_status fsd_au_oscr(const double* known, const int* correct, size_t n_known, const double* unknown,
                       size_t n_unknown, double* out) {
    return guarded([&] {
        fsd::require(out != nullptr, ErrorCode::InvalidArgument, "output pointer is null");
        const auto k = values(known, n_known, "known");
        fsd::require(correct != nullptr || n_known == 0, ErrorCode::InvalidArgument, "correct is null");
        std::vector<fsd::OpenSetSample> samples(n_known);
        for (size_t i = 0; i < n_known; ++i) samples[i] = {k[i], correct[i] != 0};
        *out = fsd::au_oscr(samples, values(unknown, n_unknown, "unknown"));
    });
}

fsd_status fsd_clustering_scores(const size_t* assignment, const size_t* truth, size_t count, double* accuracy,
                                 double* purity, double* nmi) {
    return guarded([&] {
        fsd::require((assignment != nullptr && truth != nullptr) || count == 0, ErrorCode::InvalidArgument,
                     "inputs are null");
        const fsd::ClusteringScores s = fsd::clustering_scores({assignment, count}, {truth, count});
        if (accuracy) *accuracy = s.accuracy;
        if (purity) *purity = s.purity;
        if (nmi) *nmi = s.nmi;
    });
}

fsd_status fsd_threshold_sweep(const double* real, size_t n_real, const double* synthetic, size_t n_synthetic,
                               size_t points, double* thresholds, double* balanced_accuracy) {
    return guarded([&] {
        fsd::require(thresholds != nullptr && balanced_accuracy != nullptr, ErrorCode::InvalidArgument,
                     "output pointers are null");
        const auto r = values(real, n_real, "real");
        const auto s = values(synthetic, n_synthetic, "synthetic");
        const auto grid = fsd::threshold_grid(r, s, points);
        const auto curve = fsd::accuracy_vs_threshold(r, s, grid);
        for (size_t i = 0; i < curve.size(); ++i) {
            thresholds[i] = curve[i].threshold;
            balanced_accuracy[i] = curve[i].balanced_accuracy;
        }
    });
}

// ---- synthetic sources

fsd_status fsd_synth_write(const char* spec_json, const char* out_dir, size_t* images_written) {
    return guarded([&] {
        fsd::require(out_dir != nullptr, ErrorCode::InvalidArgument, "out_dir is null");
        fsd::SyntheticSourceSpec spec = fsd::default_synthetic_spec();
        if (spec_json != nullptr) {
            json doc;
            try {
                doc = json::parse(spec_json);
            } catch (const json::exception& e) {
                fsd::fail(ErrorCode::InvalidArgument, std::string("spec is not valid JSON: ") + e.what());
            }
            spec = fsd::synthetic_spec_from_json(doc);
        }
        const auto entries = fsd::write_synthetic_corpus(spec, out_dir);
        if (images_written) *images_written = entries.size();
    });
}

fsd_status fsd_synth_default_spec(char** json_out) {
    return guarded([&] {
        require_out(json_out);
        *json_out = copy_string(fsd::to_json(fsd::default_synthetic_spec()).dump(2));
    });
}

}  // extern "C"
