/* Forensic self-description library: stable C interface. */
#ifndef FSD_FSD_H
#define FSD_FSD_H

#include <stddef.h>
#include <stdint.h>

#if defined(FSD_BUILDING_LIBRARY)
#define FSD_API __attribute__((visibility("default")))
#else
#define FSD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fsd_status {
    FSD_OK = 0,
    FSD_ERR_INVALID_ARGUMENT,
    FSD_ERR_UNREADABLE_FILE,
    FSD_ERR_IO,
    FSD_ERR_TOO_SMALL,
    FSD_ERR_DEGENERATE_OUTPUT,
    FSD_ERR_CODEC_FAILURE,
    FSD_ERR_EMPTY_BATCH,
    FSD_ERR_EMPTY_CORPUS,
    FSD_ERR_NON_FINITE_LOSS,
    FSD_ERR_SHAPE_MISMATCH,
    FSD_ERR_NON_FINITE_OBJECTIVE,
    FSD_ERR_TOO_FEW_SAMPLES,
    FSD_ERR_DEGENERATE_COMPONENT,
    FSD_ERR_DIMENSION_MISMATCH,
    FSD_ERR_EMPTY_VALIDATION,
    FSD_ERR_SINGLE_CLUSTER,
    FSD_ERR_EMPTY_CLASS,
    FSD_ERR_LENGTH_MISMATCH,
    FSD_ERR_BAD_MAGIC,
    FSD_ERR_BAD_VERSION,
    FSD_ERR_INVARIANT_VIOLATION,
    FSD_ERR_KIND_MISMATCH,
    FSD_ERR_SIZE_MISMATCH,
    FSD_ERR_INTERNAL = 100
} fsd_status;

typedef struct fsd_image fsd_image;
typedef struct fsd_bank fsd_bank;
typedef struct fsd_features fsd_features;
typedef struct fsd_detector fsd_detector;
typedef struct fsd_attributor fsd_attributor;
typedef struct fsd_clusters fsd_clusters;

/* Message of the last failure on the calling thread; empty after success. */
FSD_API const char* fsd_last_error(void);
FSD_API const char* fsd_status_name(fsd_status status);
FSD_API void fsd_string_free(char* text);

/* ---- images ---- */

FSD_API fsd_status fsd_image_load(const char* path, size_t max_side, size_t min_side, fsd_image** out);
FSD_API fsd_status fsd_image_from_pixels(size_t width, size_t height, const double* values, fsd_image** out);
FSD_API fsd_status fsd_image_jpeg_recompress(const fsd_image* image, int quality, fsd_image** out);
FSD_API fsd_status fsd_image_downsample(const fsd_image* image, size_t factor, fsd_image** out);
FSD_API size_t fsd_image_width(const fsd_image* image);
FSD_API size_t fsd_image_height(const fsd_image* image);
FSD_API const double* fsd_image_data(const fsd_image* image);
FSD_API void fsd_image_free(fsd_image* image);

/* ---- filter banks ---- */

typedef struct fsd_train_config {
    size_t filter_count;
    size_t side;
    double lambda;
    double alpha;
    double learning_rate;
    size_t epochs;
    size_t crop;
    size_t crops_per_image;
    uint64_t seed;
} fsd_train_config;

typedef struct fsd_train_report {
    size_t steps;
    double energy;    /* at the final weights */
    double diversity;
    double sigma_min;
} fsd_train_report;

typedef enum fsd_highpass { FSD_HIGHPASS_3X3 = 0, FSD_HIGHPASS_5X5 = 1 } fsd_highpass;

FSD_API void fsd_train_config_default(fsd_train_config* config);
FSD_API fsd_status fsd_bank_train(const fsd_image* const* images, size_t count, const fsd_train_config* config,
                                  fsd_bank** out, fsd_train_report* report);
FSD_API fsd_status fsd_bank_from_weights(size_t filter_count, size_t side, const double* weights, fsd_bank** out);
FSD_API fsd_status fsd_bank_fixed_highpass(fsd_highpass kind, fsd_bank** out);
FSD_API size_t fsd_bank_count(const fsd_bank* bank);
FSD_API size_t fsd_bank_side(const fsd_bank* bank);
FSD_API const double* fsd_bank_weights(const fsd_bank* bank);
FSD_API uint64_t fsd_bank_hash(const fsd_bank* bank);
/* provenance_json: a JSON object stored verbatim, or NULL. */
FSD_API fsd_status fsd_bank_save(const fsd_bank* bank, const char* path, const char* provenance_json);
FSD_API fsd_status fsd_bank_load(const char* path, fsd_bank** out);
FSD_API void fsd_bank_free(fsd_bank* bank);

/* Provenance object of any model file, as JSON text released with fsd_string_free. */
FSD_API fsd_status fsd_model_provenance(const char* path, char** json_out);
/* Creation timestamp plus seed and config echo; SOURCE_DATE_EPOCH pins the timestamp. */
FSD_API fsd_status fsd_make_provenance(uint64_t seed, const char* config_json, char** json_out);

/* ---- self-descriptions ---- */

typedef struct fsd_describe_config {
    size_t side;
    size_t scale_count;
    double learning_rate;
    size_t patience;
    double plateau_factor;
    double improvement_floor;
    size_t max_iterations;
    double min_learning_rate;
} fsd_describe_config;

FSD_API void fsd_describe_config_default(fsd_describe_config* config);
FSD_API size_t fsd_description_dimension(size_t filter_count, size_t side);
/* Writes fsd_description_dimension(K, B) values into out. */
FSD_API fsd_status fsd_describe(const fsd_image* image, const fsd_bank* bank, const fsd_describe_config* config,
                                double* out, size_t capacity, double* objective);

typedef struct fsd_batch_options {
    size_t max_side;    /* center-crop cap, 0 disables */
    size_t min_side;    /* 0 selects 2M+1 from the bank */
    size_t workers;     /* 0 or 1 runs inline */
    int jpeg_quality;   /* 0 keeps the decoded pixels, otherwise recompress first */
} fsd_batch_options;

/* Called once per failed item, in input order, after all work finished. */
typedef void (*fsd_failure_fn)(void* user, size_t index, fsd_status status, const char* message);

FSD_API void fsd_batch_options_default(fsd_batch_options* options);
/* Describes every path; rows appear in input order and only for successful items. labels may be NULL. */
FSD_API fsd_status fsd_describe_files(const char* const* paths, const char* const* labels, size_t count,
                                      const fsd_bank* bank, const fsd_describe_config* config,
                                      const fsd_batch_options* options, fsd_failure_fn on_failure, void* user,
                                      fsd_features** out);

/* ---- feature matrices ---- */

/* labels may be NULL for an unlabeled matrix. */
FSD_API fsd_status fsd_features_create(size_t rows, size_t cols, const double* values, const char* const* labels,
                                       fsd_features** out);
/* Stacks parts row-wise; a non-NULL override replaces the labels of every row of that part. */
FSD_API fsd_status fsd_features_concat(const fsd_features* const* parts, const char* const* label_overrides,
                                       size_t count, fsd_features** out);
FSD_API size_t fsd_features_rows(const fsd_features* features);
FSD_API size_t fsd_features_cols(const fsd_features* features);
FSD_API const double* fsd_features_data(const fsd_features* features);
/* NULL when the matrix is unlabeled. */
FSD_API const char* fsd_features_label(const fsd_features* features, size_t row);
FSD_API fsd_status fsd_features_save(const fsd_features* features, const char* path);
FSD_API fsd_status fsd_features_load(const char* path, fsd_features** out);
FSD_API void fsd_features_free(fsd_features* features);

/* ---- mixtures and task heads ---- */

typedef struct fsd_gmm_config {
    size_t components;
    size_t max_iterations;
    double tolerance;
    double variance_floor;
    uint64_t seed;
} fsd_gmm_config;

FSD_API void fsd_gmm_config_default(fsd_gmm_config* config);

/* validation may be NULL, in which case training reals calibrate the threshold. */
FSD_API fsd_status fsd_detector_fit(const fsd_features* training, const fsd_features* validation,
                                    const fsd_gmm_config* config, double quantile, fsd_detector** out);
FSD_API double fsd_detector_threshold(const fsd_detector* detector);
FSD_API size_t fsd_detector_dimension(const fsd_detector* detector);
FSD_API fsd_status fsd_detector_score(const fsd_detector* detector, const double* x, size_t dimension, double* score,
                                      int* is_real);
FSD_API fsd_status fsd_detector_save(const fsd_detector* detector, const char* path, const char* provenance_json);
FSD_API fsd_status fsd_detector_load(const char* path, fsd_detector** out);
FSD_API void fsd_detector_free(fsd_detector* detector);

/* training must be labelled; validation may be NULL. */
FSD_API fsd_status fsd_attributor_fit(const fsd_features* training, const fsd_features* validation,
                                      const fsd_gmm_config* config, double quantile, fsd_attributor** out);
FSD_API size_t fsd_attributor_source_count(const fsd_attributor* attributor);
FSD_API const char* fsd_attributor_source_label(const fsd_attributor* attributor, size_t index);
FSD_API size_t fsd_attributor_dimension(const fsd_attributor* attributor);
FSD_API double fsd_attributor_reject_threshold(const fsd_attributor* attributor);
FSD_API fsd_status fsd_attributor_set_reject_threshold(fsd_attributor* attributor, double threshold);
/* source is -1 when rejected; best is the argmax regardless; scores (nullable) receives one value per source. */
FSD_API fsd_status fsd_attributor_attribute(const fsd_attributor* attributor, const double* x, size_t dimension,
                                            int* source, size_t* best, double* max_log_likelihood, double* scores);
FSD_API fsd_status fsd_attributor_save(const fsd_attributor* attributor, const char* path,
                                       const char* provenance_json);
FSD_API fsd_status fsd_attributor_load(const char* path, fsd_attributor** out);
FSD_API void fsd_attributor_free(fsd_attributor* attributor);

/* ---- clustering ---- */

typedef struct fsd_kmeans_config {
    size_t restarts;
    size_t max_iterations;
    double tolerance;
    uint64_t seed;
} fsd_kmeans_config;

FSD_API void fsd_kmeans_config_default(fsd_kmeans_config* config);
/* Clusters standardized rows. */
FSD_API fsd_status fsd_kmeans(const fsd_features* features, size_t k, const fsd_kmeans_config* config,
                              fsd_clusters** out);
FSD_API size_t fsd_clusters_k(const fsd_clusters* clusters);
FSD_API size_t fsd_clusters_size(const fsd_clusters* clusters);
FSD_API const size_t* fsd_clusters_labels(const fsd_clusters* clusters);
FSD_API double fsd_clusters_inertia(const fsd_clusters* clusters);
/* Silhouette of the assignment over the same standardized rows. */
FSD_API fsd_status fsd_clusters_silhouette(const fsd_clusters* clusters, const fsd_features* features, double* out);
FSD_API fsd_status fsd_clusters_save(const fsd_clusters* clusters, const char* path, const char* provenance_json);
FSD_API void fsd_clusters_free(fsd_clusters* clusters);

/* ---- metrics ---- */

FSD_API fsd_status fsd_auc(const double* positives, size_t n_positive, const double* negatives, size_t n_negative,
                           double* out);
FSD_API fsd_status fsd_au_crr(const double* known, size_t n_known, const double* unknown, size_t n_unknown,
                              double* out);
/* correct[i] is nonzero when known sample i was assigned its true source. */
FSD_API fsd_status fsd_au_oscr(const double* known, const int* correct, size_t n_known, const double* unknown,
                               size_t n_unknown, double* out);
FSD_API fsd_status fsd_clustering_scores(const size_t* assignment, const size_t* truth, size_t count,
                                         double* accuracy, double* purity, double* nmi);
/* Evenly spaced thresholds over all scores and the balanced accuracy at each. */
FSD_API fsd_status fsd_threshold_sweep(const double* real, size_t n_real, const double* synthetic,
                                       size_t n_synthetic, size_t points, double* thresholds,
                                       double* balanced_accuracy);

/* ---- synthetic sources ---- */

/* spec_json NULL selects the built-in spec; writes PNGs, manifest.csv and spec.json under out_dir. */
FSD_API fsd_status fsd_synth_write(const char* spec_json, const char* out_dir, size_t* images_written);
FSD_API fsd_status fsd_synth_default_spec(char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* FSD_FSD_H */
