#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace fsd {

// Mann-Whitney AUC: P(pos > neg) + 0.5 P(pos == neg).
double auc(std::span<const double> positives, std::span<const double> negatives);

// Area under the correct-rejection curve: fraction of unknowns rejected against fraction of
// knowns accepted, swept over every observed threshold. Equals auc(known, unknown).
double au_crr(std::span<const double> known, std::span<const double> unknown);

struct OpenSetSample {
    double score = 0.0;  // max log-likelihood over known sources
    bool correct = false;  // argmax source equals the true source
};

// Area under correct-classification rate vs false-positive rate on unknowns.
double au_oscr(std::span<const OpenSetSample> known, std::span<const double> unknown);

struct ClusteringScores {
    double accuracy = 0.0;
    double purity = 0.0;
    double nmi = 0.0;
};

ClusteringScores clustering_scores(std::span<const std::size_t> assignment, std::span<const std::size_t> truth);

// Maximum-weight one-to-one matching of rows to columns; result[row] is the column or npos.
std::vector<std::size_t> max_weight_matching(const std::vector<std::vector<double>>& weights);

struct ThresholdPoint {
    double threshold = 0.0;
    double balanced_accuracy = 0.0;
};

// Real samples are called real when score >= threshold.
std::vector<ThresholdPoint> accuracy_vs_threshold(std::span<const double> real, std::span<const double> synthetic,
                                                  std::span<const double> grid);

// `points` evenly spaced thresholds spanning all observed scores.
std::vector<double> threshold_grid(std::span<const double> real, std::span<const double> synthetic, std::size_t points);

}  // namespace fsd
