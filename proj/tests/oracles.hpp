#pragma once

#include "fsd/metrics.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

// Brute-force references for the ranking and matching metrics.
namespace fsd::oracle {

inline double pair_count_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double s = 0.0;
    for (double p : pos) {
        for (double n : neg) s += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    }
    return s / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

inline std::vector<double> integer_scores(std::size_t n, std::mt19937_64& rng, int range) {
    std::vector<double> v(n);
    for (double& x : v) x = static_cast<double>(static_cast<int>(rng() % range) - range / 2);
    return v;
}

// Every distinct threshold plus both infinities, points sorted along the curve.
inline double exhaustive_oscr(const std::vector<OpenSetSample>& known, const std::vector<double>& unknown) {
    std::vector<double> thresholds{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (const auto& k : known) thresholds.push_back(k.score);
    thresholds.insert(thresholds.end(), unknown.begin(), unknown.end());
    std::vector<std::pair<double, double>> points;
    for (double t : thresholds) {
        double fp = 0.0, cc = 0.0;
        for (double u : unknown) fp += u >= t;
        for (const auto& k : known) cc += k.correct && k.score >= t;
        points.emplace_back(fp / unknown.size(), cc / known.size());
    }
    std::sort(points.begin(), points.end());
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        area += (points[i].first - points[i - 1].first) * (points[i].second + points[i - 1].second) / 2.0;
    }
    return area;
}

inline double brute_matching(const std::vector<std::vector<double>>& w) {
    const std::size_t rows = w.size(), cols = w.front().size();
    std::vector<std::size_t> perm(std::max(rows, cols));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            if (perm[r] < cols) s += w[r][perm[r]];
        }
        best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Best total overlap over all injective cluster-to-class maps, divided by N.
inline double brute_cluster_accuracy(const std::vector<std::size_t>& cluster, const std::vector<std::size_t>& truth,
                                     std::size_t clusters, std::size_t classes) {
    std::vector<std::vector<double>> table(clusters, std::vector<double>(classes, 0.0));
    for (std::size_t i = 0; i < cluster.size(); ++i) table[cluster[i]][truth[i]] += 1.0;
    return brute_matching(table) / static_cast<double>(cluster.size());
}

}  // namespace fsd::oracle
