#include "fsd/metrics.hpp"

#include "fsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fsd {

namespace {

void require_scores(std::span<const double> a, std::span<const double> b) {
    require(!a.empty() && !b.empty(), ErrorCode::EmptyClass, "both score sets must be non-empty");
    for (double v : a) require(std::isfinite(v), ErrorCode::InvalidArgument, "scores must be finite");
    for (double v : b) require(std::isfinite(v), ErrorCode::InvalidArgument, "scores must be finite");
}

std::vector<double> sorted(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    std::sort(out.begin(), out.end());
    return out;
}

// Number of elements of sorted `v` that are >= t.
double count_at_least(const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t));
}

std::vector<std::size_t> dense_ids(std::span<const std::size_t> labels, std::size_t& count) {
    std::map<std::size_t, std::size_t> ids;
    for (std::size_t l : labels) ids.emplace(l, 0);
    std::size_t next = 0;
    for (auto& [label, id] : ids) id = next++;
    count = next;
    std::vector<std::size_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
    return out;
}

}  // namespace

double auc(std::span<const double> positives, std::span<const double> negatives) {
    require_scores(positives, negatives);
    struct Entry {
        double score;
        bool positive;
    };
    std::vector<Entry> all;
    all.reserve(positives.size() + negatives.size());
    for (double s : positives) all.push_back({s, true});
    for (double s : negatives) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // twice the Mann-Whitney U, kept integral
    double twice_u = 0.0;
    double negatives_below = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        double pos = 0.0;
        double neg = 0.0;
        while (j < all.size() && all[j].score == all[i].score) {
            (all[j].positive ? pos : neg) += 1.0;
            ++j;
        }
        twice_u += 2.0 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    return twice_u / (2.0 * static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

double au_crr(std::span<const double> known, std::span<const double> unknown) {
    require_scores(known, unknown);
    const auto k = sorted(known);
    const auto u = sorted(unknown);
    std::vector<double> thresholds(k);
    thresholds.insert(thresholds.end(), u.begin(), u.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double nk = static_cast<double>(k.size());
    const double nu = static_cast<double>(u.size());
    // Walk thresholds upward from -inf: accepted-known fraction falls, rejected-unknown rises.
    double prev_x = 1.0;
    double prev_y = 0.0;
    double area = 0.0;
    auto add = [&](double x, double y) {
        area += (prev_x - x) * (prev_y + y) * 0.5;
        prev_x = x;
        prev_y = y;
    };
    for (double t : thresholds) add(count_at_least(k, t) / nk, (nu - count_at_least(u, t)) / nu);
    add(0.0, 1.0);
    return area;
}

double au_oscr(std::span<const OpenSetSample> known, std::span<const double> unknown) {
    require(!known.empty() && !unknown.empty(), ErrorCode::EmptyClass, "both score sets must be non-empty");
    std::vector<double> all_known(known.size());
    std::vector<double> correct_known;
    for (std::size_t i = 0; i < known.size(); ++i) {
        all_known[i] = known[i].score;
        if (known[i].correct) correct_known.push_back(known[i].score);
    }
    require_scores(all_known, unknown);
    std::sort(correct_known.begin(), correct_known.end());
    const auto u = sorted(unknown);
    std::vector<double> thresholds(all_known);
    thresholds.insert(thresholds.end(), u.begin(), u.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double nk = static_cast<double>(known.size());
    const double nu = static_cast<double>(u.size());
    double prev_fpr = 0.0;  // threshold +inf
    double prev_ccr = 0.0;
    double area = 0.0;
    auto add = [&](double fpr, double ccr) {
        area += (fpr - prev_fpr) * (prev_ccr + ccr) * 0.5;
        prev_fpr = fpr;
        prev_ccr = ccr;
    };
    for (double t : thresholds) add(count_at_least(u, t) / nu, count_at_least(correct_known, t) / nk);
    add(1.0, static_cast<double>(correct_known.size()) / nk);  // threshold -inf
    return area;
}

std::vector<std::size_t> max_weight_matching(const std::vector<std::vector<double>>& weights) {
    const std::size_t rows = weights.size();
    const std::size_t cols = rows ? weights.front().size() : 0;
    const std::size_t n = std::max(rows, cols);
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    if (n == 0) return {};
    // Shortest augmenting path Hungarian method on the negated, zero-padded square matrix (1-based).
    auto cost = [&](std::size_t i, std::size_t j) {
        return (i < rows && j < cols) ? -weights[i][j] : 0.0;
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> match(rows, npos);
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] != 0 && p[j] - 1 < rows && j - 1 < cols) match[p[j] - 1] = j - 1;
    }
    return match;
}

ClusteringScores clustering_scores(std::span<const std::size_t> assignment, std::span<const std::size_t> truth) {
    require(assignment.size() == truth.size(), ErrorCode::LengthMismatch, "assignment and truth lengths differ");
    require(!assignment.empty(), ErrorCode::LengthMismatch, "clustering scores need at least one item");
    std::size_t n_clusters = 0;
    std::size_t n_classes = 0;
    const auto cluster = dense_ids(assignment, n_clusters);
    const auto cls = dense_ids(truth, n_classes);
    const double n = static_cast<double>(assignment.size());

    std::vector<std::vector<double>> table(n_clusters, std::vector<double>(n_classes, 0.0));
    for (std::size_t i = 0; i < cluster.size(); ++i) table[cluster[i]][cls[i]] += 1.0;
    std::vector<double> cluster_sizes(n_clusters, 0.0);
    std::vector<double> class_sizes(n_classes, 0.0);
    for (std::size_t c = 0; c < n_clusters; ++c) {
        for (std::size_t j = 0; j < n_classes; ++j) {
            cluster_sizes[c] += table[c][j];
            class_sizes[j] += table[c][j];
        }
    }

    ClusteringScores out;
    double majority = 0.0;
    for (const auto& row : table) majority += *std::max_element(row.begin(), row.end());
    out.purity = majority / n;

    double h_cluster = 0.0;
    double h_class = 0.0;
    double mutual = 0.0;
    for (double s : cluster_sizes) h_cluster -= (s / n) * std::log(s / n);
    for (double s : class_sizes) h_class -= (s / n) * std::log(s / n);
    for (std::size_t c = 0; c < n_clusters; ++c) {
        for (std::size_t j = 0; j < n_classes; ++j) {
            const double nij = table[c][j];
            if (nij > 0.0) mutual += (nij / n) * std::log(n * nij / (cluster_sizes[c] * class_sizes[j]));
        }
    }
    // Identical partitions up to relabeling: every cluster is one class and vice versa.
    bool identical = n_clusters == n_classes;
    for (std::size_t c = 0; identical && c < n_clusters; ++c) {
        identical = *std::max_element(table[c].begin(), table[c].end()) == cluster_sizes[c] &&
                    cluster_sizes[c] == class_sizes[std::max_element(table[c].begin(), table[c].end()) - table[c].begin()];
    }
    if (identical) {
        out.nmi = 1.0;
    } else if (h_cluster + h_class == 0.0) {
        out.nmi = 0.0;
    } else {
        out.nmi = std::clamp(2.0 * mutual / (h_cluster + h_class), 0.0, 1.0);
    }

    if (n_clusters <= n_classes) {
        const auto match = max_weight_matching(table);
        double matched = 0.0;
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (match[c] < n_classes) matched += table[c][match[c]];
        }
        out.accuracy = matched / n;
    } else {
        // Over-clustering: each cluster votes its majority class, then per-class recall is averaged.
        std::vector<double> hits(n_classes, 0.0);
        for (std::size_t c = 0; c < n_clusters; ++c) {
            const auto best = static_cast<std::size_t>(std::max_element(table[c].begin(), table[c].end()) - table[c].begin());
            hits[best] += table[c][best];
        }
        double recall = 0.0;
        for (std::size_t j = 0; j < n_classes; ++j) recall += hits[j] / class_sizes[j];
        out.accuracy = recall / static_cast<double>(n_classes);
    }
    return out;
}

std::vector<ThresholdPoint> accuracy_vs_threshold(std::span<const double> real, std::span<const double> synthetic,
                                                  std::span<const double> grid) {
    require_scores(real, synthetic);
    const auto r = sorted(real);
    const auto s = sorted(synthetic);
    std::vector<ThresholdPoint> out;
    out.reserve(grid.size());
    for (double t : grid) {
        const double tpr = count_at_least(r, t) / static_cast<double>(r.size());
        const double tnr = 1.0 - count_at_least(s, t) / static_cast<double>(s.size());
        out.push_back({t, 0.5 * (tpr + tnr)});
    }
    return out;
}

std::vector<double> threshold_grid(std::span<const double> real, std::span<const double> synthetic, std::size_t points) {
    require_scores(real, synthetic);
    require(points >= 2, ErrorCode::InvalidArgument, "threshold grid needs at least two points");
    double lo = std::min(*std::min_element(real.begin(), real.end()), *std::min_element(synthetic.begin(), synthetic.end()));
    double hi = std::max(*std::max_element(real.begin(), real.end()), *std::max_element(synthetic.begin(), synthetic.end()));
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

}  // namespace fsd
