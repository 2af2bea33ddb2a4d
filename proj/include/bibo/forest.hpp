#pragma once

// Random forest of CART trees with Gini impurity. Split search runs on
// per-feature quantile bins fitted to the training rows; the stored split is
// the raw threshold, so prediction works on unbinned features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bibo/error.hpp"
#include "bibo/rng.hpp"

namespace bibo::forest {

struct ForestConfig {
    int tree_count = 100;
    int max_depth = 12;
    int min_leaf_size = 5;
    int features_per_split = 0;  // 0: floor(sqrt(feature count))
    bool bootstrap = true;
    int bins = 32;
    std::size_t max_samples = 0;  // bootstrap draw size, 0: training row count
    std::uint64_t seed = 1;

    void validate() const {
        if (tree_count < 1) fail(ErrorKind::config, "forest.tree_count must be >= 1");
        if (max_depth < 1) fail(ErrorKind::config, "forest.max_depth must be >= 1");
        if (min_leaf_size < 1) fail(ErrorKind::config, "forest.min_leaf_size must be >= 1");
        if (features_per_split < 0) fail(ErrorKind::config, "forest.features_per_split must be >= 0");
        if (bins < 2 || bins > 256) fail(ErrorKind::config, "forest.bins must lie in [2, 256]");
    }
};

/// Row-major feature matrix view.
struct Matrix {
    std::span<const double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

struct Node {
    int feature = -1;  // -1: leaf
    double threshold = 0.0;  // go left when x <= threshold
    int left = -1;
    int right = -1;
    double prob_bi = 0.0;  // fraction of BI training rows reaching a leaf
};

struct Tree {
    std::vector<Node> nodes;

    double leaf_prob(std::span<const double> x) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].prob_bi;
    }
};

struct Forest {
    std::vector<Tree> trees;
    std::size_t feature_count = 0;
    bool degenerate = false;  // single-class training labels: constant model
    int constant_label = 0;

    /// Fraction of trees voting BI.
    double predict_proba(std::span<const double> x) const {
        require(x.size() == feature_count, "forest: feature count mismatch");
        if (degenerate) return static_cast<double>(constant_label);
        double votes = 0.0;
        for (const auto& t : trees) votes += t.leaf_prob(x) > 0.5 ? 1.0 : 0.0;
        return votes / static_cast<double>(trees.size());
    }

    int predict(std::span<const double> x) const { return predict_proba(x) > 0.5 ? 1 : 0; }
};

/// Per-feature split thresholds from training quantiles.
struct Binning {
    std::vector<std::vector<double>> thresholds;  // ascending, unique
    std::vector<std::uint8_t> codes;               // row-major bin per (row, feature)

    std::size_t bin_count(std::size_t f) const { return thresholds[f].size() + 1; }
};

inline Binning make_binning(const Matrix& x, int bins) {
    Binning b;
    b.thresholds.resize(x.cols);
    b.codes.resize(x.rows * x.cols);
    std::vector<double> col(x.rows);
    for (std::size_t f = 0; f < x.cols; ++f) {
        for (std::size_t r = 0; r < x.rows; ++r) col[r] = x(r, f);
        std::sort(col.begin(), col.end());
        auto& t = b.thresholds[f];
        for (int q = 1; q < bins; ++q) {
            const auto at = std::min(x.rows - 1, static_cast<std::size_t>(static_cast<double>(q) / bins * static_cast<double>(x.rows)));
            // threshold halfway to the next distinct value keeps ties on one side
            const double v = col[at];
            auto next = std::upper_bound(col.begin(), col.end(), v);
            if (next == col.end()) continue;
            const double cut = v + 0.5 * (*next - v);
            if (t.empty() || cut > t.back()) t.push_back(cut);
        }
        for (std::size_t r = 0; r < x.rows; ++r)
            b.codes[r * x.cols + f] =
                static_cast<std::uint8_t>(std::lower_bound(t.begin(), t.end(), x(r, f)) - t.begin());
    }
    return b;
}

namespace detail {

inline double gini(double pos, double total) {
    if (total <= 0.0) return 0.0;
    const double p = pos / total;
    return 2.0 * p * (1.0 - p);
}

struct Builder {
    const Binning& bins;
    std::size_t cols;
    std::span<const int> y;
    const ForestConfig& cfg;
    std::size_t mtry;
    Rng& rng;
    Tree tree;

    int grow(std::vector<std::size_t>& rows, int depth) {
        double pos = 0.0;
        for (auto r : rows) pos += y[r];
        const double n = static_cast<double>(rows.size());
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(Node{-1, 0.0, -1, -1, pos / n});
        if (depth >= cfg.max_depth || pos == 0.0 || pos == n || rows.size() < 2 * static_cast<std::size_t>(cfg.min_leaf_size))
            return id;

        // partial Fisher-Yates for the candidate features
        std::vector<std::size_t> feats(cols);
        for (std::size_t f = 0; f < cols; ++f) feats[f] = f;
        for (std::size_t i = 0; i < mtry; ++i) std::swap(feats[i], feats[i + rng() % (cols - i)]);

        const double parent = gini(pos, n);
        double best_gain = 1e-12;
        int best_f = -1, best_bin = -1;
        std::vector<double> cnt, cpos;
        for (std::size_t k = 0; k < mtry; ++k) {
            const std::size_t f = feats[k];
            const std::size_t nb = bins.bin_count(f);
            if (nb < 2) continue;
            cnt.assign(nb, 0.0);
            cpos.assign(nb, 0.0);
            for (auto r : rows) {
                const auto c = bins.codes[r * cols + f];
                cnt[c] += 1.0;
                cpos[c] += y[r];
            }
            double ln = 0.0, lp = 0.0;
            for (std::size_t b = 0; b + 1 < nb; ++b) {
                ln += cnt[b];
                lp += cpos[b];
                const double rn = n - ln;
                if (ln < cfg.min_leaf_size || rn < cfg.min_leaf_size) continue;
                const double gain = parent - (ln * gini(lp, ln) + rn * gini(pos - lp, rn)) / n;
                if (gain > best_gain) best_gain = gain, best_f = static_cast<int>(f), best_bin = static_cast<int>(b);
            }
        }
        if (best_f < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows)
            (bins.codes[r * cols + static_cast<std::size_t>(best_f)] <= best_bin ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const double thr = bins.thresholds[static_cast<std::size_t>(best_f)][static_cast<std::size_t>(best_bin)];
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = best_f;
        node.threshold = thr;
        node.left = l;
        node.right = r;
        return id;
    }
};

} // namespace detail

/// Fits the forest given a precomputed binning of the same rows.
inline Forest fit_binned(const Matrix& x, const Binning& bins, std::span<const int> y, const ForestConfig& cfg) {
    cfg.validate();
    require(x.rows == y.size(), "fit_forest: one label per row expected");
    require(x.rows > 0 && x.cols > 0, "fit_forest: empty training data");
    Forest forest;
    forest.feature_count = x.cols;
    std::size_t pos = 0;
    for (int v : y) {
        require(v == 0 || v == 1, "fit_forest: labels must be 0 or 1");
        pos += static_cast<std::size_t>(v);
    }
    if (pos == 0 || pos == x.rows) {
        forest.degenerate = true;
        forest.constant_label = pos == 0 ? 0 : 1;
        return forest;
    }
    std::size_t mtry = cfg.features_per_split > 0 ? static_cast<std::size_t>(cfg.features_per_split)
                                                  : static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols)));
    mtry = std::clamp<std::size_t>(mtry, 1, x.cols);
    const std::size_t draw = cfg.max_samples > 0 ? std::min(cfg.max_samples, x.rows) : x.rows;
    // bootstrap draws index a canonical row order, so shuffling the input rows changes nothing
    std::vector<std::size_t> canon(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) canon[i] = i;
    std::sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
        const auto ra = x.row(a), rb = x.row(b);
        const int c = std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end()) ? -1
                      : std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end()) ? 1
                                                                                                  : 0;
        return c != 0 ? c < 0 : y[a] < y[b];
    });
    for (int t = 0; t < cfg.tree_count; ++t) {
        Rng rng(derive_seed(cfg.seed, {0xf0e57u, static_cast<std::uint64_t>(t)}));
        std::vector<std::size_t> rows;
        if (cfg.bootstrap) {
            rows.resize(draw);
            for (auto& r : rows) r = canon[rng() % x.rows];
            std::sort(rows.begin(), rows.end());
        } else {
            rows.resize(x.rows);
            for (std::size_t i = 0; i < x.rows; ++i) rows[i] = i;
        }
        detail::Builder b{bins, x.cols, y, cfg, mtry, rng, {}};
        b.grow(rows, 0);
        forest.trees.push_back(std::move(b.tree));
    }
    return forest;
}

inline Forest fit_forest(const Matrix& x, std::span<const int> y, const ForestConfig& cfg) {
    cfg.validate();
    return fit_binned(x, make_binning(x, cfg.bins), y, cfg);
}

} // namespace bibo::forest
