#pragma once

// Segment-level Poisson label flips, the Monte Carlo noise-sensitivity sweep
// for the forest baseline, and the random-classifier floor.

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bibo/error.hpp"
#include "bibo/forest.hpp"
#include "bibo/metrics.hpp"
#include "bibo/pipeline.hpp"
#include "bibo/rng.hpp"

namespace bibo::noise {

using pipeline::Label;
using pipeline::WindowPair;

struct FlipResult {
    std::vector<Label> labels;  // one per input window
    std::size_t segments_total = 0;
    std::size_t segments_flipped = 0;
    std::size_t windows_flipped = 0;

    double segment_fraction() const {
        return segments_total ? static_cast<double>(segments_flipped) / static_cast<double>(segments_total) : 0.0;
    }
    double window_fraction() const {
        return labels.empty() ? 0.0 : static_cast<double>(windows_flipped) / static_cast<double>(labels.size());
    }
};

/// Per user, draws k ~ Poisson(p * segments of that user) and flips every
/// window of min(k, segments) distinct segments chosen uniformly.
inline FlipResult flip_labels(std::span<const WindowPair> windows, double p, Rng& rng) {
    require(p >= 0.0 && p < 1.0 + 1e-12, "flip_labels: p must lie in [0,1]");
    FlipResult r;
    std::map<std::string, std::map<int, std::vector<std::size_t>>> segments;  // user -> segment -> windows
    r.labels.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        r.labels.push_back(windows[i].label);
        if (windows[i].label != Label::none) segments[windows[i].data.user_id][windows[i].data.segment_id].push_back(i);
    }
    for (const auto& [user, segs] : segments) {
        std::vector<const std::vector<std::size_t>*> list;
        for (const auto& [id, idx] : segs) list.push_back(&idx);
        r.segments_total += list.size();
        const double lambda = p * static_cast<double>(list.size());
        std::size_t k = 0;
        if (lambda > 0.0) k = static_cast<std::size_t>(std::poisson_distribution<long long>(lambda)(rng));
        k = std::min(k, list.size());
        for (std::size_t j = 0; j < k; ++j) {
            std::swap(list[j], list[j + rng() % (list.size() - j)]);
            for (auto i : *list[j]) r.labels[i] = pipeline::flip(r.labels[i]);
            r.windows_flipped += list[j]->size();
        }
        r.segments_flipped += k;
    }
    return r;
}

struct RandomPredictions {
    std::vector<int> pred;
    std::vector<double> score;
};

/// Uniform Bernoulli(0.5) classifier: score ~ U(0,1), BI when score >= 0.5.
inline RandomPredictions random_classifier(std::size_t n, Rng& rng) {
    RandomPredictions r;
    r.pred.reserve(n);
    r.score.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = uniform01(rng);
        r.score.push_back(u);
        r.pred.push_back(u >= 0.5 ? 1 : 0);
    }
    return r;
}

inline std::uint64_t trial_seed(std::uint64_t master, double p, int trial) {
    return derive_seed(master, {std::bit_cast<std::uint64_t>(p), static_cast<std::uint64_t>(trial)});
}

struct SweepConfig {
    std::vector<double> p_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    int trials = 100;
    forest::ForestConfig forest{25, 12, 5, 0, true, 32, 4000, 1};
    std::uint64_t seed = 1;

    void validate() const {
        if (p_grid.empty()) fail(ErrorKind::config, "sweep.p_grid must not be empty");
        for (double p : p_grid)
            if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::config, "sweep.p_grid entries must lie in [0,1)");
        if (trials < 1) fail(ErrorKind::config, "sweep.trials must be >= 1");
        forest.validate();
    }
};

struct SweepRow {
    double p = 0.0;
    int trial = 0;
    std::string model;
    metrics::Scores scores;
    double flipped_segments = 0.0;  // realized fraction of labeled segments flipped
    double flipped_windows = 0.0;   // realized fraction of labeled windows flipped
};

/// Label-independent predictions of an unsupervised model over the labeled windows.
struct FixedPredictions {
    std::string model;
    std::vector<int> pred;
    std::vector<double> score;
};

inline std::vector<int> truth_of(std::span<const WindowPair> labeled) {
    std::vector<int> t;
    t.reserve(labeled.size());
    for (const auto& w : labeled) t.push_back(w.label == Label::bi ? 1 : 0);
    return t;
}

/// Leave-one-user-out forest predictions with (possibly noisy) training labels.
struct LooForest {
    std::vector<pipeline::Fold> folds;
    std::vector<std::vector<double>> train_x;  // per fold, row-major
    std::vector<forest::Binning> binning;      // per fold
    std::size_t cols = 0;

    explicit LooForest(std::span<const WindowPair> labeled, int bins) {
        folds = pipeline::leave_one_out(labeled);
        cols = labeled.empty() ? 0 : labeled[0].data.features.size();
        for (const auto& f : folds) {
            std::vector<double> x;
            x.reserve(f.train.size() * cols);
            for (auto i : f.train) {
                const auto& v = labeled[i].data.features;
                require(v.size() == cols, "noise sweep: feature length differs between windows");
                x.insert(x.end(), v.begin(), v.end());
            }
            binning.push_back(forest::make_binning({x, f.train.size(), cols}, bins));
            train_x.push_back(std::move(x));
        }
    }

    /// Vote fractions for every labeled window, each predicted by the fold that holds it out.
    std::vector<double> predict(std::span<const WindowPair> labeled, std::span<const Label> train_labels,
                                forest::ForestConfig cfg, std::uint64_t seed) const {
        std::vector<double> score(labeled.size(), 0.0);
        for (std::size_t k = 0; k < folds.size(); ++k) {
            const auto& f = folds[k];
            std::vector<int> y;
            y.reserve(f.train.size());
            for (auto i : f.train) y.push_back(train_labels[i] == Label::bi ? 1 : 0);
            cfg.seed = derive_seed(seed, {static_cast<std::uint64_t>(k)});
            const auto model = forest::fit_binned({train_x[k], f.train.size(), cols}, binning[k], y, cfg);
            for (auto i : f.test) score[i] = model.predict_proba(labeled[i].data.features);
        }
        return score;
    }
};

/// For each p and trial: flip training labels, refit the leave-one-out
/// forests, score on the clean held-out users. Fixed predictions are scored
/// once per p since they cannot depend on the labels.
inline std::vector<SweepRow> noise_sweep(std::span<const WindowPair> labeled, const SweepConfig& cfg,
                                         std::span<const FixedPredictions> fixed = {}) {
    cfg.validate();
    const LooForest loo(labeled, cfg.forest.bins);
    const auto truth = truth_of(labeled);
    std::vector<SweepRow> rows;
    for (double p : cfg.p_grid) {
        for (const auto& fp : fixed) {
            require(fp.pred.size() == labeled.size() && fp.score.size() == labeled.size(),
                    "noise sweep: fixed predictions for " + fp.model + " do not cover the labeled windows");
            rows.push_back({p, 0, fp.model, metrics::compute_scores(fp.pred, fp.score, truth), 0.0, 0.0});
        }
        for (int t = 0; t < cfg.trials; ++t) {
            const auto seed = trial_seed(cfg.seed, p, t);
            Rng rng(derive_seed(seed, {0xf11bu}));
            const auto flipped = flip_labels(labeled, p, rng);
            const auto score = loo.predict(labeled, flipped.labels, cfg.forest, seed);
            std::vector<int> pred;
            pred.reserve(score.size());
            for (double s : score) pred.push_back(s > 0.5 ? 1 : 0);
            rows.push_back({p, t, "forest", metrics::compute_scores(pred, score, truth), flipped.segment_fraction(),
                            flipped.window_fraction()});
        }
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& o, std::span<const SweepRow> rows) {
    o << "p,trial,model,f1_macro,f1_weighted,auc_roc,accuracy,flipped_segments,flipped_windows\n";
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        o << num(r.p) << ',' << r.trial << ',' << r.model << ',' << num(r.scores.f1_macro) << ','
          << num(r.scores.f1_weighted) << ',' << (r.scores.auc_roc ? num(*r.scores.auc_roc) : std::string("")) << ','
          << num(r.scores.accuracy) << ',' << num(r.flipped_segments) << ',' << num(r.flipped_windows) << '\n';
    }
}

/// Mean and std of a metric for one model at one p.
inline metrics::MeanStd summarize(std::span<const SweepRow> rows, const std::string& model, double p,
                                  double metrics::Scores::*field) {
    std::vector<double> v;
    for (const auto& r : rows)
        if (r.model == model && r.p == p) v.push_back(r.scores.*field);
    return metrics::mean_std(v);
}

} // namespace bibo::noise
