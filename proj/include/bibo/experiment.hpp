#pragma once

// End-to-end building blocks shared by the command-line stages and the
// acceptance suite: dataset construction, the unsupervised hold-out run,
// leave-one-out forest scoring and the random floor.

#include <string>
#include <vector>

#include "bibo/clustering.hpp"
#include "bibo/config.hpp"
#include "bibo/forest.hpp"
#include "bibo/metrics.hpp"
#include "bibo/models.hpp"
#include "bibo/noise.hpp"
#include "bibo/pipeline.hpp"
#include "bibo/simulator.hpp"

namespace bibo::experiment {

using pipeline::Label;
using pipeline::WindowData;
using pipeline::WindowPair;

struct Dataset {
    std::vector<WindowPair> windows;  // standardized, sorted by (user, segment, window index)
    pipeline::Standardizer stats;
    std::size_t d1 = pipeline::gps_channel_count;
    std::size_t d2 = 2;
    std::size_t segments = 0;
    std::size_t boundary_windows = 0;
};

/// Windows, standardization fitted on the unlabeled (training) corpus only.
inline Dataset build_dataset(const sim::ObservationLog& log, const pipeline::PipelineOptions& opt) {
    auto prep = pipeline::prepare(log, opt);
    Dataset ds;
    ds.d1 = prep.d1;
    ds.d2 = prep.d2;
    ds.segments = prep.segments.size();
    ds.boundary_windows = prep.boundary_windows;
    std::vector<WindowData> train;
    for (const auto& w : prep.windows)
        if (w.label == Label::none) train.push_back(w.data);
    if (train.empty()) fail(ErrorKind::config, "scenario has no unlabeled users to train on");
    ds.stats = pipeline::Standardizer::fit(train, ds.d1, ds.d2);
    for (auto& w : prep.windows) ds.stats.apply(w.data);
    ds.windows = std::move(prep.windows);
    return ds;
}

inline Dataset build_dataset(const config::RunConfig& rc) {
    return build_dataset(sim::recorded(sim::simulate(config::scenario(rc))), rc.pipeline);
}

inline std::vector<WindowPair> labeled_windows(const std::vector<WindowPair>& all) {
    std::vector<WindowPair> out;
    for (const auto& w : all)
        if (w.label != Label::none) out.push_back(w);
    return out;
}

struct Predictions {
    std::string model;
    std::vector<int> pred;       // per labeled window, 1 = BI
    std::vector<double> score;   // higher = more BI
    std::vector<int> truth;
    std::vector<std::string> user;
};

inline metrics::MetricsReport evaluate(const Predictions& p) {
    return metrics::compute_metrics(p.model, p.pred, p.score, p.truth, p.user);
}

struct UnsupervisedRun {
    models::TrainedModel trained;
    clustering::ClusterModel clusters;
    std::vector<clustering::Point> test_latents;
    Predictions predictions;
};

inline void fill_truth(Predictions& p, const std::vector<WindowPair>& labeled) {
    p.truth = noise::truth_of(labeled);
    for (const auto& w : labeled) p.user.push_back(w.data.user_id);
}

/// Nearest-core classification of every labeled window.
inline Predictions classify_windows(const models::Model& model, const clustering::ClusterModel& clusters,
                                    const std::vector<WindowPair>& labeled, std::vector<clustering::Point>* latents = nullptr) {
    std::vector<WindowData> test;
    test.reserve(labeled.size());
    for (const auto& w : labeled) test.push_back(w.data);
    auto z = models::encode_all(model, test);
    Predictions p;
    p.model = models::to_string(model.config.kind);
    const bool usable = !clusters.core_points.empty();
    for (const auto& v : z) {
        if (usable) {
            const auto c = clustering::classify(clusters, v);
            p.pred.push_back(c.cls == clustering::Polarity::bi ? 1 : 0);
            p.score.push_back(c.score);
        } else {
            p.pred.push_back(0);
            p.score.push_back(0.0);
        }
    }
    fill_truth(p, labeled);
    if (latents) *latents = std::move(z);
    return p;
}

/// DBSCAN plus polarity on the latents of the training windows.
inline clustering::ClusterModel fit_clusters(const models::Model& model, const std::vector<WindowData>& train,
                                             const clustering::ClusterConfig& cc) {
    const auto z = models::encode_all(model, train);
    std::vector<double> strength;
    strength.reserve(train.size());
    for (const auto& w : train) strength.push_back(w.ble_strength);
    return clustering::fit(z, strength, cc);
}

inline UnsupervisedRun cluster_and_classify(models::TrainedModel trained, const std::vector<WindowData>& train,
                                            const std::vector<WindowPair>& labeled, const clustering::ClusterConfig& cc) {
    UnsupervisedRun r;
    r.trained = std::move(trained);
    r.clusters = fit_clusters(r.trained.model, train, cc);
    r.predictions = classify_windows(r.trained.model, r.clusters, labeled, &r.test_latents);
    return r;
}

/// Hold-out protocol: train on unlabeled users (labels never reach the
/// model), test on every labeled window.
inline UnsupervisedRun run_unsupervised(const std::vector<WindowPair>& all, const models::ArchitectureConfig& ac,
                                        const clustering::ClusterConfig& cc) {
    const auto h = pipeline::hold_out(all);
    auto trained = models::train(models::build(ac), h.train);
    return cluster_and_classify(std::move(trained), h.train, h.test, cc);
}

/// Clean-label leave-one-user-out forest.
inline Predictions run_forest(const std::vector<WindowPair>& labeled, const forest::ForestConfig& fc, std::uint64_t seed) {
    const noise::LooForest loo(labeled, fc.bins);
    std::vector<Label> labels;
    for (const auto& w : labeled) labels.push_back(w.label);
    Predictions p;
    p.model = "forest";
    p.score = loo.predict(labeled, labels, fc, seed);
    for (double s : p.score) p.pred.push_back(s > 0.5 ? 1 : 0);
    fill_truth(p, labeled);
    return p;
}

/// Random floor scored against the labeled windows, cycled until `n` windows are drawn.
inline Predictions run_random(const std::vector<WindowPair>& labeled, std::size_t n, std::uint64_t seed) {
    require(!labeled.empty(), "random classifier: no labeled windows");
    Rng rng(seed);
    Predictions p;
    p.model = "random";
    const auto r = noise::random_classifier(n, rng);
    p.pred = r.pred;
    p.score = r.score;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = labeled[i % labeled.size()];
        p.truth.push_back(w.label == Label::bi ? 1 : 0);
        p.user.push_back(w.data.user_id);
    }
    return p;
}

} // namespace bibo::experiment
