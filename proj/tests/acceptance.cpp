// Acceptance suite: one PASS/FAIL line per criterion, details underneath.
// Exits non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bibo/clustering.hpp"
#include "bibo/config.hpp"
#include "bibo/experiment.hpp"
#include "cli_runner.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "pipeline_cases.hpp"

using namespace bibo;
using models::ArchitectureKind;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        detail << "    " << (ok ? "ok   " : "FAIL ") << what << "\n";
    }
};

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

const std::vector<ArchitectureKind> architectures{ArchitectureKind::cemwa, ArchitectureKind::mwa, ArchitectureKind::wa};

/// The default run configuration is the acceptance scenario.
config::RunConfig acceptance_config(std::uint64_t seed = 7) {
    auto rc = config::from_json(nlohmann::json::object());
    rc.seed = seed;
    return rc;
}

void scenario_preconditions(Verdict& v, const experiment::Dataset& ds, const config::RunConfig& rc) {
    const auto labeled = experiment::labeled_windows(ds.windows);
    double bi = 0.0;
    for (const auto& w : labeled) bi += w.label == pipeline::Label::bi ? 1.0 : 0.0;
    const double ratio = bi / (static_cast<double>(labeled.size()) - bi);
    const auto users = rc.generator.labeled_users + rc.generator.unlabeled_users;
    v.check(users >= 20, "scenario has " + std::to_string(users) + " users (>= 20)");
    v.check(labeled.size() >= 5000, "scenario has " + std::to_string(labeled.size()) + " labeled windows (>= 5000)");
    v.check(std::abs(ratio - 0.29) <= 0.2 * 0.29, "BI:BO window ratio " + fmt(ratio, 3) + " within 0.29 +- 20%");
}

// 1 ---------------------------------------------------------------------------

void gradient_integrity(Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& [op, trial] : gradients::all_ops()) {
        const auto r = gradients::run(op, trial, 100, 20240901);
        v.check(r.worst < 1e-4, op + ": worst relative error " + sci(r.worst) + " over " +
                                    std::to_string(r.trials) + " trials");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.check(secs < 120.0, "runtime " + fmt(secs, 1) + " s (< 120 s)");
}

// 2 ---------------------------------------------------------------------------

void oracle_equivalence(Verdict& v) {
    Rng rng(20240902);
    int dbscan_ok = 0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 1 + rng() % 200, dim = 1 + rng() % 8;
        const auto pts = oracle::random_blobs(rng, n, dim);
        const double eps = 0.3 + 1.5 * uniform01(rng);
        const int min_pts = 1 + static_cast<int>(rng() % 8);
        const auto got = clustering::dbscan(pts, eps, min_pts);
        const auto want = oracle::dbscan(pts, eps, min_pts);
        dbscan_ok += got.core == want.core && got.cluster_count == want.cluster_count &&
                     oracle::same_partition(got.cluster, want.cluster);
    }
    v.check(dbscan_ok == 500, "dbscan equals the brute-force reference on " + std::to_string(dbscan_ok) + "/500 instances");

    double conv_err = 0.0, tconv_err = 0.0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t B = 1 + rng() % 4, T = 3 + rng() % 10, ci = 1 + rng() % 6, co = 1 + rng() % 6;
        const std::size_t K = 1 + 2 * (rng() % 2);
        const auto x = oracle::random_tensor({B, T, ci}, rng, -3.0, 3.0);
        const auto w = oracle::random_tensor({co, ci, K}, rng, -3.0, 3.0);
        const auto b = oracle::random_tensor({co}, rng, -3.0, 3.0);
        const auto u = oracle::random_tensor({B, T, ci}, rng, -3.0, 3.0);
        const auto wt = oracle::random_tensor({co, ci, K}, rng, -3.0, 3.0);
        Tape tape;
        const auto y = conv1d(tape.constant(x), tape.constant(w), tape.constant(b), 1, K / 2);
        const auto yt = conv1d_transpose(tape.constant(u), tape.constant(wt), tape.constant(b), 1, K / 2);
        const auto ref = oracle::conv1d(x, w, b, K / 2), reft = oracle::conv1d_transpose(u, wt, b, K / 2);
        if (y.shape() != ref.shape || yt.shape() != reft.shape) {
            conv_err = std::numeric_limits<double>::infinity();
            break;
        }
        for (std::size_t i = 0; i < ref.size(); ++i) conv_err = std::max(conv_err, std::abs(y.value()[i] - ref[i]));
        for (std::size_t i = 0; i < reft.size(); ++i) tconv_err = std::max(tconv_err, std::abs(yt.value()[i] - reft[i]));
    }
    v.check(conv_err <= 1e-10, "conv1d max deviation from the triple-loop oracle " + sci(conv_err) + " (<= 1e-10)");
    v.check(tconv_err <= 1e-10,
            "conv1d_transpose max deviation from the explicit transpose " + sci(tconv_err) + " (<= 1e-10)");

    double feat_err = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto s = oracle::random_series(t, rng);
        const auto got = pipeline::window_features(s);
        const auto want = oracle::window_features(s);
        for (std::size_t i = 0; i < want.size(); ++i) feat_err = std::max(feat_err, std::abs(got[i] - want[i]));
    }
    v.check(feat_err <= 1e-9, "window features on 1000 windows, max deviation " + sci(feat_err) + " (<= 1e-9)");
}

// 3 ---------------------------------------------------------------------------

void label_blindness(Verdict& v) {
    auto rc = acceptance_config();
    rc.model.epochs = 2;
    auto cc = rc.cluster;
    cc.seed = rc.cluster_seed();
    const auto ds = experiment::build_dataset(rc);
    for (auto kind : architectures) {
        std::optional<experiment::Predictions> clean;
        bool same = true;
        std::string flipped_note;
        for (double p : {0.0, 0.1, 0.3, 0.5}) {
            Rng rng(noise::trial_seed(rc.sweep_seed(), p, 0));
            const auto flipped = noise::flip_labels(ds.windows, p, rng);
            auto windows = ds.windows;
            for (std::size_t i = 0; i < windows.size(); ++i) windows[i].label = flipped.labels[i];
            flipped_note += " p=" + fmt(p, 1) + ":" + std::to_string(flipped.windows_flipped);
            const auto run = experiment::run_unsupervised(windows, rc.architecture(kind), cc);
            if (!clean)
                clean = run.predictions;
            else
                same = same && run.predictions.pred == clean->pred && run.predictions.score == clean->score;
        }
        v.check(same, std::string(models::to_string(kind)) + " predictions and scores bitwise identical (windows flipped" +
                          flipped_note + ")");
    }
}

// 4 ---------------------------------------------------------------------------

void noise_degradation(Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rc = acceptance_config();
    const auto ds = experiment::build_dataset(rc);
    scenario_preconditions(v, ds, rc);
    auto sc = rc.sweep;
    sc.p_grid = {0.0, 0.3};
    sc.trials = 100;
    sc.seed = rc.sweep_seed();
    const auto rows = noise::noise_sweep(experiment::labeled_windows(ds.windows), sc);
    const auto clean = noise::summarize(rows, "forest", 0.0, &metrics::Scores::f1_macro);
    const auto noisy = noise::summarize(rows, "forest", 0.3, &metrics::Scores::f1_macro);
    double realized = 0.0;
    for (const auto& r : rows)
        if (r.p == 0.3) realized += r.flipped_windows / static_cast<double>(noisy.n);
    const double drop = clean.mean - noisy.mean;
    const double std_max = std::max(clean.std, noisy.std);
    v.detail << "    forest F1-macro p=0: " << fmt(clean.mean) << " +- " << fmt(clean.std) << ", p=0.3: " << fmt(noisy.mean)
             << " +- " << fmt(noisy.std) << " (" << noisy.n << " trials, realized window flip fraction " << fmt(realized, 3)
             << ")\n";
    v.detail << "    drop " << fmt(drop) << "; 2 x std(p=0) = " << fmt(2 * clean.std) << ", 2 x std(p=0.3) = " << fmt(2 * noisy.std)
             << "\n";
    v.check(drop > 2.0 * std_max, "drop exceeds 2 x the larger across-trial std (" + fmt(2 * std_max) + ")");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.check(secs < 1800.0, "runtime " + fmt(secs, 1) + " s (< 30 min)");
}

// 5 ---------------------------------------------------------------------------

void architecture_ordering(Verdict& v) {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        const auto rc = acceptance_config(seed);
        auto cc = rc.cluster;
        cc.seed = rc.cluster_seed();
        const auto ds = experiment::build_dataset(rc);
        std::map<ArchitectureKind, metrics::MetricsReport> rep;
        for (auto kind : architectures)
            rep[kind] = experiment::evaluate(experiment::run_unsupervised(ds.windows, rc.architecture(kind), cc).predictions);
        const auto& c = rep[ArchitectureKind::cemwa];
        const auto& m = rep[ArchitectureKind::mwa];
        const auto& w = rep[ArchitectureKind::wa];
        const std::string s = "seed " + std::to_string(seed) + ": ";
        v.detail << "    " << s << "per-user F1-macro cemwa " << fmt(c.f1_macro_users.mean) << " +- " << fmt(c.f1_macro_users.std)
                 << ", mwa " << fmt(m.f1_macro_users.mean) << " +- " << fmt(m.f1_macro_users.std) << ", wa "
                 << fmt(w.f1_macro_users.mean) << " +- " << fmt(w.f1_macro_users.std) << "; cemwa AUC "
                 << fmt(c.auc_users.mean) << " (pooled F1 " << fmt(c.pooled.f1_macro) << ", pooled AUC "
                 << fmt(c.pooled.auc_roc.value_or(0.0)) << ")\n";
        v.check(c.f1_macro_users.mean > m.f1_macro_users.mean && c.f1_macro_users.mean > w.f1_macro_users.mean,
                s + "cemwa mean F1-macro exceeds mwa and wa");
        v.check(c.f1_macro_users.mean >= 0.85, s + "cemwa mean F1-macro >= 0.85");
        v.check(c.auc_users.mean >= 0.85, s + "cemwa mean AUC-ROC >= 0.85");
        v.check(c.f1_macro_users.std <= m.f1_macro_users.std, s + "cemwa per-user std <= mwa per-user std");
    }
}

// 6 ---------------------------------------------------------------------------

void random_floor(Verdict& v) {
    const auto rc = acceptance_config();
    const auto labeled = experiment::labeled_windows(experiment::build_dataset(rc).windows);
    const auto n = std::max<std::size_t>(rc.random_windows, 10000);
    const auto r = experiment::evaluate(experiment::run_random(labeled, n, rc.random_seed()));
    v.check(r.pooled.count >= 10000, "scored on " + std::to_string(r.pooled.count) + " windows (>= 1e4)");
    v.check(std::abs(r.pooled.accuracy - 0.5) <= 0.01, "accuracy " + fmt(r.pooled.accuracy) + " within 0.50 +- 0.01");
    const double auc = r.pooled.auc_roc.value_or(-1.0);
    v.check(std::abs(auc - 0.5) <= 0.02, "AUC-ROC " + fmt(auc) + " within 0.50 +- 0.02");
}

// 7 ---------------------------------------------------------------------------

void pipeline_exactness(Verdict& v) {
    for (const auto& c : pipeline_cases::all()) v.check(c.pass, c.name + " (" + c.detail + ")");
}

// 8 ---------------------------------------------------------------------------

void determinism(Verdict& v) {
    const std::string cfg = std::string("--config ") + BIBO_SMOKE_CONFIG;
    const auto a = cli::scratch("acceptance_a"), b = cli::scratch("acceptance_b");
    for (const char* stage : {"simulate", "prepare", "train", "cluster", "evaluate", "noise-sweep", "report"}) {
        const int ra = cli::run(cfg + " --out " + a.string() + " --stage " + stage);
        const int rb = cli::run(cfg + " --out " + b.string() + " --stage " + stage);
        const auto diff = ra == 0 && rb == 0 ? cli::compare_trees(a / stage, b / stage)
                                             : "exit codes " + std::to_string(ra) + ", " + std::to_string(rb);
        v.check(diff.empty(), std::string(stage) + " artifacts byte-identical" + (diff.empty() ? "" : ": " + diff));
    }
    const auto before = cli::snapshot(a);
    const int rc = cli::run(cfg + " --out " + a.string());
    v.check(rc == 0 && cli::snapshot(a) == before, "rerunning every stage in place rewrites identical bytes");
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
        {"gradient integrity", gradient_integrity},
        {"oracle equivalence", oracle_equivalence},
        {"label blindness", label_blindness},
        {"noise degradation", noise_degradation},
        {"architecture ordering", architecture_ordering},
        {"random floor", random_floor},
        {"pipeline exactness", pipeline_exactness},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.check(false, std::string("threw: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "criterion " << i + 1 << " " << (v.pass ? "PASS" : "FAIL") << " " << criteria[i].first << " ("
                  << fmt(secs, 1) << " s)\n"
                  << v.detail.str() << std::flush;
        failed += v.pass ? 0 : 1;
    }
    if (failed)
        std::cout << failed << " of " << criteria.size() << " criteria failed\n";
    else
        std::cout << "all criteria passed\n";
    return failed ? 1 : 0;
}
