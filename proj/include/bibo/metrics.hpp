#pragma once

// Binary classification metrics with BI as the positive class, pooled and
// per user.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bibo/error.hpp"

namespace bibo::metrics {

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct Scores {
    ClassScores bi, bo;
    double f1_macro = 0.0;
    double f1_weighted = 0.0;
    double accuracy = 0.0;
    std::optional<double> auc_roc;  // absent when ground truth has one class
    std::string auc_note;
    std::size_t count = 0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
    std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> v) {
    MeanStd r;
    r.n = v.size();
    if (v.empty()) return r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double s = 0.0;
        for (double x : v) s += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
    }
    return r;
}

/// Mann-Whitney AUC with midranks for tied scores; nullopt for one-class truth.
inline std::optional<double> auc_roc(std::span<const double> score, std::span<const int> truth) {
    require(score.size() == truth.size(), "auc_roc: length mismatch");
    const std::size_t n = score.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    double rank_sum = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && score[idx[j]] == score[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (truth[idx[k]] == 1) rank_sum += midrank, pos += 1.0;
        i = j;
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) return std::nullopt;
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

inline Scores compute_scores(std::span<const int> pred, std::span<const double> score, std::span<const int> truth) {
    require(pred.size() == truth.size() && score.size() == truth.size(), "compute_metrics: length mismatch");
    for (double s : score) require(std::isfinite(s), "compute_metrics: non-finite score");
    Scores r;
    r.count = truth.size();
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require((pred[i] == 0 || pred[i] == 1) && (truth[i] == 0 || truth[i] == 1), "compute_metrics: labels must be 0/1");
        if (pred[i] == 1) (truth[i] == 1 ? tp : fp) += 1;
        else (truth[i] == 1 ? fn : tn) += 1;
    }
    auto fill = [](double t, double f_pos, double f_neg, std::size_t support) {
        ClassScores c;
        c.support = support;
        c.precision = t + f_pos > 0 ? t / (t + f_pos) : 0.0;
        c.recall = t + f_neg > 0 ? t / (t + f_neg) : 0.0;
        c.f1 = 2 * t + f_pos + f_neg > 0 ? 2 * t / (2 * t + f_pos + f_neg) : 0.0;
        return c;
    };
    r.bi = fill(tp, fp, fn, static_cast<std::size_t>(tp + fn));
    r.bo = fill(tn, fn, fp, static_cast<std::size_t>(tn + fp));
    // classes absent from both truth and prediction are left out of the macro average
    const bool has_bi = tp + fn + fp > 0, has_bo = tn + fp + fn > 0;
    const double classes = (has_bi ? 1.0 : 0.0) + (has_bo ? 1.0 : 0.0);
    r.f1_macro = classes > 0 ? ((has_bi ? r.bi.f1 : 0.0) + (has_bo ? r.bo.f1 : 0.0)) / classes : 0.0;
    const double n = static_cast<double>(truth.size());
    r.f1_weighted = n > 0 ? (r.bi.f1 * static_cast<double>(r.bi.support) + r.bo.f1 * static_cast<double>(r.bo.support)) / n : 0.0;
    r.accuracy = n > 0 ? (tp + tn) / n : 0.0;
    r.auc_roc = auc_roc(score, truth);
    if (!r.auc_roc) r.auc_note = "ground truth has a single class";
    return r;
}

struct UserScores {
    std::string user_id;
    Scores scores;
};

struct MetricsReport {
    std::string model;
    Scores pooled;
    std::vector<UserScores> per_user;  // sorted by user id
    MeanStd f1_macro_users, f1_weighted_users, accuracy_users, auc_users;
};

/// Pooled metrics plus the per-user breakdown and its mean +- std.
inline MetricsReport compute_metrics(const std::string& model, std::span<const int> pred, std::span<const double> score,
                                     std::span<const int> truth, std::span<const std::string> user) {
    require(user.size() == truth.size(), "compute_metrics: one user id per window expected");
    MetricsReport r;
    r.model = model;
    r.pooled = compute_scores(pred, score, truth);
    std::map<std::string, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < user.size(); ++i) by_user[user[i]].push_back(i);
    std::vector<double> f1m, f1w, acc, auc;
    for (const auto& [u, idx] : by_user) {
        std::vector<int> p, t;
        std::vector<double> s;
        for (auto i : idx) p.push_back(pred[i]), t.push_back(truth[i]), s.push_back(score[i]);
        UserScores us{u, compute_scores(p, s, t)};
        f1m.push_back(us.scores.f1_macro);
        f1w.push_back(us.scores.f1_weighted);
        acc.push_back(us.scores.accuracy);
        if (us.scores.auc_roc) auc.push_back(*us.scores.auc_roc);
        r.per_user.push_back(std::move(us));
    }
    r.f1_macro_users = mean_std(f1m);
    r.f1_weighted_users = mean_std(f1w);
    r.accuracy_users = mean_std(acc);
    r.auc_users = mean_std(auc);
    return r;
}

inline nlohmann::ordered_json to_json(const ClassScores& c) {
    return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

inline nlohmann::ordered_json to_json(const Scores& s) {
    nlohmann::ordered_json j = {{"count", s.count},
                                {"BI", to_json(s.bi)},
                                {"BO", to_json(s.bo)},
                                {"f1_macro", s.f1_macro},
                                {"f1_weighted", s.f1_weighted},
                                {"accuracy", s.accuracy}};
    if (s.auc_roc)
        j["auc_roc"] = *s.auc_roc;
    else
        j["auc_roc"] = nullptr, j["auc_note"] = s.auc_note;
    return j;
}

inline nlohmann::ordered_json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
    auto users = nlohmann::ordered_json::array();
    for (const auto& u : r.per_user) users.push_back({{"user", u.user_id}, {"scores", to_json(u.scores)}});
    return {{"model", r.model},
            {"pooled", to_json(r.pooled)},
            {"per_user_mean_std",
             {{"f1_macro", to_json(r.f1_macro_users)},
              {"f1_weighted", to_json(r.f1_weighted_users)},
              {"accuracy", to_json(r.accuracy_users)},
              {"auc_roc", to_json(r.auc_users)}}},
            {"per_user", users}};
}

} // namespace bibo::metrics
