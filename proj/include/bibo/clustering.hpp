#pragma once

// DBSCAN over latent vectors, label-free cluster polarity and nearest-core
// classification with a continuous BI score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bibo/error.hpp"
#include "bibo/pipeline.hpp"
#include "bibo/rng.hpp"

namespace bibo::clustering {

using Point = std::vector<double>;
inline constexpr int noise = -1;

inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

namespace detail {

/// Uniform grid with cell side eps; a neighbourhood query visits 3^dim cells.
class Grid {
public:
    Grid(std::span<const Point> pts, double eps) : pts_(pts), eps_(eps) {
        dim_ = pts.empty() ? 0 : pts[0].size();
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell_of(pts[i]))].push_back(i);
    }

    static bool usable(std::size_t dim) { return dim >= 1 && dim <= 6; }

    /// Indices within eps (inclusive) of point i, ascending.
    std::vector<std::size_t> neighbours(std::size_t i) const {
        std::vector<std::size_t> out;
        const auto base = cell_of(pts_[i]);
        std::vector<long long> c(dim_);
        std::size_t combos = 1;
        for (std::size_t d = 0; d < dim_; ++d) combos *= 3;
        for (std::size_t m = 0; m < combos; ++m) {
            std::size_t r = m;
            for (std::size_t d = 0; d < dim_; ++d) {
                c[d] = base[d] + static_cast<long long>(r % 3) - 1;
                r /= 3;
            }
            auto it = cells_.find(key(c));
            if (it == cells_.end()) continue;
            for (auto j : it->second)
                if (distance(pts_[i], pts_[j]) <= eps_) out.push_back(j);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::vector<long long> cell_of(const Point& p) const {
        std::vector<long long> c(dim_);
        for (std::size_t d = 0; d < dim_; ++d) c[d] = static_cast<long long>(std::floor(p[d] / eps_));
        return c;
    }
    static std::string key(const std::vector<long long>& c) {
        return std::string(reinterpret_cast<const char*>(c.data()), c.size() * sizeof(long long));
    }

    std::span<const Point> pts_;
    double eps_;
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<std::size_t>> cells_;
};

} // namespace detail

struct Assignment {
    std::vector<int> cluster;  // per point, noise = -1
    std::vector<bool> core;
    int cluster_count = 0;
};

/// Density-based clustering. A point is core when at least min_pts points
/// (itself included) lie within eps. Clusters are numbered in the order of
/// their first core point; a border point joins the first cluster that
/// reaches it.
inline Assignment dbscan(std::span<const Point> pts, double eps, int min_pts) {
    if (!(eps > 0.0)) fail("dbscan: eps must be positive");
    if (min_pts < 1) fail("dbscan: min_pts must be >= 1");
    Assignment a;
    const std::size_t n = pts.size();
    a.cluster.assign(n, noise);
    a.core.assign(n, false);
    if (n == 0) return a;
    const std::size_t dim = pts[0].size();
    for (const auto& p : pts) require(p.size() == dim, "dbscan: points differ in dimension");

    std::vector<std::vector<std::size_t>> nb(n);
    if (detail::Grid::usable(dim)) {
        detail::Grid g(pts, eps);
        for (std::size_t i = 0; i < n; ++i) nb[i] = g.neighbours(i);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (distance(pts[i], pts[j]) <= eps) nb[i].push_back(j);
    }
    for (std::size_t i = 0; i < n; ++i) a.core[i] = nb[i].size() >= static_cast<std::size_t>(min_pts);

    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (!a.core[i] || a.cluster[i] != noise) continue;
        const int id = a.cluster_count++;
        a.cluster[i] = id;
        stack.assign(1, i);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            for (auto q : nb[p]) {
                if (a.cluster[q] != noise) continue;
                a.cluster[q] = id;
                if (a.core[q]) stack.push_back(q);
            }
        }
    }
    return a;
}

/// Sorted distances to the k-th nearest other point over a deterministic subsample.
inline std::vector<double> knn_distances(std::span<const Point> pts, std::size_t k, std::size_t max_sample, std::uint64_t seed) {
    require(pts.size() > k, "knn_distances: need more than k points");
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_sample) {
        Rng rng(seed);
        for (std::size_t i = 0; i < max_sample; ++i) std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
        idx.resize(max_sample);
        std::sort(idx.begin(), idx.end());
    }
    std::vector<double> kth;
    std::vector<double> d;
    for (auto i : idx) {
        d.clear();
        for (auto j : idx)
            if (j != i) d.push_back(distance(pts[i], pts[j]));
        if (d.size() < k) continue;
        std::nth_element(d.begin(), d.begin() + static_cast<long>(k - 1), d.end());
        kth.push_back(d[k - 1]);
    }
    require(!kth.empty(), "knn_distances: subsample too small");
    std::sort(kth.begin(), kth.end());
    return kth;
}

/// Lower empirical quantile of sorted values.
inline double sorted_quantile(std::span<const double> sorted, double q) {
    require(!sorted.empty(), "sorted_quantile: empty input");
    require(q >= 0.0 && q <= 1.0, "sorted_quantile: q must lie in [0,1]");
    return sorted[std::min(sorted.size() - 1, static_cast<std::size_t>(q * static_cast<double>(sorted.size())))];
}

// ---------------------------------------------------------------------------
// Polarity and classification

enum class Polarity { bo = 0, bi = 1 };
enum class NoisePolicy { bo, nearest_cluster };

/// What a cluster's mean window strength is compared with.
enum class ThresholdRule {
    window_median,   // median strength over all clustered windows
    cluster_median,  // median of the per-cluster mean strengths
    fixed            // ClusterConfig::strength_threshold
};

struct ClusterConfig {
    std::optional<double> eps;  // unset: k-NN distance quantile
    int min_pts = 8;
    std::size_t knn_k = 4;
    std::vector<double> knn_quantiles = {0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95};  // eps candidates
    std::size_t knn_sample = 2000;
    std::size_t max_fit_points = 12000;  // deterministic subsample for the fit
    NoisePolicy noise_policy = NoisePolicy::bo;
    ThresholdRule threshold_rule = ThresholdRule::fixed;
    double strength_threshold = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (eps && !(*eps > 0.0)) fail(ErrorKind::config, "cluster.eps must be positive");
        if (min_pts < 1) fail(ErrorKind::config, "cluster.min_pts must be >= 1");
        if (knn_quantiles.empty()) fail(ErrorKind::config, "cluster.knn_quantiles must not be empty");
        for (double q : knn_quantiles)
            if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::config, "cluster.knn_quantiles entries must lie in [0,1]");
        if (knn_k < 1) fail(ErrorKind::config, "cluster.knn_k must be >= 1");
        if (knn_sample <= knn_k) fail(ErrorKind::config, "cluster.knn_sample must exceed knn_k");
        if (max_fit_points < 2) fail(ErrorKind::config, "cluster.max_fit_points must be >= 2");
        if (!(strength_threshold >= 0.0 && strength_threshold <= 1.0))
            fail(ErrorKind::config, "cluster.strength_threshold must lie in [0,1]");
    }
};

struct ClusterModel {
    double eps = 1.0;
    int min_pts = 1;
    std::vector<Point> core_points;
    std::vector<int> core_cluster;
    std::vector<Polarity> cluster_polarity;  // indexed by cluster id
    std::vector<double> cluster_strength;
    NoisePolicy noise_policy = NoisePolicy::bo;
    double threshold = 0.0;
    bool degenerate = false;  // fewer than one BI and one BO cluster
    std::string degenerate_reason;
    std::vector<std::pair<double, double>> eps_candidates;  // (eps, pseudo-label agreement) tried by fit
};

/// Per-cluster mean of the window BLE strength; above `threshold` is BI.
/// Takes only latents and strengths, so ground truth cannot leak in.
inline ClusterModel assign_polarity(std::span<const Point> latents, const Assignment& a, std::span<const double> strength,
                                    double eps, int min_pts, NoisePolicy policy, ThresholdRule rule, double fixed_threshold) {
    require(latents.size() == a.cluster.size() && strength.size() == a.cluster.size(),
            "assign_polarity: input lengths differ");
    ClusterModel m;
    m.eps = eps;
    m.min_pts = min_pts;
    m.noise_policy = policy;
    if (a.cluster_count == 0) {
        m.degenerate = true;
        m.degenerate_reason = "no clusters found";
        return m;
    }
    std::vector<double> sum(static_cast<std::size_t>(a.cluster_count), 0.0), cnt(sum.size(), 0.0);
    for (std::size_t i = 0; i < a.cluster.size(); ++i) {
        if (a.cluster[i] == noise) continue;
        sum[static_cast<std::size_t>(a.cluster[i])] += strength[i];
        cnt[static_cast<std::size_t>(a.cluster[i])] += 1.0;
    }
    for (std::size_t c = 0; c < sum.size(); ++c) m.cluster_strength.push_back(sum[c] / cnt[c]);

    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    switch (rule) {
    case ThresholdRule::window_median: {
        std::vector<double> s;
        for (std::size_t i = 0; i < a.cluster.size(); ++i)
            if (a.cluster[i] != noise) s.push_back(strength[i]);
        m.threshold = median(std::move(s));
        break;
    }
    case ThresholdRule::cluster_median: m.threshold = median(m.cluster_strength); break;
    case ThresholdRule::fixed: m.threshold = fixed_threshold; break;
    }
    bool any_bi = false, any_bo = false;
    for (double s : m.cluster_strength) {
        const auto p = s > m.threshold ? Polarity::bi : Polarity::bo;
        m.cluster_polarity.push_back(p);
        (p == Polarity::bi ? any_bi : any_bo) = true;
    }
    if (!any_bi || !any_bo) {
        m.degenerate = true;
        m.degenerate_reason = any_bi ? "every cluster is BI" : "every cluster is BO";
    }
    for (std::size_t i = 0; i < a.cluster.size(); ++i) {
        if (!a.core[i]) continue;
        m.core_points.push_back(latents[i]);
        m.core_cluster.push_back(a.cluster[i]);
    }
    return m;
}

struct Classification {
    Polarity cls = Polarity::bo;
    double score = 0.0;  // distance to nearest BO core minus distance to nearest BI core
};

inline Classification classify(const ClusterModel& m, std::span<const double> z) {
    require(!m.core_points.empty(), "classify: cluster model has no core points");
    constexpr double inf = std::numeric_limits<double>::infinity();
    double best = inf, best_bi = inf, best_bo = inf;
    int best_cluster = noise;
    for (std::size_t i = 0; i < m.core_points.size(); ++i) {
        const double d = distance(z, m.core_points[i]);
        const int c = m.core_cluster[i];
        if (d < best) best = d, best_cluster = c;
        if (m.cluster_polarity[static_cast<std::size_t>(c)] == Polarity::bi)
            best_bi = std::min(best_bi, d);
        else
            best_bo = std::min(best_bo, d);
    }
    Classification r;
    const Polarity nearest = m.cluster_polarity[static_cast<std::size_t>(best_cluster)];
    if (best <= m.eps || m.noise_policy == NoisePolicy::nearest_cluster)
        r.cls = nearest;
    else
        r.cls = Polarity::bo;
    // a side with no cores at all gets a large finite stand-in so scores stay ordered
    const double far = best + 1e6;
    r.score = (std::isinf(best_bo) ? far : best_bo) - (std::isinf(best_bi) ? far : best_bi);
    return r;
}

/// Balanced agreement between fitted polarity and each window's own BLE
/// pseudo-label (strength above the model threshold); -1 for a degenerate model.
inline double pseudo_label_agreement(const ClusterModel& m, const Assignment& a, std::span<const Point> pts,
                                     std::span<const double> strength) {
    if (m.degenerate) return -1.0;
    double hit[2] = {0.0, 0.0}, total[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const int pseudo = strength[i] > m.threshold ? 1 : 0;
        Polarity p;
        if (a.cluster[i] != noise)
            p = m.cluster_polarity[static_cast<std::size_t>(a.cluster[i])];
        else
            p = classify(m, pts[i]).cls;
        total[pseudo] += 1.0;
        hit[pseudo] += static_cast<int>(p) == pseudo ? 1.0 : 0.0;
    }
    if (total[0] == 0.0 || total[1] == 0.0) return -1.0;
    return 0.5 * (hit[0] / total[0] + hit[1] / total[1]);
}

/// Fits DBSCAN plus polarity on windows already sorted by (segment, window
/// index); the latents come from a trained encoder. Without a fixed eps, each
/// k-NN distance quantile is tried and the eps with the best pseudo-label
/// agreement wins (earliest candidate on ties).
inline ClusterModel fit(std::span<const Point> latents, std::span<const double> strength, const ClusterConfig& cfg) {
    cfg.validate();
    require(latents.size() == strength.size(), "cluster fit: input lengths differ");
    require(latents.size() >= 2, "cluster fit: need at least two windows");
    std::vector<Point> pts;
    std::vector<double> str;
    if (latents.size() > cfg.max_fit_points) {
        // evenly strided subsample keeps scan order and is seed-free
        const double step = static_cast<double>(latents.size()) / static_cast<double>(cfg.max_fit_points);
        for (std::size_t k = 0; k < cfg.max_fit_points; ++k) {
            const auto i = static_cast<std::size_t>(static_cast<double>(k) * step);
            pts.push_back(latents[i]);
            str.push_back(strength[i]);
        }
    } else {
        pts.assign(latents.begin(), latents.end());
        str.assign(strength.begin(), strength.end());
    }
    std::vector<double> candidates;
    if (cfg.eps) {
        candidates.push_back(*cfg.eps);
    } else {
        const auto kth = knn_distances(pts, cfg.knn_k, cfg.knn_sample, derive_seed(cfg.seed, {0xc1u}));
        for (double q : cfg.knn_quantiles) candidates.push_back(sorted_quantile(kth, q));
    }
    std::optional<ClusterModel> best;
    double best_score = 0.0;
    std::vector<std::pair<double, double>> tried;
    for (double eps : candidates) {
        if (!(eps > 0.0)) continue;
        const auto a = dbscan(pts, eps, cfg.min_pts);
        auto m = assign_polarity(pts, a, str, eps, cfg.min_pts, cfg.noise_policy, cfg.threshold_rule, cfg.strength_threshold);
        const double score = m.core_points.empty() ? -1.0 : pseudo_label_agreement(m, a, pts, str);
        tried.emplace_back(eps, score);
        if (!best || score > best_score) best = std::move(m), best_score = score;
    }
    if (!best) fail(ErrorKind::numerical, "cluster fit: every eps candidate is zero (duplicate latents)");
    best->eps_candidates = std::move(tried);
    return *best;
}

// ---------------------------------------------------------------------------
// Persistence

inline const char* to_string(ThresholdRule r) {
    switch (r) {
    case ThresholdRule::window_median: return "window_median";
    case ThresholdRule::cluster_median: return "cluster_median";
    default: return "fixed";
    }
}

inline ThresholdRule threshold_rule_from_string(const std::string& s) {
    if (s == "window_median") return ThresholdRule::window_median;
    if (s == "cluster_median") return ThresholdRule::cluster_median;
    if (s == "fixed") return ThresholdRule::fixed;
    fail(ErrorKind::config, "cluster.threshold_rule: unknown value '" + s + "'");
}

inline const char* to_string(NoisePolicy p) { return p == NoisePolicy::bo ? "bo" : "nearest_cluster"; }

inline NoisePolicy noise_policy_from_string(const std::string& s) {
    if (s == "bo") return NoisePolicy::bo;
    if (s == "nearest_cluster") return NoisePolicy::nearest_cluster;
    fail(ErrorKind::config, "cluster.noise_policy: unknown value '" + s + "'");
}

inline nlohmann::ordered_json to_json(const ClusterModel& m) {
    nlohmann::ordered_json j;
    j["eps"] = m.eps;
    j["min_pts"] = m.min_pts;
    j["noise_policy"] = to_string(m.noise_policy);
    j["threshold"] = m.threshold;
    j["degenerate"] = m.degenerate;
    if (m.degenerate) j["degenerate_reason"] = m.degenerate_reason;
    auto clusters = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.cluster_polarity.size(); ++c)
        clusters.push_back({{"id", c},
                            {"polarity", m.cluster_polarity[c] == Polarity::bi ? "BI" : "BO"},
                            {"mean_strength", m.cluster_strength[c]}});
    j["clusters"] = clusters;
    auto tried = nlohmann::ordered_json::array();
    for (const auto& [e, sc] : m.eps_candidates) tried.push_back({{"eps", e}, {"agreement", sc}});
    j["eps_candidates"] = tried;
    auto cores = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.core_points.size(); ++i) cores.push_back({{"cluster", m.core_cluster[i]}, {"z", m.core_points[i]}});
    j["core_points"] = cores;
    return j;
}

inline ClusterModel cluster_model_from_json(const nlohmann::json& j) {
    ClusterModel m;
    try {
        m.eps = j.at("eps").get<double>();
        m.min_pts = j.at("min_pts").get<int>();
        m.noise_policy = noise_policy_from_string(j.at("noise_policy").get<std::string>());
        m.threshold = j.at("threshold").get<double>();
        m.degenerate = j.at("degenerate").get<bool>();
        if (j.contains("degenerate_reason")) m.degenerate_reason = j.at("degenerate_reason").get<std::string>();
        for (const auto& c : j.at("clusters")) {
            m.cluster_polarity.push_back(c.at("polarity").get<std::string>() == "BI" ? Polarity::bi : Polarity::bo);
            m.cluster_strength.push_back(c.at("mean_strength").get<double>());
        }
        if (j.contains("eps_candidates"))
            for (const auto& c : j.at("eps_candidates"))
                m.eps_candidates.emplace_back(c.at("eps").get<double>(), c.at("agreement").get<double>());
        for (const auto& c : j.at("core_points")) {
            m.core_cluster.push_back(c.at("cluster").get<int>());
            m.core_points.push_back(c.at("z").get<Point>());
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, std::string("cluster model: ") + e.what());
    }
    return m;
}

} // namespace bibo::clustering
