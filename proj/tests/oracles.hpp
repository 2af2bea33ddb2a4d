#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance suite. They favour the most literal formulation over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "bibo/ops.hpp"
#include "bibo/rng.hpp"
#include "bibo/tensor.hpp"

namespace oracle {

using bibo::Rng;
using bibo::Shape;
using bibo::Tape;
using bibo::Tensor;
using bibo::Var;

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.values) v = lo + (hi - lo) * bibo::uniform01(rng);
    return t;
}

/// Values in (-hi, -gap] u [gap, hi): keeps piecewise-linear ops away from their kinks.
inline Tensor kink_free_tensor(Shape s, Rng& rng, double gap = 1e-2, double hi = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.values) {
        const double m = gap + (hi - gap) * bibo::uniform01(rng);
        v = bibo::uniform01(rng) < 0.5 ? -m : m;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Convolution by direct summation over the padded input

inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad) {
    const std::size_t B = x.shape[0], T = x.shape[1], Ci = x.shape[2];
    const std::size_t Co = w.shape[0], K = w.shape[2];
    const std::size_t Tp = T + 2 * pad;
    std::vector<double> padded(B * Tp * Ci, 0.0);
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < Ci; ++c) padded[(n * Tp + t + pad) * Ci + c] = x.values[(n * T + t) * Ci + c];
    const std::size_t To = Tp - K + 1;
    Tensor y(Shape{B, To, Co});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t t = 0; t < To; ++t)
            for (std::size_t o = 0; o < Co; ++o) {
                double acc = b.values[o];
                for (std::size_t c = 0; c < Ci; ++c)
                    for (std::size_t k = 0; k < K; ++k)
                        acc += padded[(n * Tp + t + k) * Ci + c] * w.values[(o * Ci + c) * K + k];
                y.values[(n * To + t) * Co + o] = acc;
            }
    return y;
}

/// Transposed convolution as the explicit matrix transpose of conv1d's input map.
inline Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad) {
    const std::size_t B = x.shape[0], Tin = x.shape[1], Ci = x.shape[2];
    const std::size_t Co = w.shape[0], K = w.shape[2];
    const std::size_t To = Tin + K - 1 - 2 * pad;
    Tensor y(Shape{B, To, Co});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t t = 0; t < To; ++t)
            for (std::size_t o = 0; o < Co; ++o) {
                double acc = b.values[o];
                for (std::size_t s = 0; s < Tin; ++s)
                    for (std::size_t k = 0; k < K; ++k) {
                        if (s + k != t + pad) continue;
                        for (std::size_t c = 0; c < Ci; ++c)
                            acc += x.values[(n * Tin + s) * Ci + c] * w.values[(o * Ci + c) * K + k];
                    }
                y.values[(n * To + t) * Co + o] = acc;
            }
    return y;
}

// ---------------------------------------------------------------------------
// Central finite differences

struct GradCheck {
    double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12)
    double max_abs = 0.0;
};

/// `f` builds a scalar on the tape from leaves holding `inputs`. Every input
/// is differentiated; the reported error pools all of them.
inline GradCheck grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f, std::vector<Tensor> inputs,
                            double h = 1e-6) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    Var out = f(tape, leaves);
    tape.backward(out);
    std::vector<double> analytic;
    for (const auto& v : leaves) {
        const auto g = v.grad();
        if (g.empty())
            analytic.insert(analytic.end(), v.value().size(), 0.0);
        else
            analytic.insert(analytic.end(), g.begin(), g.end());
    }
    auto eval = [&](const std::vector<Tensor>& in) {
        Tape t;
        std::vector<Var> ls;
        for (const auto& x : in) ls.push_back(t.leaf(x, false));
        return f(t, ls).value().item();
    };
    std::vector<double> numeric;
    for (std::size_t a = 0; a < inputs.size(); ++a)
        for (std::size_t i = 0; i < inputs[a].size(); ++i) {
            const double keep = inputs[a].values[i];
            inputs[a].values[i] = keep + h;
            const double up = eval(inputs);
            inputs[a].values[i] = keep - h;
            const double down = eval(inputs);
            inputs[a].values[i] = keep;
            numeric.push_back((up - down) / (2.0 * h));
        }
    double diff = 0.0, na = 0.0, nn = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic[i] - numeric[i];
        diff += d * d;
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
        mx = std::max(mx, std::abs(d));
    }
    return {std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12), mx};
}

/// Contracts a tensor-valued op with a fixed random tensor so it can be checked as a scalar.
inline Var project(Var y, const Tensor& r) { return bibo::sum(bibo::mul(y, y.tape().constant(r))); }

// ---------------------------------------------------------------------------
// DBSCAN by exhaustive neighbour lists and union-find over core points

struct Dbscan {
    std::vector<int> cluster;
    std::vector<bool> core;
    int cluster_count = 0;
};

inline Dbscan dbscan(const std::vector<std::vector<double>>& pts, double eps, int min_pts) {
    const std::size_t n = pts.size();
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t c = 0; c < pts[i].size(); ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
        return std::sqrt(s);
    };
    Dbscan r;
    r.core.assign(n, false);
    r.cluster.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        int count = 0;
        for (std::size_t j = 0; j < n; ++j) count += dist(i, j) <= eps;
        r.core[i] = count >= min_pts;
    }
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (r.core[i] && r.core[j] && dist(i, j) <= eps) parent[std::max(find(i), find(j))] = std::min(find(i), find(j));
    // components numbered by their lowest core index
    std::vector<int> id(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (!r.core[i]) continue;
        const auto root = find(i);
        if (id[root] < 0) id[root] = r.cluster_count++;
        r.cluster[i] = id[root];
    }
    // a border point takes the lowest-numbered cluster among its core neighbours
    for (std::size_t i = 0; i < n; ++i) {
        if (r.core[i]) continue;
        for (std::size_t j = 0; j < n; ++j)
            if (r.core[j] && dist(i, j) <= eps && (r.cluster[i] < 0 || r.cluster[j] < r.cluster[i])) r.cluster[i] = r.cluster[j];
    }
    return r;
}

/// True when two labelings induce the same partition with the same noise set.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::vector<std::optional<int>> fwd, back;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        const auto x = static_cast<std::size_t>(a[i]), y = static_cast<std::size_t>(b[i]);
        if (fwd.size() <= x) fwd.resize(x + 1);
        if (back.size() <= y) back.resize(y + 1);
        if (!fwd[x]) fwd[x] = b[i];
        if (!back[y]) back[y] = a[i];
        if (*fwd[x] != b[i] || *back[y] != a[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Window statistics written out one definition at a time

inline std::vector<double> window_features(const std::vector<double>& v) {
    const std::size_t n = v.size();
    long double s = 0.0L;
    for (double x : v) s += x;
    const double mean = static_cast<double>(s / static_cast<long double>(n));
    long double ss = 0.0L;
    for (double x : v) ss += (static_cast<long double>(x) - mean) * (static_cast<long double>(x) - mean);
    const double sd = std::sqrt(static_cast<double>(ss / static_cast<long double>(n)));

    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (v[i] > v[imax]) imax = i;
        if (v[i] < v[imin]) imin = i;
    }
    double below = 0, above = 0;
    for (double x : v) {
        below += x < mean - sd ? 1 : 0;
        above += x > mean + sd ? 1 : 0;
    }
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (v[i - 1] < v[i] && v[i + 1] < v[i]) peaks.push_back(i);
    double late = 0, high = 0;
    for (auto p : peaks) {
        late += 2 * p >= n - (n % 2) ? 1 : 0;
        high += v[p] > mean + sd ? 1 : 0;
    }
    double gap = 0.0;
    if (peaks.size() >= 2) {
        for (std::size_t k = 1; k < peaks.size(); ++k) gap += static_cast<double>(peaks[k] - peaks[k - 1]);
        gap /= static_cast<double>(peaks.size() - 1);
    }
    // ordinary least squares through the normal equations
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i);
        sx += x, sy += v[i], sxx += x * x, sxy += x * v[i];
    }
    const double nn = static_cast<double>(n);
    const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    return {mean,
            v[imax],
            v[imin],
            static_cast<double>(imin),
            static_cast<double>(imax),
            v[imax] - v[imin],
            below + above,
            below,
            above,
            static_cast<double>(peaks.size()),
            late,
            high,
            gap,
            slope};
}

// ---------------------------------------------------------------------------
// Random instances shared by the unit tests and the acceptance suite

/// A few blobs plus uniform clutter, so every instance has cores, borders and noise.
inline std::vector<std::vector<double>> random_blobs(Rng& rng, std::size_t n, std::size_t dim) {
    std::vector<std::vector<double>> centers(1 + rng() % 4, std::vector<double>(dim));
    for (auto& c : centers)
        for (auto& v : c) v = 10.0 * bibo::uniform01(rng);
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts) {
        const bool clutter = bibo::uniform01(rng) < 0.2;
        const auto& c = centers[rng() % centers.size()];
        for (std::size_t d = 0; d < dim; ++d)
            p[d] = clutter ? 10.0 * bibo::uniform01(rng) : c[d] + (bibo::uniform01(rng) - 0.5) * 2.0;
    }
    return pts;
}

/// 9-step series cycling through uniform values, small-integer ties, skewed values and constants.
inline std::vector<double> random_series(int style, Rng& rng) {
    std::vector<double> v(9);
    for (auto& x : v) {
        if (style % 4 == 0) x = bibo::uniform01(rng) * 10.0 - 5.0;
        else if (style % 4 == 1) x = static_cast<double>(rng() % 4);
        else if (style % 4 == 2) x = std::exp(3.0 * bibo::uniform01(rng));
        else x = 2.0;
    }
    return v;
}

} // namespace oracle
