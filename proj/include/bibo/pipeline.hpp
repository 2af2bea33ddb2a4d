#pragma once

// Raw logs -> segments -> per-point channels -> 9-step sliding windows, plus
// the hand-crafted window statistics used by the supervised baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bibo/error.hpp"
#include "bibo/geo.hpp"
#include "bibo/simulator.hpp"

namespace bibo::pipeline {

inline constexpr std::size_t window_width = 9;

enum class Label : std::int8_t { none = -1, bo = 0, bi = 1 };

inline const char* to_string(Label l) {
    switch (l) {
    case Label::bi: return "BI";
    case Label::bo: return "BO";
    default: return "none";
    }
}

inline Label flip(Label l) {
    if (l == Label::bi) return Label::bo;
    if (l == Label::bo) return Label::bi;
    return l;
}

// ---------------------------------------------------------------------------
// Segmentation

struct TrackPoint {
    double t = 0.0;
    geo::LatLon pos;
    double speed = 0.0;
};

struct SegmentOptions {
    double max_gap_s = 120.0;
    double max_speed_mps = 45.0;
    std::size_t min_len = 10;
};

/// Splits a time-sorted stream at gaps > max_gap_s or implied speeds >
/// max_speed_mps, dropping pieces shorter than min_len.
inline std::vector<std::vector<TrackPoint>> segment(std::span<const TrackPoint> stream, const SegmentOptions& opt = {}) {
    for (std::size_t i = 1; i < stream.size(); ++i)
        if (!(stream[i].t > stream[i - 1].t)) fail("segment: stream is not strictly time-sorted at index " + std::to_string(i));
    std::vector<std::vector<TrackPoint>> out;
    std::vector<TrackPoint> cur;
    auto close = [&] {
        if (cur.size() >= opt.min_len) out.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (!cur.empty()) {
            const auto& prev = cur.back();
            const double dt = stream[i].t - prev.t;
            const double v = geo::haversine(prev.pos, stream[i].pos) / dt;
            if (dt > opt.max_gap_s || v > opt.max_speed_mps) close();
        }
        cur.push_back(stream[i]);
    }
    close();
    return out;
}

// ---------------------------------------------------------------------------
// Smartphone-bus distance

/// Bus fixes bucketed by whole second for +-tolerance lookups.
class BusIndex {
public:
    explicit BusIndex(const sim::ObservationLog& log) {
        for (const auto& d : log.devices) {
            if (!d.is_bus) continue;
            for (const auto& f : d.gps) buckets_[static_cast<long>(std::floor(f.t))].push_back({f.t, f.lat, f.lon});
        }
    }

    BusIndex() = default;

    void add(double t, geo::LatLon p) { buckets_[static_cast<long>(std::floor(t))].push_back({t, p.lat, p.lon}); }

    /// Minimum distance to any bus fix within +-tolerance_s, if one exists.
    std::optional<double> distance(double t, geo::LatLon p, double tolerance_s = 1.0) const {
        std::optional<double> best;
        const long lo = static_cast<long>(std::floor(t - tolerance_s));
        const long hi = static_cast<long>(std::floor(t + tolerance_s));
        for (auto it = buckets_.lower_bound(lo); it != buckets_.end() && it->first <= hi; ++it)
            for (const auto& f : it->second) {
                if (std::abs(f.t - t) > tolerance_s + 1e-9) continue;
                const double d = geo::haversine(p, {f.lat, f.lon});
                if (!best || d < *best) best = d;
            }
        return best;
    }

private:
    struct Fix {
        double t, lat, lon;
    };
    std::map<long, std::vector<Fix>> buckets_;
};

inline std::optional<double> bus_distance(const TrackPoint& fix, const BusIndex& buses, double tolerance_s = 1.0) {
    return buses.distance(fix.t, fix.pos, tolerance_s);
}

// ---------------------------------------------------------------------------
// Imputation

/// Exponentially weighted moving average over observed entries; gaps hold
/// the last average, leading gaps take the first observation.
inline std::vector<double> impute_ewma(std::span<const std::optional<double>> series, double alpha) {
    require(alpha > 0.0 && alpha <= 1.0, "impute_ewma: alpha must lie in (0,1]");
    std::optional<double> first;
    for (const auto& v : series)
        if (v) {
            first = v;
            break;
        }
    if (!first) fail("impute_ewma: series has no observed values");
    std::vector<double> out(series.size());
    double y = *first;
    bool started = false;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i]) {
            y = started ? alpha * *series[i] + (1.0 - alpha) * y : *series[i];
            started = true;
        }
        out[i] = y;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-point channels and windows

/// GPS-derived channels (x1).
enum GpsChannel : std::size_t { ch_speed, ch_time_gap, ch_space_gap, ch_bearing, ch_bus_distance, gps_channel_count };
inline constexpr std::array<const char*, gps_channel_count> gps_channel_names{
    "speed", "time_gap", "space_gap", "bearing", "log_bus_distance"};

struct PipelineOptions {
    SegmentOptions segmentation;
    double bus_tolerance_s = 1.0;
    double ewma_alpha = 0.3;
    bool stop_beacon_channel = false;
    std::string labeled_prefix = "L";
    double rssi_floor_dbm = -100.0;
    double rssi_ref_dbm = -59.0;
};

inline std::size_t ble_channel_count(const PipelineOptions& o) { return o.stop_beacon_channel ? 3 : 2; }

inline std::vector<std::string> ble_channel_names(const PipelineOptions& o) {
    std::vector<std::string> n{"bus_rssi", "bus_rssi_observed"};
    if (o.stop_beacon_channel) n.push_back("fixed_beacon_rssi");
    return n;
}

struct PointChannels {
    double t = 0.0;
    std::array<double, gps_channel_count> gps{};
    std::array<bool, gps_channel_count> gps_observed{};
    std::optional<double> bus_distance_m;
    std::optional<double> bus_rssi;
    std::optional<double> fixed_rssi;
};

struct Segment {
    std::string user_id;
    int segment_id = 0;
    std::vector<TrackPoint> points;
    std::vector<PointChannels> channels;
};

/// Label-free window content. Everything a model or the clustering rule may see.
struct WindowData {
    std::string user_id;
    int segment_id = 0;
    int window_index = 0;
    double center_time = 0.0;
    std::vector<double> x1, mask1;  // [9 x d1] row-major
    std::vector<double> x2, mask2;  // [9 x d2]
    std::vector<double> features;   // supervised-baseline statistics
    double ble_strength = 0.0;      // mean normalized bus RSSI, 0 where unobserved
};

struct WindowPair {
    WindowData data;
    Label label = Label::none;
};

/// Builds per-point channels for one segment.
inline std::vector<PointChannels> point_channels(const std::vector<TrackPoint>& pts, const std::vector<sim::BleReading>& ble,
                                                 const BusIndex& buses, const PipelineOptions& opt) {
    std::vector<PointChannels> out(pts.size());
    // readings sorted by time; pick the strongest per fix within half a second
    auto strongest = [&](double t, bool bus) {
        std::optional<double> best;
        auto lo = std::lower_bound(ble.begin(), ble.end(), t - 0.5, [](const sim::BleReading& r, double v) { return r.t < v; });
        for (auto it = lo; it != ble.end() && it->t <= t + 0.5; ++it) {
            if (sim::is_bus_beacon(it->beacon_id) != bus) continue;
            if (!best || it->rssi > *best) best = it->rssi;
        }
        return best;
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto& c = out[i];
        c.t = pts[i].t;
        c.gps[ch_speed] = pts[i].speed;
        if (i > 0) {
            c.gps[ch_time_gap] = pts[i].t - pts[i - 1].t;
            c.gps[ch_space_gap] = geo::haversine(pts[i - 1].pos, pts[i].pos);
            c.gps[ch_bearing] = geo::bearing(pts[i - 1].pos, pts[i].pos);
        }
        c.bus_distance_m = bus_distance(pts[i], buses, opt.bus_tolerance_s);
        c.gps[ch_bus_distance] = c.bus_distance_m ? std::log1p(*c.bus_distance_m) : 0.0;
        c.gps_observed.fill(true);
        c.gps_observed[ch_bus_distance] = c.bus_distance_m.has_value();
        c.bus_rssi = strongest(pts[i].t, true);
        if (opt.stop_beacon_channel) c.fixed_rssi = strongest(pts[i].t, false);
    }
    if (pts.size() > 1) {
        out[0].gps[ch_time_gap] = out[1].gps[ch_time_gap];
        out[0].gps[ch_space_gap] = out[1].gps[ch_space_gap];
        out[0].gps[ch_bearing] = out[1].gps[ch_bearing];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Window statistics for the supervised baseline

inline constexpr std::size_t feature_stat_count = 14;
inline constexpr std::array<const char*, feature_stat_count> feature_stat_names{
    "mean",      "max",       "min",        "argmin",      "argmax",          "amplitude",     "beyond_1sd",
    "below_1sd", "above_1sd", "peaks",      "peaks_half",  "peaks_above_1sd", "peak_distance", "slope"};

/// The 14 per-channel statistics of a window. Peaks are strict local maxima.
inline std::array<double, feature_stat_count> window_features(std::span<const double> v) {
    const std::size_t n = v.size();
    require(n >= 3, "window_features: need at least three values");
    std::array<double, feature_stat_count> f{};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    const auto mx = std::max_element(v.begin(), v.end());
    const auto mn = std::min_element(v.begin(), v.end());
    f[0] = mean;
    f[1] = *mx;
    f[2] = *mn;
    f[3] = static_cast<double>(std::distance(v.begin(), mn));
    f[4] = static_cast<double>(std::distance(v.begin(), mx));
    f[5] = *mx - *mn;
    double beyond = 0, below = 0, above = 0;
    for (double x : v) {
        if (x < mean - sd) ++below;
        if (x > mean + sd) ++above;
    }
    beyond = below + above;
    f[6] = beyond;
    f[7] = below;
    f[8] = above;
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (v[i] > v[i - 1] && v[i] > v[i + 1]) peaks.push_back(i);
    f[9] = static_cast<double>(peaks.size());
    double half = 0, peaks_above = 0;
    for (auto p : peaks) {
        if (p >= n / 2) ++half;
        if (v[p] > mean + sd) ++peaks_above;
    }
    f[10] = half;
    f[11] = peaks_above;
    f[12] = peaks.size() >= 2 ? static_cast<double>(peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1) : 0.0;
    // least-squares slope per step
    const double tm = static_cast<double>(n - 1) / 2.0;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(i) - tm;
        num += dt * (v[i] - mean);
        den += dt * dt;
    }
    f[13] = num / den;
    return f;
}

inline std::vector<std::string> feature_names() {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < gps_channel_count; ++c)
        for (auto s : feature_stat_names) out.push_back(std::string(gps_channel_names[c]) + "." + s);
    out.push_back("log_bus_distance.observed_fraction");
    return out;
}

// ---------------------------------------------------------------------------
// Windowing

/// Slides a width-9, stride-1 window over one segment's channels.
inline std::vector<WindowData> windows(const Segment& seg, const PipelineOptions& opt) {
    const std::size_t n = seg.channels.size();
    std::vector<WindowData> out;
    if (n < window_width) return out;
    const std::size_t d1 = gps_channel_count, d2 = ble_channel_count(opt);

    // supervised path: EWMA-imputed GPS channels over the whole segment
    std::array<std::vector<double>, gps_channel_count> imputed;
    for (std::size_t c = 0; c < d1; ++c) {
        std::vector<std::optional<double>> s(n);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i)
            if (seg.channels[i].gps_observed[c]) s[i] = seg.channels[i].gps[c], any = true;
        imputed[c] = any ? impute_ewma(s, opt.ewma_alpha) : std::vector<double>(n, 0.0);
    }

    const double span = opt.rssi_ref_dbm - opt.rssi_floor_dbm;
    for (std::size_t start = 0; start + window_width <= n; ++start) {
        WindowData w;
        w.user_id = seg.user_id;
        w.segment_id = seg.segment_id;
        w.window_index = static_cast<int>(start);
        w.center_time = seg.channels[start + window_width / 2].t;
        w.x1.assign(window_width * d1, 0.0);
        w.mask1.assign(window_width * d1, 0.0);
        w.x2.assign(window_width * d2, 0.0);
        w.mask2.assign(window_width * d2, 0.0);
        double strength = 0.0;
        double observed_dist = 0.0;
        for (std::size_t k = 0; k < window_width; ++k) {
            const auto& pc = seg.channels[start + k];
            for (std::size_t c = 0; c < d1; ++c) {
                if (!pc.gps_observed[c]) continue;
                w.x1[k * d1 + c] = pc.gps[c];
                w.mask1[k * d1 + c] = 1.0;
            }
            if (pc.gps_observed[ch_bus_distance]) observed_dist += 1.0;
            if (pc.bus_rssi) {
                w.x2[k * d2 + 0] = *pc.bus_rssi;
                w.mask2[k * d2 + 0] = 1.0;
                strength += std::clamp((*pc.bus_rssi - opt.rssi_floor_dbm) / span, 0.0, 1.0);
            }
            w.x2[k * d2 + 1] = pc.bus_rssi ? 1.0 : 0.0;
            w.mask2[k * d2 + 1] = 1.0;
            if (opt.stop_beacon_channel && pc.fixed_rssi) {
                w.x2[k * d2 + 2] = *pc.fixed_rssi;
                w.mask2[k * d2 + 2] = 1.0;
            }
        }
        w.ble_strength = strength / static_cast<double>(window_width);
        for (std::size_t c = 0; c < d1; ++c) {
            const auto f = window_features(std::span<const double>(imputed[c]).subspan(start, window_width));
            w.features.insert(w.features.end(), f.begin(), f.end());
        }
        w.features.push_back(observed_dist / static_cast<double>(window_width));
        out.push_back(std::move(w));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standardization

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct Standardizer {
    ChannelStats x1, x2;

    static ChannelStats fit_block(std::span<const WindowData* const> ws, bool first, std::size_t d) {
        std::vector<double> s(d, 0.0), s2(d, 0.0), cnt(d, 0.0);
        for (const auto* w : ws) {
            const auto& x = first ? w->x1 : w->x2;
            const auto& m = first ? w->mask1 : w->mask2;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (m[i] == 0.0) continue;
                const std::size_t c = i % d;
                s[c] += x[i];
                cnt[c] += 1.0;
            }
        }
        ChannelStats st;
        for (std::size_t c = 0; c < d; ++c) st.mean.push_back(cnt[c] > 0 ? s[c] / cnt[c] : 0.0);
        for (const auto* w : ws) {
            const auto& x = first ? w->x1 : w->x2;
            const auto& m = first ? w->mask1 : w->mask2;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (m[i] == 0.0) continue;
                const std::size_t c = i % d;
                s2[c] += (x[i] - st.mean[c]) * (x[i] - st.mean[c]);
            }
        }
        for (std::size_t c = 0; c < d; ++c) {
            const double sd = cnt[c] > 0 ? std::sqrt(s2[c] / cnt[c]) : 0.0;
            st.stddev.push_back(sd > 1e-12 ? sd : 1.0);
        }
        return st;
    }

    /// Statistics over observed entries of the given (training) windows.
    static Standardizer fit(std::span<const WindowData> train, std::size_t d1, std::size_t d2) {
        require(!train.empty(), "Standardizer::fit: no training windows");
        std::vector<const WindowData*> ptrs;
        for (const auto& w : train) ptrs.push_back(&w);
        return {fit_block(ptrs, true, d1), fit_block(ptrs, false, d2)};
    }

    /// Standardizes observed entries; masked entries become 0.
    void apply(WindowData& w) const {
        auto block = [](std::vector<double>& x, const std::vector<double>& m, const ChannelStats& st) {
            const std::size_t d = st.mean.size();
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] = m[i] == 0.0 ? 0.0 : (x[i] - st.mean[i % d]) / st.stddev[i % d];
        };
        block(w.x1, w.mask1, x1);
        block(w.x2, w.mask2, x2);
    }
};

// ---------------------------------------------------------------------------
// End-to-end preparation

struct PreparedData {
    std::vector<Segment> segments;
    std::vector<WindowPair> windows;  // labels set only for labeled users
    std::size_t d1 = gps_channel_count;
    std::size_t d2 = 2;
    std::size_t boundary_windows = 0;  // labeled windows whose span crosses a ride boundary
};

inline bool is_labeled_user(const std::string& user, const PipelineOptions& opt) {
    return !opt.labeled_prefix.empty() && user.rfind(opt.labeled_prefix, 0) == 0;
}

/// Window label by center timestamp: BI iff inside a ride interval.
inline Label label_at(double t, const std::vector<sim::BiboInterval>& ivs) {
    for (const auto& iv : ivs)
        if (t >= iv.start && t < iv.end) return Label::bi;
    return Label::bo;
}

/// Attaches ground-truth labels to windows of labeled users. Returns the
/// number of windows whose 9-step span straddles a boarding/alighting instant.
inline std::size_t label_windows(const sim::ObservationLog& log, std::vector<WindowPair>& ws, const PipelineOptions& opt) {
    std::size_t boundary = 0;
    for (auto& w : ws) {
        if (!is_labeled_user(w.data.user_id, opt)) {
            w.label = Label::none;
            continue;
        }
        auto it = log.labels.find(w.data.user_id);
        static const std::vector<sim::BiboInterval> none;
        const auto& ivs = it == log.labels.end() ? none : it->second;
        w.label = label_at(w.data.center_time, ivs);
        const double half = static_cast<double>(window_width / 2);
        const Label lo = label_at(w.data.center_time - half, ivs);
        const Label hi = label_at(w.data.center_time + half, ivs);
        if (lo != w.label || hi != w.label) ++boundary;
    }
    return boundary;
}

inline PreparedData prepare(const sim::ObservationLog& log, const PipelineOptions& opt) {
    PreparedData out;
    out.d2 = ble_channel_count(opt);
    const BusIndex buses(log);
    std::vector<const sim::DeviceLog*> users;
    for (const auto& d : log.devices)
        if (!d.is_bus) users.push_back(&d);
    std::sort(users.begin(), users.end(), [](auto* a, auto* b) { return a->device_id < b->device_id; });
    for (const auto* dev : users) {
        std::vector<TrackPoint> stream;
        for (const auto& f : dev->gps) stream.push_back({f.t, {f.lat, f.lon}, f.speed});
        std::vector<sim::BleReading> ble = dev->ble;
        std::stable_sort(ble.begin(), ble.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
        int sid = 0;
        for (auto& pts : segment(stream, opt.segmentation)) {
            Segment seg;
            seg.user_id = dev->device_id;
            seg.segment_id = sid++;
            seg.channels = point_channels(pts, ble, buses, opt);
            seg.points = std::move(pts);
            for (auto& w : windows(seg, opt)) out.windows.push_back({std::move(w), Label::none});
            out.segments.push_back(std::move(seg));
        }
    }
    out.boundary_windows = label_windows(log, out.windows, opt);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation splits

struct Fold {
    std::string test_user;
    std::vector<std::size_t> train;  // indices into the labeled window list
    std::vector<std::size_t> test;
};

/// Leave-one-user-out folds over labeled windows.
inline std::vector<Fold> leave_one_out(std::span<const WindowPair> labeled) {
    std::vector<std::string> users;
    for (const auto& w : labeled) {
        require(w.label != Label::none, "leave_one_out: unlabeled window in labeled set");
        if (std::find(users.begin(), users.end(), w.data.user_id) == users.end()) users.push_back(w.data.user_id);
    }
    std::sort(users.begin(), users.end());
    if (users.size() < 2) fail("leave_one_out: needs at least two labeled users, got " + std::to_string(users.size()));
    std::vector<Fold> folds;
    for (const auto& u : users) {
        Fold f;
        f.test_user = u;
        for (std::size_t i = 0; i < labeled.size(); ++i) (labeled[i].data.user_id == u ? f.test : f.train).push_back(i);
        folds.push_back(std::move(f));
    }
    return folds;
}

struct HoldOut {
    std::vector<WindowData> train;                        // unlabeled corpus, labels stripped
    std::vector<WindowPair> test;                         // full labeled corpus
    std::map<std::string, std::vector<std::size_t>> per_user;  // test indices by user
};

/// Train on unlabeled users only, test on every labeled window.
inline HoldOut hold_out(std::span<const WindowPair> all) {
    HoldOut h;
    for (const auto& w : all) {
        if (w.label == Label::none) {
            h.train.push_back(w.data);
        } else {
            h.per_user[w.data.user_id].push_back(h.test.size());
            h.test.push_back(w);
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Windowed dataset file: little-endian binary records + JSON schema sidecar

namespace io {

inline void put_u32(std::ostream& o, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& o, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    o.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ostream& o, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(o, u);
}
inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::io, "dataset: truncated record");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::io, "dataset: truncated record");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
inline double get_f64(std::istream& in) {
    const std::uint64_t u = get_u64(in);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace io

inline constexpr char dataset_magic[8] = {'B', 'I', 'B', 'O', 'W', 'I', 'N', '1'};

/// Record layout (all little-endian): u32 user-id length, user-id bytes,
/// u32 segment_id, u32 window_index, f64 center_time, u32 label (0 BO, 1 BI,
/// 0xFFFFFFFF none), f64 ble_strength, then f64 arrays x1, mask1 (9*d1 each),
/// x2, mask2 (9*d2 each), features (feature_count).
inline void write_dataset(const std::string& bin_path, const std::vector<WindowPair>& ws, std::size_t d1, std::size_t d2,
                          std::size_t feature_count) {
    std::ofstream o(bin_path, std::ios::binary);
    if (!o) fail(ErrorKind::io, "cannot write " + bin_path);
    o.write(dataset_magic, 8);
    io::put_u64(o, ws.size());
    for (const auto& w : ws) {
        const auto& d = w.data;
        require(d.x1.size() == window_width * d1 && d.x2.size() == window_width * d2 && d.features.size() == feature_count,
                "write_dataset: window does not match schema");
        io::put_u32(o, static_cast<std::uint32_t>(d.user_id.size()));
        o.write(d.user_id.data(), static_cast<std::streamsize>(d.user_id.size()));
        io::put_u32(o, static_cast<std::uint32_t>(d.segment_id));
        io::put_u32(o, static_cast<std::uint32_t>(d.window_index));
        io::put_f64(o, d.center_time);
        io::put_u32(o, w.label == Label::none ? 0xFFFFFFFFu : static_cast<std::uint32_t>(w.label));
        io::put_f64(o, d.ble_strength);
        for (const auto* arr : {&d.x1, &d.mask1, &d.x2, &d.mask2, &d.features})
            for (double v : *arr) io::put_f64(o, v);
    }
}

inline std::vector<WindowPair> read_dataset(const std::string& bin_path, std::size_t d1, std::size_t d2, std::size_t feature_count) {
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) fail(ErrorKind::missing_artifact, "missing artifact: " + bin_path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, dataset_magic, 8) != 0) fail(ErrorKind::io, bin_path + ": bad magic");
    const auto count = io::get_u64(in);
    std::vector<WindowPair> ws;
    ws.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) {
        WindowPair w;
        auto& d = w.data;
        d.user_id.resize(io::get_u32(in));
        in.read(d.user_id.data(), static_cast<std::streamsize>(d.user_id.size()));
        d.segment_id = static_cast<int>(io::get_u32(in));
        d.window_index = static_cast<int>(io::get_u32(in));
        d.center_time = io::get_f64(in);
        const auto lab = io::get_u32(in);
        w.label = lab == 0xFFFFFFFFu ? Label::none : static_cast<Label>(lab);
        d.ble_strength = io::get_f64(in);
        auto fill = [&](std::vector<double>& v, std::size_t n) {
            v.resize(n);
            for (auto& x : v) x = io::get_f64(in);
        };
        fill(d.x1, window_width * d1);
        fill(d.mask1, window_width * d1);
        fill(d.x2, window_width * d2);
        fill(d.mask2, window_width * d2);
        fill(d.features, feature_count);
        ws.push_back(std::move(w));
    }
    return ws;
}

inline nlohmann::ordered_json stats_to_json(const ChannelStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

inline ChannelStats stats_from_json(const nlohmann::json& j) {
    return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

} // namespace bibo::pipeline
