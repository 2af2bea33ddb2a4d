#pragma once

// Seeded synthetic transit world: buses looping a route, passengers walking,
// waiting, riding, and phones logging noisy GPS fixes and BLE RSSI readings.
// Ground-truth ride intervals are emitted for evaluation only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bibo/error.hpp"
#include "bibo/geo.hpp"
#include "bibo/rng.hpp"

namespace bibo::geo {

inline void to_json(nlohmann::json& j, const LatLon& p) { j = nlohmann::json::array({p.lat, p.lon}); }
inline void from_json(const nlohmann::json& j, LatLon& p) {
    if (!j.is_array() || j.size() != 2) fail(ErrorKind::config, "coordinate must be a [lat, lon] pair");
    p.lat = j[0].get<double>();
    p.lon = j[1].get<double>();
}

} // namespace bibo::geo

namespace bibo::sim {

using geo::LatLon;

struct Trip {
    std::size_t board_stop = 0;   // index into ScenarioConfig::stop_indices
    std::size_t alight_stop = 0;
    LatLon destination;
    double linger_s = 0.0;        // time spent at the destination before the next trip
};

struct Itinerary {
    std::string passenger_id;
    double start_time = 0.0;
    LatLon origin;
    std::vector<Trip> trips;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::vector<LatLon> route;              // closed loop, last vertex connects to the first
    std::vector<std::size_t> stop_indices;  // route vertices that are stops
    int bus_count = 3;
    double bus_speed_mps = 3.5;
    double stop_dwell_s = 25.0;
    std::vector<Itinerary> itineraries;
    double walk_speed_mps = 1.4;
    double gps_noise_std_m = 6.0;
    double bus_gps_noise_std_m = 3.0;
    double speed_noise_std_mps = 0.4;
    double gps_rate_hz = 1.0;
    double gps_miss_prob = 0.02;
    double gps_outage_rate_per_h = 4.0;  // phone GPS outages while active, Poisson process
    double gps_outage_min_s = 150.0;
    double gps_outage_max_s = 300.0;
    bool log_while_lingering = false;
    double rssi_ref_dbm = -59.0;
    double path_loss_exponent = 2.5;
    double rssi_noise_std_db = 4.0;
    double detection_floor_dbm = -100.0;
    double dropout_base_prob = 0.2;
    std::vector<LatLon> building_beacons;
    std::vector<LatLon> geofence;  // empty = unbounded
    double duration_s = 3600.0;

    void validate() const;
};

struct GpsFix {
    double t = 0.0;
    double lat = 0.0;
    double lon = 0.0;
    double speed = 0.0;
};

struct BleReading {
    double t = 0.0;
    std::string beacon_id;
    double rssi = 0.0;
};

struct DeviceLog {
    std::string device_id;
    bool is_bus = false;
    std::vector<GpsFix> gps;
    std::vector<BleReading> ble;
};

struct BiboInterval {
    double start = 0.0;
    double end = 0.0;
    std::string bus_id;
};

struct ObservationLog {
    std::vector<DeviceLog> devices;  // buses first, then passengers in itinerary order
    std::map<std::string, std::vector<BiboInterval>> labels;

    const DeviceLog* find(const std::string& id) const {
        for (const auto& d : devices)
            if (d.device_id == id) return &d;
        return nullptr;
    }
};

inline std::string bus_id(int b) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "bus-%02d", b);
    return buf;
}

inline bool is_bus_beacon(const std::string& beacon_id) { return beacon_id.rfind("bus-", 0) == 0; }

/// Mean received power at distance d under log-distance path loss.
inline double mean_rssi(double distance_m, double ref_dbm, double exponent) {
    return ref_dbm - 10.0 * exponent * std::log10(std::max(distance_m, 1.0));
}

/// Probability a reading at distance d is lost.
inline double ble_dropout(double distance_m, double base_prob) {
    return std::min(0.9, base_prob + distance_m / 100.0 * 0.3);
}

/// Range beyond which a beacon is never heard: mean RSSI + 3 noise std falls below the floor.
inline double detection_range_m(const ScenarioConfig& c) {
    return std::pow(10.0, (c.rssi_ref_dbm + 3.0 * c.rssi_noise_std_db - c.detection_floor_dbm) /
                              (10.0 * c.path_loss_exponent));
}

inline bool inside_polygon(const std::vector<LatLon>& poly, LatLon p) {
    if (poly.size() < 3) return true;
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.lat > p.lat) != (b.lat > p.lat) &&
            p.lon < (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon)
            in = !in;
    }
    return in;
}

inline void ScenarioConfig::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::config, "scenario: " + m); };
    if (route.size() < 2) bad("route needs at least two vertices");
    if (stop_indices.size() < 2) bad("route needs at least two stops");
    for (auto s : stop_indices)
        if (s >= route.size()) bad("stop index " + std::to_string(s) + " outside route");
    if (bus_count < 1) bad("bus_count must be >= 1");
    if (!(bus_speed_mps > 0.0)) bad("bus_speed_mps must be positive");
    if (stop_dwell_s < 0.0) bad("stop_dwell_s must be non-negative");
    if (!(gps_rate_hz > 0.0 && gps_rate_hz <= 1.0)) bad("gps_rate_hz must lie in (0, 1]");
    const double period = 1.0 / gps_rate_hz;
    if (std::abs(period - std::round(period)) > 1e-9) bad("1/gps_rate_hz must be a whole number of seconds");
    if (gps_noise_std_m < 0.0 || bus_gps_noise_std_m < 0.0 || rssi_noise_std_db < 0.0) bad("noise std must be >= 0");
    if (!(path_loss_exponent > 0.0)) bad("path_loss_exponent must be positive");
    if (dropout_base_prob < 0.0 || dropout_base_prob >= 1.0) bad("dropout_base_prob must lie in [0,1)");
    if (!(duration_s > 0.0)) bad("duration_s must be positive");
    if (gps_outage_rate_per_h < 0.0) bad("gps_outage_rate_per_h must be non-negative");
    if (!(gps_outage_min_s > 0.0 && gps_outage_max_s >= gps_outage_min_s)) bad("gps outage durations must satisfy 0 < min <= max");
    for (const auto& it : itineraries) {
        auto bad_pax = [&](const std::string& m) {
            fail(ErrorKind::config, "scenario: passenger '" + it.passenger_id + "': " + m);
        };
        if (it.passenger_id.empty()) fail(ErrorKind::config, "scenario: passenger with empty id");
        if (it.passenger_id.rfind("bus-", 0) == 0) bad_pax("passenger ids may not start with 'bus-'");
        for (const auto& tr : it.trips) {
            if (tr.board_stop >= stop_indices.size() || tr.alight_stop >= stop_indices.size())
                bad_pax("trip references a stop that does not exist");
            if (tr.board_stop == tr.alight_stop) bad_pax("trip boards and alights at the same stop");
            if (tr.linger_s < 0.0) bad_pax("negative linger time");
        }
    }
}

namespace detail {

struct Point {
    double x = 0.0, y = 0.0;  // east, north in meters
};

inline double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Closed polyline with arc-length parametrisation.
struct Loop {
    std::vector<Point> pts;
    std::vector<double> cum;  // cum[i] = arc length at vertex i; cum.back() = total
    double total = 0.0;

    explicit Loop(std::vector<Point> p) : pts(std::move(p)) {
        cum.push_back(0.0);
        for (std::size_t i = 0; i < pts.size(); ++i) cum.push_back(cum.back() + dist(pts[i], pts[(i + 1) % pts.size()]));
        total = cum.back();
    }

    Point at(double s) const {
        s = std::fmod(s, total);
        if (s < 0) s += total;
        auto it = std::upper_bound(cum.begin(), cum.end(), s);
        std::size_t i = static_cast<std::size_t>(std::distance(cum.begin(), it)) - 1;
        if (i >= pts.size()) i = pts.size() - 1;
        const double seg = cum[i + 1] - cum[i];
        const double f = seg > 0 ? (s - cum[i]) / seg : 0.0;
        const Point a = pts[i], b = pts[(i + 1) % pts.size()];
        return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
    }
};

struct BusTrack {
    std::vector<Point> pos;          // per second
    std::vector<double> speed;       // per second
    std::vector<int> dwelling_stop;  // stop index dwelling at, -1 when moving
};

inline std::vector<BusTrack> simulate_buses(const ScenarioConfig& c, const Loop& loop, std::size_t steps) {
    std::vector<double> stop_arc;
    for (auto vi : c.stop_indices) stop_arc.push_back(loop.cum[vi]);
    std::vector<BusTrack> tracks(static_cast<std::size_t>(c.bus_count));
    const auto dwell_steps = static_cast<long>(std::llround(c.stop_dwell_s));
    for (int b = 0; b < c.bus_count; ++b) {
        auto& tr = tracks[static_cast<std::size_t>(b)];
        tr.pos.resize(steps);
        tr.speed.resize(steps);
        tr.dwelling_stop.assign(steps, -1);
        double s = loop.total * b / c.bus_count;  // absolute arc, unwrapped
        long dwell_left = 0;
        int at_stop = -1;
        for (std::size_t t = 0; t < steps; ++t) {
            tr.pos[t] = loop.at(s);
            tr.speed[t] = (dwell_left > 0 || at_stop >= 0) ? 0.0 : c.bus_speed_mps;
            tr.dwelling_stop[t] = at_stop;
            if (dwell_left > 0) {
                if (--dwell_left == 0) at_stop = -1;
                continue;
            }
            // distance to the next stop strictly ahead
            const double here = std::fmod(s, loop.total);
            double best = loop.total + 1.0;
            int next = -1;
            for (std::size_t k = 0; k < stop_arc.size(); ++k) {
                double ahead = stop_arc[k] - here;
                if (ahead <= 1e-9) ahead += loop.total;
                if (ahead < best) best = ahead, next = static_cast<int>(k);
            }
            if (best <= c.bus_speed_mps) {
                s += best;
                at_stop = next;
                dwell_left = dwell_steps;
                if (dwell_left == 0) at_stop = -1;
            } else {
                s += c.bus_speed_mps;
            }
        }
        // speed at a dwell second is zero; the arrival second reports the stop
        for (std::size_t t = 0; t < steps; ++t)
            if (tr.dwelling_stop[t] >= 0) tr.speed[t] = 0.0;
    }
    return tracks;
}

enum class Phase { idle, walk, wait, ride, linger };

struct PassengerTrack {
    std::vector<Point> pos;
    std::vector<double> speed;
    std::vector<Phase> phase;
    std::vector<BiboInterval> intervals;
};

inline PassengerTrack simulate_passenger(const ScenarioConfig& c, const Itinerary& it, const geo::LocalFrame& frame,
                                         const std::vector<BusTrack>& buses, const std::vector<Point>& stops,
                                         std::size_t steps) {
    PassengerTrack tr;
    tr.pos.assign(steps, Point{});
    tr.speed.assign(steps, 0.0);
    tr.phase.assign(steps, Phase::idle);

    auto local = [&](LatLon p) {
        Point q;
        frame.to_local(p, q.x, q.y);
        return q;
    };

    std::size_t t = static_cast<std::size_t>(std::max(0.0, std::ceil(it.start_time)));
    Point here = local(it.origin);

    auto walk_to = [&](Point target) {
        const double d = dist(here, target);
        const double dur = d / c.walk_speed_mps;
        const auto n = static_cast<std::size_t>(std::ceil(dur));
        for (std::size_t k = 0; k < n && t < steps; ++k, ++t) {
            const double f = dur > 0 ? std::min(1.0, static_cast<double>(k) / dur) : 1.0;
            tr.pos[t] = {here.x + f * (target.x - here.x), here.y + f * (target.y - here.y)};
            tr.speed[t] = c.walk_speed_mps;
            tr.phase[t] = Phase::walk;
        }
        here = target;
    };

    for (const auto& trip : it.trips) {
        if (t >= steps) break;
        const Point stop = stops[trip.board_stop];
        walk_to(stop);
        // wait for a bus dwelling at the boarding stop
        int bus = -1;
        while (t < steps) {
            for (std::size_t b = 0; b < buses.size() && bus < 0; ++b)
                if (buses[b].dwelling_stop[t] == static_cast<int>(trip.board_stop)) bus = static_cast<int>(b);
            if (bus >= 0) break;
            tr.pos[t] = here;
            tr.phase[t] = Phase::wait;
            ++t;
        }
        if (bus < 0) break;
        const auto& bt = buses[static_cast<std::size_t>(bus)];
        const std::size_t board_t = t;
        // ride until the bus reaches the alighting stop (after leaving the boarding stop)
        bool left_board = false;
        while (t < steps) {
            const int ds = bt.dwelling_stop[t];
            if (ds != static_cast<int>(trip.board_stop)) left_board = true;
            if (left_board && ds == static_cast<int>(trip.alight_stop)) break;
            tr.pos[t] = bt.pos[t];
            tr.speed[t] = bt.speed[t];
            tr.phase[t] = Phase::ride;
            ++t;
        }
        tr.intervals.push_back({static_cast<double>(board_t), static_cast<double>(t), bus_id(bus)});
        if (t >= steps) break;
        here = bt.pos[t];
        walk_to(local(trip.destination));
        const auto linger = static_cast<std::size_t>(std::llround(trip.linger_s));
        for (std::size_t k = 0; k < linger && t < steps; ++k, ++t) {
            tr.pos[t] = here;
            tr.phase[t] = Phase::linger;
        }
    }
    return tr;
}

} // namespace detail

/// Runs the scenario. Fully determined by the config (including its seed).
inline ObservationLog simulate(const ScenarioConfig& c) {
    c.validate();
    const geo::LocalFrame frame{c.route.front()};
    std::vector<detail::Point> verts;
    for (auto p : c.route) {
        detail::Point q;
        frame.to_local(p, q.x, q.y);
        verts.push_back(q);
    }
    const detail::Loop loop(verts);
    std::vector<detail::Point> stops;
    for (auto vi : c.stop_indices) stops.push_back(verts[vi]);
    std::vector<detail::Point> fixed_beacons = stops;
    std::vector<std::string> fixed_ids;
    for (std::size_t k = 0; k < stops.size(); ++k) fixed_ids.push_back("stop-" + std::to_string(k));
    for (std::size_t k = 0; k < c.building_beacons.size(); ++k) {
        detail::Point q;
        frame.to_local(c.building_beacons[k], q.x, q.y);
        fixed_beacons.push_back(q);
        fixed_ids.push_back("bldg-" + std::to_string(k));
    }

    const auto steps = static_cast<std::size_t>(std::floor(c.duration_s)) + 1;
    const auto period = static_cast<std::size_t>(std::llround(1.0 / c.gps_rate_hz));
    const auto buses = detail::simulate_buses(c, loop, steps);
    const double range = detection_range_m(c);

    Rng rng(derive_seed(c.seed, {0x5157}));
    std::normal_distribution<double> std_normal(0.0, 1.0);

    ObservationLog log;
    auto emit_fix = [&](DeviceLog& dev, std::size_t t, detail::Point p, double speed, double noise_m) {
        const double ex = noise_m * std_normal(rng);
        const double ny = noise_m * std_normal(rng);
        const double sp = std::abs(speed + c.speed_noise_std_mps * std_normal(rng));
        const LatLon ll = frame.to_latlon(p.x + ex, p.y + ny);
        dev.gps.push_back({static_cast<double>(t), ll.lat, ll.lon, sp});
    };

    for (int b = 0; b < c.bus_count; ++b) {
        DeviceLog dev{bus_id(b), true, {}, {}};
        const auto& tr = buses[static_cast<std::size_t>(b)];
        for (std::size_t t = 0; t < steps; t += period) {
            if (!inside_polygon(c.geofence, frame.to_latlon(tr.pos[t].x, tr.pos[t].y))) continue;
            emit_fix(dev, t, tr.pos[t], tr.speed[t], c.bus_gps_noise_std_m);
        }
        log.devices.push_back(std::move(dev));
    }

    for (const auto& it : c.itineraries) {
        const auto tr = detail::simulate_passenger(c, it, frame, buses, stops, steps);
        DeviceLog dev{it.passenger_id, false, {}, {}};
        Rng outage_rng(derive_seed(c.seed, {0x0a7a6e, fnv1a(it.passenger_id)}));
        double outage_until = -1.0;
        for (std::size_t t = 0; t < steps; ++t) {
            const auto ph = tr.phase[t];
            if (ph == detail::Phase::idle) continue;
            if (ph == detail::Phase::linger && !c.log_while_lingering) continue;
            if (!inside_polygon(c.geofence, frame.to_latlon(tr.pos[t].x, tr.pos[t].y))) continue;
            const double tt = static_cast<double>(t);
            if (tt >= outage_until && uniform01(outage_rng) < c.gps_outage_rate_per_h / 3600.0)
                outage_until = tt + c.gps_outage_min_s + (c.gps_outage_max_s - c.gps_outage_min_s) * uniform01(outage_rng);
            const bool outage = tt < outage_until;
            if (!outage && t % period == 0 && uniform01(rng) >= c.gps_miss_prob)
                emit_fix(dev, t, tr.pos[t], tr.speed[t], c.gps_noise_std_m);

            auto hear = [&](const std::string& id, detail::Point beacon) {
                const double d = detail::dist(tr.pos[t], beacon);
                if (d > range) return;
                const double rssi = mean_rssi(d, c.rssi_ref_dbm, c.path_loss_exponent) + c.rssi_noise_std_db * std_normal(rng);
                const bool lost = uniform01(rng) < ble_dropout(d, c.dropout_base_prob);
                if (rssi < c.detection_floor_dbm || lost) return;
                dev.ble.push_back({static_cast<double>(t), id, rssi});
            };
            for (int b = 0; b < c.bus_count; ++b) hear(bus_id(b), buses[static_cast<std::size_t>(b)].pos[t]);
            for (std::size_t k = 0; k < fixed_beacons.size(); ++k) hear(fixed_ids[k], fixed_beacons[k]);
        }
        log.labels[it.passenger_id] = tr.intervals;
        log.devices.push_back(std::move(dev));
    }
    return log;
}

// ---------------------------------------------------------------------------
// Scenario generation

/// Knobs for generating a randomized campus-like scenario.
struct GeneratorConfig {
    std::uint64_t seed = 7;
    LatLon origin{55.7858, 12.5217};
    double route_width_m = 900.0;
    double route_height_m = 600.0;
    int stops_per_side = 3;
    int bus_count = 3;
    int labeled_users = 24;
    int unlabeled_users = 32;
    int trips_min = 1;
    int trips_max = 2;
    int hops_max = 2;
    double walk_min_m = 100.0;
    double walk_max_m = 350.0;
    double linger_min_s = 300.0;
    double linger_max_s = 900.0;
    double start_spread_s = 1800.0;
    double duration_s = 4.0 * 3600.0;
};

inline ScenarioConfig generate_scenario(const GeneratorConfig& g, ScenarioConfig base = {}) {
    require(g.labeled_users >= 0 && g.unlabeled_users >= 0, "generator: negative user count");
    require(g.trips_min >= 1 && g.trips_max >= g.trips_min, "generator: invalid trip range");
    require(g.stops_per_side >= 1, "generator: stops_per_side must be >= 1");
    require(g.hops_max >= 1, "generator: hops_max must be >= 1");
    const geo::LocalFrame frame{g.origin};
    ScenarioConfig c = std::move(base);
    c.seed = g.seed;
    c.bus_count = g.bus_count;
    c.duration_s = g.duration_s;
    c.route.clear();
    c.stop_indices.clear();
    c.itineraries.clear();

    // rectangle loop, counter-clockwise, subdivided so stops land on vertices
    const double W = g.route_width_m, H = g.route_height_m;
    const int n = g.stops_per_side;
    std::vector<std::pair<double, double>> corners{{0, 0}, {W, 0}, {W, H}, {0, H}};
    for (int side = 0; side < 4; ++side) {
        const auto [x0, y0] = corners[static_cast<std::size_t>(side)];
        const auto [x1, y1] = corners[static_cast<std::size_t>((side + 1) % 4)];
        for (int k = 0; k < 2 * n; ++k) {
            const double f = static_cast<double>(k) / (2 * n);
            c.route.push_back(frame.to_latlon(x0 + f * (x1 - x0), y0 + f * (y1 - y0)));
            if (k % 2 == 1) c.stop_indices.push_back(c.route.size() - 1);
        }
    }
    const double margin = g.walk_max_m + 200.0;
    c.geofence = {frame.to_latlon(-margin, -margin), frame.to_latlon(W + margin, -margin),
                  frame.to_latlon(W + margin, H + margin), frame.to_latlon(-margin, H + margin)};

    Rng rng(derive_seed(g.seed, {0x6e6e}));
    const std::size_t nstops = c.stop_indices.size();
    auto near_stop = [&](std::size_t stop) {
        geo::LocalFrame f{c.route[c.stop_indices[stop]]};
        const double ang = 2.0 * std::numbers::pi * uniform01(rng);
        const double r = g.walk_min_m + (g.walk_max_m - g.walk_min_m) * uniform01(rng);
        return f.to_latlon(r * std::cos(ang), r * std::sin(ang));
    };
    auto make = [&](const std::string& id) {
        Itinerary it;
        it.passenger_id = id;
        it.start_time = std::floor(g.start_spread_s * uniform01(rng));
        const int trips = g.trips_min + static_cast<int>(rng() % static_cast<std::uint64_t>(g.trips_max - g.trips_min + 1));
        std::size_t at = rng() % nstops;
        it.origin = near_stop(at);
        for (int k = 0; k < trips; ++k) {
            Trip tr;
            tr.board_stop = at;
            const std::size_t hop = 1 + rng() % std::min<std::size_t>(nstops - 1, static_cast<std::size_t>(g.hops_max));
            tr.alight_stop = (at + hop) % nstops;
            tr.destination = near_stop(tr.alight_stop);
            tr.linger_s = std::floor(g.linger_min_s + (g.linger_max_s - g.linger_min_s) * uniform01(rng));
            it.trips.push_back(tr);
            at = tr.alight_stop;
        }
        return it;
    };
    char buf[32];
    for (int u = 0; u < g.labeled_users; ++u) {
        std::snprintf(buf, sizeof buf, "L%03d", u);
        c.itineraries.push_back(make(buf));
    }
    for (int u = 0; u < g.unlabeled_users; ++u) {
        std::snprintf(buf, sizeof buf, "U%03d", u);
        c.itineraries.push_back(make(buf));
    }
    return c;
}

// ---------------------------------------------------------------------------
// JSON (config) and CSV/JSON (log) persistence


inline void to_json(nlohmann::json& j, const Trip& t) {
    j = {{"board_stop", t.board_stop}, {"alight_stop", t.alight_stop}, {"destination", t.destination}, {"linger_s", t.linger_s}};
}
inline void from_json(const nlohmann::json& j, Trip& t) {
    t.board_stop = j.at("board_stop").get<std::size_t>();
    t.alight_stop = j.at("alight_stop").get<std::size_t>();
    t.destination = j.at("destination").get<LatLon>();
    t.linger_s = j.value("linger_s", 0.0);
}

inline void to_json(nlohmann::json& j, const Itinerary& it) {
    j = {{"passenger_id", it.passenger_id}, {"start_time", it.start_time}, {"origin", it.origin}, {"trips", it.trips}};
}
inline void from_json(const nlohmann::json& j, Itinerary& it) {
    it.passenger_id = j.at("passenger_id").get<std::string>();
    it.start_time = j.value("start_time", 0.0);
    it.origin = j.at("origin").get<LatLon>();
    it.trips = j.at("trips").get<std::vector<Trip>>();
}

inline std::string format_double(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// Decimal places kept by the CSV log.
namespace log_digits {
inline constexpr int time = 3;
inline constexpr int degrees = 8;
inline constexpr int speed = 3;
inline constexpr int rssi = 2;
} // namespace log_digits

/// The log rounded exactly as write_log/read_log would round it, so in-memory
/// runs see the same numbers as runs that go through the CSV files.
inline ObservationLog recorded(ObservationLog log) {
    auto q = [](double v, int digits) { return std::stod(format_double(v, digits)); };
    for (auto& d : log.devices) {
        for (auto& f : d.gps)
            f = {q(f.t, log_digits::time), q(f.lat, log_digits::degrees), q(f.lon, log_digits::degrees),
                 q(f.speed, log_digits::speed)};
        for (auto& r : d.ble) {
            r.t = q(r.t, log_digits::time);
            r.rssi = q(r.rssi, log_digits::rssi);
        }
    }
    return log;
}

inline void write_log(const ObservationLog& log, const std::string& dir) {
    std::ofstream gps(dir + "/gps.csv"), ble(dir + "/ble.csv"), lab(dir + "/labels.json");
    if (!gps || !ble || !lab) fail(ErrorKind::io, "cannot write observation log into " + dir);
    gps << "device_id,timestamp,lat,lon,speed\n";
    ble << "device_id,timestamp,beacon_id,rssi\n";
    for (const auto& d : log.devices) {
        for (const auto& f : d.gps)
            gps << d.device_id << ',' << format_double(f.t, log_digits::time) << ','
                << format_double(f.lat, log_digits::degrees) << ',' << format_double(f.lon, log_digits::degrees) << ','
                << format_double(f.speed, log_digits::speed) << '\n';
        for (const auto& r : d.ble)
            ble << d.device_id << ',' << format_double(r.t, log_digits::time) << ',' << r.beacon_id << ','
                << format_double(r.rssi, log_digits::rssi) << '\n';
    }
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [pax, ivs] : log.labels) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& iv : ivs) arr.push_back({{"start", iv.start}, {"end", iv.end}, {"bus_id", iv.bus_id}});
        j[pax] = arr;
    }
    lab << j.dump(2) << '\n';
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

inline DeviceLog& device_slot(ObservationLog& log, std::map<std::string, std::size_t>& index, const std::string& id) {
    auto it = index.find(id);
    if (it != index.end()) return log.devices[it->second];
    index[id] = log.devices.size();
    log.devices.push_back(DeviceLog{id, id.rfind("bus-", 0) == 0, {}, {}});
    return log.devices.back();
}

} // namespace detail

inline ObservationLog read_log(const std::string& dir) {
    ObservationLog log;
    std::map<std::string, std::size_t> index;
    auto open = [&](const std::string& name) {
        std::ifstream in(dir + "/" + name);
        if (!in) fail(ErrorKind::missing_artifact, "missing artifact: " + dir + "/" + name);
        return in;
    };
    {
        auto in = open("gps.csv");
        std::string line;
        std::getline(in, line);
        if (line != "device_id,timestamp,lat,lon,speed") fail(ErrorKind::io, "gps.csv: unexpected header '" + line + "'");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = detail::split_csv(line);
            if (f.size() != 5) fail(ErrorKind::io, "gps.csv: malformed row '" + line + "'");
            detail::device_slot(log, index, f[0]).gps.push_back({std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
        }
    }
    {
        auto in = open("ble.csv");
        std::string line;
        std::getline(in, line);
        if (line != "device_id,timestamp,beacon_id,rssi") fail(ErrorKind::io, "ble.csv: unexpected header '" + line + "'");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = detail::split_csv(line);
            if (f.size() != 4) fail(ErrorKind::io, "ble.csv: malformed row '" + line + "'");
            detail::device_slot(log, index, f[0]).ble.push_back({std::stod(f[1]), f[2], std::stod(f[3])});
        }
    }
    {
        auto in = open("labels.json");
        const auto j = nlohmann::json::parse(in);
        for (auto it = j.begin(); it != j.end(); ++it) {
            auto& ivs = log.labels[it.key()];
            for (const auto& iv : it.value())
                ivs.push_back({iv.at("start").get<double>(), iv.at("end").get<double>(), iv.at("bus_id").get<std::string>()});
            detail::device_slot(log, index, it.key());
        }
    }
    return log;
}

} // namespace bibo::sim
