#pragma once

// Worked examples for segmentation, EWMA imputation, great-circle geometry
// and smartphone-bus distance. Each case reports pass/fail with a detail line.

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bibo/geo.hpp"
#include "bibo/pipeline.hpp"

namespace pipeline_cases {

using namespace bibo;
using pipeline::TrackPoint;

struct Case {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Points at 1 Hz walking north at 1 m/s from (55.78, 12.52); `gaps` adds extra seconds before given indices.
inline std::vector<TrackPoint> walk(std::size_t n, std::vector<std::pair<std::size_t, double>> gaps = {}) {
    std::vector<TrackPoint> pts;
    double t = 0.0, north = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            double dt = 1.0;
            for (const auto& [at, extra] : gaps)
                if (at == i) dt = extra;
            t += dt;
            north += 1.0;
        }
        pts.push_back({t, {55.78 + geo::rad2deg(north / geo::earth_radius_m), 12.52}, 1.0});
    }
    return pts;
}

inline std::string sizes(const std::vector<std::vector<TrackPoint>>& segs) {
    std::ostringstream o;
    o << segs.size() << " segments [";
    for (std::size_t i = 0; i < segs.size(); ++i) o << (i ? "," : "") << segs[i].size();
    o << "]";
    return o.str();
}

inline Case segments_case(const std::string& name, const std::vector<TrackPoint>& pts, std::vector<std::size_t> expect) {
    const auto segs = pipeline::segment(pts);
    bool ok = segs.size() == expect.size();
    for (std::size_t i = 0; ok && i < segs.size(); ++i) ok = segs[i].size() == expect[i];
    return {name, ok, sizes(segs)};
}

inline Case near_case(const std::string& name, double got, double want, double tol) {
    std::ostringstream o;
    o.precision(12);
    o << "got " << got << ", want " << want << " +- " << tol;
    return {name, std::abs(got - want) <= tol, o.str()};
}

inline Case series_case(const std::string& name, const std::vector<double>& got, const std::vector<double>& want) {
    bool ok = got.size() == want.size();
    std::ostringstream o;
    for (std::size_t i = 0; i < got.size(); ++i) {
        o << (i ? " " : "") << got[i];
        if (ok && got[i] != want[i]) ok = false;
    }
    return {name, ok, o.str()};
}

inline std::vector<Case> all() {
    std::vector<Case> out;

    // segmentation
    out.push_back(segments_case("121 s gap after point 10 splits 20 points into 10+10", walk(20, {{10, 121.0}}), {10, 10}));
    out.push_back(segments_case("119 s gap keeps one segment", walk(20, {{10, 119.0}}), {20}));
    out.push_back(segments_case("exactly 120 s gap keeps one segment", walk(20, {{10, 120.0}}), {20}));
    out.push_back(segments_case("9-point stream is discarded", walk(9), {}));
    out.push_back(segments_case("10-point stream is kept", walk(10), {10}));
    {
        auto pts = walk(20);
        for (std::size_t i = 10; i < pts.size(); ++i) pts[i].pos.lat += geo::rad2deg(49.0 / geo::earth_radius_m);
        out.push_back(segments_case("50 m/s jump splits the stream", pts, {10, 10}));
    }
    {
        auto pts = walk(20);
        for (std::size_t i = 10; i < pts.size(); ++i) pts[i].pos.lat += geo::rad2deg(43.0 / geo::earth_radius_m);
        out.push_back(segments_case("44 m/s step stays below the speed cut", pts, {20}));
    }
    out.push_back(segments_case("short piece between two gaps is dropped", walk(29, {{10, 200.0}, {19, 200.0}}), {10, 10}));
    {
        const auto segs = pipeline::segment(walk(25, {{12, 300.0}}));
        std::vector<std::vector<TrackPoint>> again;
        for (const auto& s : segs)
            for (auto& piece : pipeline::segment(s)) again.push_back(std::move(piece));
        out.push_back({"segmenting valid segments is the identity", sizes(again) == sizes(segs), sizes(again)});
    }

    // EWMA imputation
    using O = std::optional<double>;
    out.push_back(series_case("EWMA of a constant series is the constant",
                              pipeline::impute_ewma(std::vector<O>{4.0, 4.0, std::nullopt, 4.0}, 0.3), {4.0, 4.0, 4.0, 4.0}));
    out.push_back(series_case("EWMA x=[0,1], alpha 0.5 gives [0,0.5]", pipeline::impute_ewma(std::vector<O>{0.0, 1.0}, 0.5), {0.0, 0.5}));
    out.push_back(series_case("EWMA interior gap holds the last average",
                              pipeline::impute_ewma(std::vector<O>{2.0, 4.0, std::nullopt, std::nullopt, 0.0}, 0.5),
                              {2.0, 3.0, 3.0, 3.0, 1.5}));
    out.push_back(series_case("EWMA leading gap takes the first observation",
                              pipeline::impute_ewma(std::vector<O>{std::nullopt, std::nullopt, 6.0, 2.0}, 0.25), {6.0, 6.0, 6.0, 5.0}));
    out.push_back(series_case("EWMA with alpha 1 reproduces the observations",
                              pipeline::impute_ewma(std::vector<O>{1.5, -2.0, std::nullopt, 7.25}, 1.0), {1.5, -2.0, -2.0, 7.25}));
    {
        bool threw = false;
        try {
            pipeline::impute_ewma(std::vector<O>{std::nullopt, std::nullopt}, 0.3);
        } catch (const Error&) {
            threw = true;
        }
        out.push_back({"EWMA of an all-missing series is an error", threw, threw ? "threw" : "no error"});
    }

    // haversine and bearing
    out.push_back(near_case("haversine (0,0)-(0,1) is 111195 m", geo::haversine({0, 0}, {0, 1}), 111195.0, 1.0));
    out.push_back(near_case("haversine of identical points is 0", geo::haversine({55.78, 12.52}, {55.78, 12.52}), 0.0, 0.0));
    out.push_back(near_case("haversine is symmetric", geo::haversine({10, 20}, {-30, 45}), geo::haversine({-30, 45}, {10, 20}), 1e-6));
    out.push_back(near_case("haversine pole to pole is pi R", geo::haversine({90, 0}, {-90, 0}), std::numbers::pi * geo::earth_radius_m, 1e-3));
    out.push_back(near_case("bearing of identical points is 0", geo::bearing({1, 2}, {1, 2}), 0.0, 0.0));
    out.push_back(near_case("due-north bearing is 0", geo::bearing({10, 20}, {11, 20}), 0.0, 1e-9));
    out.push_back(near_case("due-east bearing on the equator is 90", geo::bearing({0, 20}, {0, 21}), 90.0, 1e-9));
    out.push_back(near_case("due-south bearing is 180", geo::bearing({11, 20}, {10, 20}), 180.0, 1e-9));
    out.push_back(near_case("due-west bearing on the equator is 270", geo::bearing({0, 21}, {0, 20}), 270.0, 1e-9));

    // smartphone-bus distance
    const geo::LatLon here{55.78, 12.52};
    auto north_of = [&](double m) { return geo::LatLon{here.lat + geo::rad2deg(m / geo::earth_radius_m), here.lon}; };
    {
        pipeline::BusIndex buses;
        buses.add(100.0, here);
        const auto d = pipeline::bus_distance({100.0, here, 3.0}, buses);
        out.push_back(near_case("rider with zero GPS noise is 0 m from the bus", d.value_or(-1.0), 0.0, 1e-9));
    }
    {
        pipeline::BusIndex buses;
        buses.add(101.5, here);
        buses.add(98.4, here);
        const auto d = pipeline::bus_distance({100.0, here, 3.0}, buses);
        out.push_back({"no bus fix within 1 s is missing", !d.has_value(), d ? "got " + std::to_string(*d) : "missing"});
    }
    {
        pipeline::BusIndex buses;
        buses.add(100.4, north_of(200.0));
        buses.add(99.2, north_of(50.0));
        buses.add(103.0, north_of(5.0));
        const auto d = pipeline::bus_distance({100.0, here, 3.0}, buses);
        out.push_back(near_case("two buses at 50 m and 200 m give 50 m", d.value_or(-1.0), 50.0, 1e-6));
    }
    {
        pipeline::BusIndex buses;
        buses.add(101.0, north_of(30.0));
        const auto d = pipeline::bus_distance({100.0, here, 3.0}, buses);
        out.push_back(near_case("a fix exactly 1 s away still counts", d.value_or(-1.0), 30.0, 1e-6));
    }
    return out;
}

} // namespace pipeline_cases
