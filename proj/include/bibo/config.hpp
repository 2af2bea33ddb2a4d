#pragma once

// Run configuration: one JSON file with scenario, pipeline, model, cluster,
// forest and sweep sections. Absent keys keep their defaults; unknown keys
// are rejected with the offending field path.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bibo/clustering.hpp"
#include "bibo/error.hpp"
#include "bibo/forest.hpp"
#include "bibo/models.hpp"
#include "bibo/noise.hpp"
#include "bibo/pipeline.hpp"
#include "bibo/rng.hpp"
#include "bibo/simulator.hpp"

namespace bibo::config {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct RunConfig {
    std::uint64_t seed = 7;
    sim::GeneratorConfig generator;
    sim::ScenarioConfig scenario;  // physical and sensor parameters; route and itineraries come from the generator
    pipeline::PipelineOptions pipeline;
    std::vector<models::ArchitectureKind> architectures{models::ArchitectureKind::cemwa, models::ArchitectureKind::mwa,
                                                         models::ArchitectureKind::wa};
    models::ArchitectureConfig model;  // shared by every architecture except `kind`
    clustering::ClusterConfig cluster;
    forest::ForestConfig forest;
    noise::SweepConfig sweep;
    std::size_t random_windows = 100000;  // sample size of the random-classifier floor

    /// Seeds of every stochastic stage, derived from the master seed.
    std::uint64_t scenario_seed() const { return derive_seed(seed, {1}); }
    std::uint64_t model_seed(models::ArchitectureKind k) const { return derive_seed(seed, {2, static_cast<std::uint64_t>(k)}); }
    std::uint64_t cluster_seed() const { return derive_seed(seed, {3}); }
    std::uint64_t forest_seed() const { return derive_seed(seed, {4}); }
    std::uint64_t sweep_seed() const { return derive_seed(seed, {5}); }
    std::uint64_t random_seed() const { return derive_seed(seed, {6}); }

    models::ArchitectureConfig architecture(models::ArchitectureKind k) const {
        auto c = model;
        c.kind = k;
        c.seed = model_seed(k);
        return c;
    }
};

namespace detail {

/// Checks that an object holds only known keys.
inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) fail(ErrorKind::config, path + ": expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) fail(ErrorKind::config, "unknown config field '" + path + "." + it.key() + "'");
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config, "config field '" + path + "." + key + "' has the wrong type");
    }
}

inline void read_generator(const json& j, sim::GeneratorConfig& g) {
    const std::string p = "scenario";
    only_keys(j, p, {"origin", "route_width_m", "route_height_m", "stops_per_side", "bus_count", "labeled_users",
                     "unlabeled_users", "trips_min", "trips_max", "hops_max", "walk_min_m", "walk_max_m", "linger_min_s",
                     "linger_max_s", "start_spread_s", "duration_s", "sensors"});
    get(j, "origin", g.origin, p);
    get(j, "route_width_m", g.route_width_m, p);
    get(j, "route_height_m", g.route_height_m, p);
    get(j, "stops_per_side", g.stops_per_side, p);
    get(j, "bus_count", g.bus_count, p);
    get(j, "labeled_users", g.labeled_users, p);
    get(j, "unlabeled_users", g.unlabeled_users, p);
    get(j, "trips_min", g.trips_min, p);
    get(j, "trips_max", g.trips_max, p);
    get(j, "hops_max", g.hops_max, p);
    get(j, "walk_min_m", g.walk_min_m, p);
    get(j, "walk_max_m", g.walk_max_m, p);
    get(j, "linger_min_s", g.linger_min_s, p);
    get(j, "linger_max_s", g.linger_max_s, p);
    get(j, "start_spread_s", g.start_spread_s, p);
    get(j, "duration_s", g.duration_s, p);
    auto bad = [](const std::string& m) { fail(ErrorKind::config, "scenario." + m); };
    if (g.labeled_users < 0 || g.unlabeled_users < 0) bad("labeled_users/unlabeled_users must be >= 0");
    if (g.trips_min < 1 || g.trips_max < g.trips_min) bad("trips_min/trips_max: need 1 <= min <= max");
    if (g.stops_per_side < 1) bad("stops_per_side must be >= 1");
    if (g.hops_max < 1) bad("hops_max must be >= 1");
    if (g.bus_count < 1) bad("bus_count must be >= 1");
    if (!(g.route_width_m > 0 && g.route_height_m > 0)) bad("route size must be positive");
    if (!(g.duration_s > 0)) bad("duration_s must be positive");
}

inline void read_sensors(const json& j, sim::ScenarioConfig& s) {
    const std::string p = "scenario.sensors";
    only_keys(j, p, {"bus_speed_mps", "stop_dwell_s", "walk_speed_mps", "gps_noise_std_m", "bus_gps_noise_std_m",
                     "speed_noise_std_mps", "gps_rate_hz", "gps_miss_prob", "gps_outage_rate_per_h", "gps_outage_min_s",
                     "gps_outage_max_s", "log_while_lingering", "rssi_ref_dbm", "path_loss_exponent",
                     "rssi_noise_std_db", "detection_floor_dbm", "dropout_base_prob"});
    get(j, "bus_speed_mps", s.bus_speed_mps, p);
    get(j, "stop_dwell_s", s.stop_dwell_s, p);
    get(j, "walk_speed_mps", s.walk_speed_mps, p);
    get(j, "gps_noise_std_m", s.gps_noise_std_m, p);
    get(j, "bus_gps_noise_std_m", s.bus_gps_noise_std_m, p);
    get(j, "speed_noise_std_mps", s.speed_noise_std_mps, p);
    get(j, "gps_rate_hz", s.gps_rate_hz, p);
    get(j, "gps_miss_prob", s.gps_miss_prob, p);
    get(j, "gps_outage_rate_per_h", s.gps_outage_rate_per_h, p);
    get(j, "gps_outage_min_s", s.gps_outage_min_s, p);
    get(j, "gps_outage_max_s", s.gps_outage_max_s, p);
    get(j, "log_while_lingering", s.log_while_lingering, p);
    get(j, "rssi_ref_dbm", s.rssi_ref_dbm, p);
    get(j, "path_loss_exponent", s.path_loss_exponent, p);
    get(j, "rssi_noise_std_db", s.rssi_noise_std_db, p);
    get(j, "detection_floor_dbm", s.detection_floor_dbm, p);
    get(j, "dropout_base_prob", s.dropout_base_prob, p);
}

inline void read_pipeline(const json& j, pipeline::PipelineOptions& o) {
    const std::string p = "pipeline";
    only_keys(j, p, {"max_gap_s", "max_speed_mps", "min_segment_points", "bus_tolerance_s", "ewma_alpha",
                     "stop_beacon_channel", "labeled_prefix", "rssi_floor_dbm", "rssi_ref_dbm"});
    get(j, "max_gap_s", o.segmentation.max_gap_s, p);
    get(j, "max_speed_mps", o.segmentation.max_speed_mps, p);
    get(j, "min_segment_points", o.segmentation.min_len, p);
    get(j, "bus_tolerance_s", o.bus_tolerance_s, p);
    get(j, "ewma_alpha", o.ewma_alpha, p);
    get(j, "stop_beacon_channel", o.stop_beacon_channel, p);
    get(j, "labeled_prefix", o.labeled_prefix, p);
    get(j, "rssi_floor_dbm", o.rssi_floor_dbm, p);
    get(j, "rssi_ref_dbm", o.rssi_ref_dbm, p);
    auto bad = [](const std::string& m) { fail(ErrorKind::config, "pipeline." + m); };
    if (!(o.segmentation.max_gap_s > 0)) bad("max_gap_s must be positive");
    if (!(o.segmentation.max_speed_mps > 0)) bad("max_speed_mps must be positive");
    if (o.segmentation.min_len < pipeline::window_width) bad("min_segment_points must be >= 9");
    if (!(o.ewma_alpha > 0 && o.ewma_alpha <= 1)) bad("ewma_alpha must lie in (0,1]");
    if (o.bus_tolerance_s < 0) bad("bus_tolerance_s must be >= 0");
    if (o.labeled_prefix.empty()) bad("labeled_prefix must not be empty");
    if (!(o.rssi_ref_dbm > o.rssi_floor_dbm)) bad("rssi_ref_dbm must exceed rssi_floor_dbm");
}

inline void read_model(const json& j, RunConfig& rc) {
    const std::string p = "model";
    only_keys(j, p, {"architectures", "latent_dim_per_encoder", "encoder_hidden", "decoder_hidden", "kernel_width", "loss",
                     "epochs", "batch_size", "learning_rate", "dropout_rate", "leaky_alpha", "leaky_output",
                     "relu_latent", "rebalance", "pooling"});
    if (j.contains("loss"))
        only_keys(j.at("loss"), "model.loss", {"lambda", "kernel", "prior_std", "prior_sample_count", "rbf_bandwidth_sq", "imq_c"});
    if (j.contains("architectures")) {
        std::vector<std::string> names;
        get(j, "architectures", names, p);
        if (names.empty()) fail(ErrorKind::config, "model.architectures must not be empty");
        rc.architectures.clear();
        for (const auto& n : names) rc.architectures.push_back(models::architecture_from_string(n));
    }
    json rest = j;
    rest.erase("architectures");
    models::update_from_json(rc.model, rest);
}

inline void read_cluster(const json& j, clustering::ClusterConfig& c) {
    const std::string p = "cluster";
    only_keys(j, p, {"eps", "min_pts", "knn_k", "knn_quantiles", "knn_sample", "max_fit_points", "noise_policy",
                     "threshold_rule", "strength_threshold"});
    if (j.contains("eps")) {
        double e = 0;
        get(j, "eps", e, p);
        c.eps = e;
    }
    get(j, "min_pts", c.min_pts, p);
    get(j, "knn_k", c.knn_k, p);
    get(j, "knn_quantiles", c.knn_quantiles, p);
    get(j, "knn_sample", c.knn_sample, p);
    get(j, "max_fit_points", c.max_fit_points, p);
    std::string s;
    if (j.contains("noise_policy")) get(j, "noise_policy", s, p), c.noise_policy = clustering::noise_policy_from_string(s);
    if (j.contains("threshold_rule")) get(j, "threshold_rule", s, p), c.threshold_rule = clustering::threshold_rule_from_string(s);
    get(j, "strength_threshold", c.strength_threshold, p);
}

inline void read_forest(const json& j, forest::ForestConfig& f, const std::string& p) {
    only_keys(j, p, {"tree_count", "max_depth", "min_leaf_size", "features_per_split", "bootstrap", "bins", "max_samples"});
    get(j, "tree_count", f.tree_count, p);
    get(j, "max_depth", f.max_depth, p);
    get(j, "min_leaf_size", f.min_leaf_size, p);
    get(j, "features_per_split", f.features_per_split, p);
    get(j, "bootstrap", f.bootstrap, p);
    get(j, "bins", f.bins, p);
    get(j, "max_samples", f.max_samples, p);
}

inline void read_sweep(const json& j, noise::SweepConfig& s) {
    const std::string p = "sweep";
    only_keys(j, p, {"p_grid", "trials", "forest"});
    get(j, "p_grid", s.p_grid, p);
    get(j, "trials", s.trials, p);
    if (j.contains("forest")) read_forest(j.at("forest"), s.forest, "sweep.forest");
}

inline ordered_json forest_json(const forest::ForestConfig& f) {
    return {{"tree_count", f.tree_count},       {"max_depth", f.max_depth}, {"min_leaf_size", f.min_leaf_size},
            {"features_per_split", f.features_per_split}, {"bootstrap", f.bootstrap}, {"bins", f.bins},
            {"max_samples", f.max_samples}};
}

} // namespace detail

/// Parses a config document over the defaults and validates every section.
inline RunConfig from_json(const json& j) {
    RunConfig rc;
    detail::only_keys(j, "config", {"seed", "scenario", "pipeline", "model", "cluster", "forest", "sweep", "random_windows"});
    detail::get(j, "seed", rc.seed, "config");
    if (j.contains("scenario")) {
        detail::read_generator(j.at("scenario"), rc.generator);
        if (j.at("scenario").contains("sensors")) detail::read_sensors(j.at("scenario").at("sensors"), rc.scenario);
    }
    if (j.contains("pipeline")) detail::read_pipeline(j.at("pipeline"), rc.pipeline);
    if (j.contains("model")) detail::read_model(j.at("model"), rc);
    if (j.contains("cluster")) detail::read_cluster(j.at("cluster"), rc.cluster);
    if (j.contains("forest")) detail::read_forest(j.at("forest"), rc.forest, "forest");
    if (j.contains("sweep")) detail::read_sweep(j.at("sweep"), rc.sweep);
    detail::get(j, "random_windows", rc.random_windows, "config");
    rc.model.validate();
    rc.cluster.validate();
    rc.forest.validate();
    rc.sweep.validate();
    if (rc.random_windows < 1) fail(ErrorKind::config, "config.random_windows must be >= 1");
    return rc;
}

inline RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot read config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::config, path + ": " + e.what());
    }
    return from_json(j);
}

/// Fully resolved config, the input of the provenance hash.
inline ordered_json to_json(const RunConfig& rc) {
    const auto& g = rc.generator;
    const auto& s = rc.scenario;
    const auto& o = rc.pipeline;
    const auto& c = rc.cluster;
    ordered_json arch = ordered_json::array();
    for (auto k : rc.architectures) arch.push_back(models::to_string(k));
    ordered_json model = models::to_json(rc.model);
    model.erase("kind");
    model.erase("seed");
    model.erase("gps_channels");
    model.erase("ble_channels");
    ordered_json j;
    j["seed"] = rc.seed;
    j["scenario"] = {{"origin", {g.origin.lat, g.origin.lon}},
                     {"route_width_m", g.route_width_m},
                     {"route_height_m", g.route_height_m},
                     {"stops_per_side", g.stops_per_side},
                     {"bus_count", g.bus_count},
                     {"labeled_users", g.labeled_users},
                     {"unlabeled_users", g.unlabeled_users},
                     {"trips_min", g.trips_min},
                     {"trips_max", g.trips_max},
                     {"hops_max", g.hops_max},
                     {"walk_min_m", g.walk_min_m},
                     {"walk_max_m", g.walk_max_m},
                     {"linger_min_s", g.linger_min_s},
                     {"linger_max_s", g.linger_max_s},
                     {"start_spread_s", g.start_spread_s},
                     {"duration_s", g.duration_s},
                     {"sensors",
                      {{"bus_speed_mps", s.bus_speed_mps},
                       {"stop_dwell_s", s.stop_dwell_s},
                       {"walk_speed_mps", s.walk_speed_mps},
                       {"gps_noise_std_m", s.gps_noise_std_m},
                       {"bus_gps_noise_std_m", s.bus_gps_noise_std_m},
                       {"speed_noise_std_mps", s.speed_noise_std_mps},
                       {"gps_rate_hz", s.gps_rate_hz},
                       {"gps_miss_prob", s.gps_miss_prob},
                       {"gps_outage_rate_per_h", s.gps_outage_rate_per_h},
                       {"gps_outage_min_s", s.gps_outage_min_s},
                       {"gps_outage_max_s", s.gps_outage_max_s},
                       {"log_while_lingering", s.log_while_lingering},
                       {"rssi_ref_dbm", s.rssi_ref_dbm},
                       {"path_loss_exponent", s.path_loss_exponent},
                       {"rssi_noise_std_db", s.rssi_noise_std_db},
                       {"detection_floor_dbm", s.detection_floor_dbm},
                       {"dropout_base_prob", s.dropout_base_prob}}}};
    j["pipeline"] = {{"max_gap_s", o.segmentation.max_gap_s},
                     {"max_speed_mps", o.segmentation.max_speed_mps},
                     {"min_segment_points", o.segmentation.min_len},
                     {"bus_tolerance_s", o.bus_tolerance_s},
                     {"ewma_alpha", o.ewma_alpha},
                     {"stop_beacon_channel", o.stop_beacon_channel},
                     {"labeled_prefix", o.labeled_prefix},
                     {"rssi_floor_dbm", o.rssi_floor_dbm},
                     {"rssi_ref_dbm", o.rssi_ref_dbm}};
    model["architectures"] = arch;
    j["model"] = model;
    ordered_json cl = {{"min_pts", c.min_pts},
                       {"knn_k", c.knn_k},
                       {"knn_quantiles", c.knn_quantiles},
                       {"knn_sample", c.knn_sample},
                       {"max_fit_points", c.max_fit_points},
                       {"noise_policy", clustering::to_string(c.noise_policy)},
                       {"threshold_rule", clustering::to_string(c.threshold_rule)},
                       {"strength_threshold", c.strength_threshold}};
    if (c.eps) cl["eps"] = *c.eps;
    j["cluster"] = cl;
    j["forest"] = detail::forest_json(rc.forest);
    j["sweep"] = {{"p_grid", rc.sweep.p_grid}, {"trials", rc.sweep.trials}, {"forest", detail::forest_json(rc.sweep.forest)}};
    j["random_windows"] = rc.random_windows;
    return j;
}

/// 16-hex-digit FNV-1a digest of the resolved config.
inline std::string config_hash(const RunConfig& rc) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(rc).dump())));
    return buf;
}

/// Scenario fed to the simulator: generator layout plus sensor parameters.
inline sim::ScenarioConfig scenario(const RunConfig& rc) {
    auto g = rc.generator;
    g.seed = rc.scenario_seed();
    return sim::generate_scenario(g, rc.scenario);
}

} // namespace bibo::config
