// bibo: simulate -> prepare -> train -> cluster -> evaluate -> noise-sweep -> report
//
// Every stage writes into <out>/<stage>/ together with a manifest.json that
// records the config hash; downstream stages refuse missing or stale inputs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bibo/clustering.hpp"
#include "bibo/config.hpp"
#include "bibo/error.hpp"
#include "bibo/experiment.hpp"
#include "bibo/metrics.hpp"
#include "bibo/models.hpp"
#include "bibo/noise.hpp"
#include "bibo/pipeline.hpp"
#include "bibo/simulator.hpp"

namespace fs = std::filesystem;
using namespace bibo;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> stage_order{"simulate", "prepare", "train", "cluster", "evaluate", "noise-sweep", "report"};

struct Context {
    config::RunConfig rc;
    std::string hash;
    fs::path out;

    fs::path dir(const std::string& stage) const { return out / stage; }
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream o(p, std::ios::binary);
    if (!o) fail(ErrorKind::io, "cannot write " + p.string());
    o << text;
}

void write_json(const fs::path& p, const ordered_json& j) { write_text(p, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) fail(ErrorKind::missing_artifact, "missing artifact: " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, p.string() + ": " + e.what());
    }
}

fs::path begin_stage(const Context& c, const std::string& stage) {
    const auto d = c.dir(stage);
    fs::create_directories(d);
    return d;
}

void finish_stage(const Context& c, const std::string& stage, const std::vector<std::string>& outputs) {
    ordered_json m = {{"stage", stage}, {"config_hash", c.hash}, {"seed", c.rc.seed}, {"outputs", outputs}};
    write_json(c.dir(stage) / "manifest.json", m);
}

/// Resolves an upstream artifact through that stage's manifest.
fs::path input(const Context& c, const std::string& stage, const std::string& name) {
    const auto manifest = c.dir(stage) / "manifest.json";
    const auto m = read_json(manifest);
    if (m.at("config_hash").get<std::string>() != c.hash)
        fail(ErrorKind::config, "stale artifact " + manifest.string() + ": produced with config " +
                                    m.at("config_hash").get<std::string>() + ", current config is " + c.hash +
                                    " (rerun stage '" + stage + "')");
    const auto outs = m.at("outputs").get<std::vector<std::string>>();
    if (std::find(outs.begin(), outs.end(), name) == outs.end())
        fail(ErrorKind::missing_artifact, "missing artifact: " + (c.dir(stage) / name).string());
    const auto p = c.dir(stage) / name;
    if (!fs::exists(p)) fail(ErrorKind::missing_artifact, "missing artifact: " + p.string());
    return p;
}

// ---------------------------------------------------------------------------

void stage_simulate(const Context& c) {
    const auto d = begin_stage(c, "simulate");
    const auto scenario = config::scenario(c.rc);
    const auto log = sim::simulate(scenario);
    sim::write_log(log, d.string());
    nlohmann::json s = {{"config_hash", c.hash},
                        {"seed", scenario.seed},
                        {"route", scenario.route},
                        {"stop_indices", scenario.stop_indices},
                        {"building_beacons", scenario.building_beacons},
                        {"itineraries", scenario.itineraries}};
    write_text(d / "scenario.json", s.dump(2) + "\n");
    finish_stage(c, "simulate", {"scenario.json", "gps.csv", "ble.csv", "labels.json"});
}

struct Schema {
    std::size_t d1 = 0, d2 = 0, features = 0;
};

Schema read_schema(const Context& c) {
    const auto j = read_json(input(c, "prepare", "windows.json"));
    return {j.at("d1").get<std::size_t>(), j.at("d2").get<std::size_t>(), j.at("feature_names").size()};
}

std::vector<pipeline::WindowPair> read_windows(const Context& c) {
    const auto s = read_schema(c);
    return pipeline::read_dataset(input(c, "prepare", "windows.bin").string(), s.d1, s.d2, s.features);
}

void stage_prepare(const Context& c) {
    input(c, "simulate", "gps.csv");
    input(c, "simulate", "ble.csv");
    input(c, "simulate", "labels.json");
    const auto log = sim::read_log(c.dir("simulate").string());
    const auto ds = experiment::build_dataset(log, c.rc.pipeline);
    const auto d = begin_stage(c, "prepare");
    const auto names = pipeline::feature_names();
    pipeline::write_dataset((d / "windows.bin").string(), ds.windows, ds.d1, ds.d2, names.size());
    std::size_t bi = 0, bo = 0, unl = 0;
    for (const auto& w : ds.windows) (w.label == pipeline::Label::bi ? bi : w.label == pipeline::Label::bo ? bo : unl)++;
    std::vector<std::string> x1(pipeline::gps_channel_names.begin(), pipeline::gps_channel_names.end());
    ordered_json sidecar = {{"config_hash", c.hash},
                            {"window_width", pipeline::window_width},
                            {"d1", ds.d1},
                            {"d2", ds.d2},
                            {"x1_channels", x1},
                            {"x2_channels", pipeline::ble_channel_names(c.rc.pipeline)},
                            {"feature_names", names},
                            {"standardization",
                             {{"fit_on", "unlabeled windows"},
                              {"x1", pipeline::stats_to_json(ds.stats.x1)},
                              {"x2", pipeline::stats_to_json(ds.stats.x2)}}},
                            {"counts",
                             {{"segments", ds.segments},
                              {"windows", ds.windows.size()},
                              {"bi", bi},
                              {"bo", bo},
                              {"unlabeled", unl},
                              {"boundary_windows", ds.boundary_windows}}}};
    write_json(d / "windows.json", sidecar);
    finish_stage(c, "prepare", {"windows.bin", "windows.json"});
    std::cerr << "prepare: " << ds.windows.size() << " windows (BI " << bi << ", BO " << bo << ", unlabeled " << unl << ")\n";
}

std::vector<pipeline::WindowData> training_windows(const std::vector<pipeline::WindowPair>& all) {
    return pipeline::hold_out(all).train;
}

void stage_train(const Context& c) {
    const auto all = read_windows(c);
    const auto schema = read_schema(c);
    const auto train = training_windows(all);
    const auto d = begin_stage(c, "train");
    std::vector<std::string> outs;
    for (auto k : c.rc.architectures) {
        auto ac = c.rc.architecture(k);
        ac.gps_channels = schema.d1;
        ac.ble_channels = schema.d2;
        const auto tm = models::train(models::build(ac), train);
        const std::string name = models::to_string(k);
        models::save_checkpoint(tm, (d / (name + ".ckpt")).string());
        std::ostringstream trace;
        trace << "epoch,loss,sigma1,sigma2\n";
        for (const auto& e : tm.trace) trace << e.epoch << ',' << num(e.loss) << ',' << num(e.sigma1) << ',' << num(e.sigma2) << '\n';
        write_text(d / (name + "_trace.csv"), trace.str());
        outs.push_back(name + ".ckpt");
        outs.push_back(name + "_trace.csv");
        std::cerr << "train: " << name << " params " << models::param_count(tm.model) << ", final loss "
                  << tm.trace.back().loss << "\n";
    }
    finish_stage(c, "train", outs);
}

void stage_cluster(const Context& c) {
    const auto all = read_windows(c);
    const auto train = training_windows(all);
    const auto labeled = experiment::labeled_windows(all);
    const auto d = begin_stage(c, "cluster");
    std::vector<std::string> outs;
    for (auto k : c.rc.architectures) {
        const std::string name = models::to_string(k);
        const auto model = models::load_checkpoint(input(c, "train", name + ".ckpt").string());
        auto cc = c.rc.cluster;
        cc.seed = c.rc.cluster_seed();
        const auto cm = experiment::fit_clusters(model, train, cc);
        auto j = clustering::to_json(cm);
        j["config_hash"] = c.hash;
        write_json(d / (name + ".json"), j);
        // latent scatter of the labeled windows for external plotting
        std::vector<clustering::Point> z;
        const auto p = experiment::classify_windows(model, cm, labeled, &z);
        std::ostringstream csv;
        csv << "user_id,segment_id,window_index,label";
        for (std::size_t i = 0; i < (z.empty() ? 0 : z[0].size()); ++i) csv << ",z" << i;
        csv << "\n";
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            const auto& w = labeled[i].data;
            csv << w.user_id << ',' << w.segment_id << ',' << w.window_index << ',' << (p.truth[i] ? "BI" : "BO");
            for (double v : z[i]) csv << ',' << num(v);
            csv << "\n";
        }
        write_text(d / (name + "_latent.csv"), csv.str());
        outs.push_back(name + ".json");
        outs.push_back(name + "_latent.csv");
        std::cerr << "cluster: " << name << " eps " << cm.eps << ", " << cm.cluster_polarity.size() << " clusters"
                  << (cm.degenerate ? " (degenerate: " + cm.degenerate_reason + ")" : "") << "\n";
    }
    finish_stage(c, "cluster", outs);
}

void write_predictions(const fs::path& p, const std::vector<pipeline::WindowPair>& labeled, const experiment::Predictions& pr) {
    std::ostringstream csv;
    csv << "user_id,segment_id,window_index,truth,pred,score\n";
    for (std::size_t i = 0; i < pr.pred.size(); ++i) {
        const auto& w = labeled[i % labeled.size()].data;
        csv << w.user_id << ',' << w.segment_id << ',' << w.window_index << ',' << pr.truth[i] << ',' << pr.pred[i] << ','
            << num(pr.score[i]) << '\n';
    }
    write_text(p, csv.str());
}

noise::FixedPredictions read_predictions(const fs::path& p, const std::string& model) {
    std::ifstream in(p);
    if (!in) fail(ErrorKind::missing_artifact, "missing artifact: " + p.string());
    noise::FixedPredictions f;
    f.model = model;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) fail(ErrorKind::io, p.string() + ": malformed row '" + line + "'");
        f.pred.push_back(std::stoi(cells[4]));
        f.score.push_back(std::stod(cells[5]));
    }
    return f;
}

void stage_evaluate(const Context& c) {
    const auto all = read_windows(c);
    const auto labeled = experiment::labeled_windows(all);
    const auto d = begin_stage(c, "evaluate");
    std::vector<std::string> outs;
    auto reports = ordered_json::array();
    auto add = [&](const experiment::Predictions& p, ordered_json meta) {
        write_predictions(d / ("predictions_" + p.model + ".csv"), labeled, p);
        outs.push_back("predictions_" + p.model + ".csv");
        auto j = metrics::to_json(experiment::evaluate(p));
        j["metadata"] = std::move(meta);
        reports.push_back(j);
    };
    for (auto k : c.rc.architectures) {
        const std::string name = models::to_string(k);
        const auto model = models::load_checkpoint(input(c, "train", name + ".ckpt").string());
        const auto cm = clustering::cluster_model_from_json(read_json(input(c, "cluster", name + ".json")));
        const auto p = experiment::classify_windows(model, cm, labeled);
        add(p, {{"config_hash", c.hash},
                {"seed", c.rc.seed},
                {"protocol", "hold-out"},
                {"param_count", models::param_count(model)},
                {"cluster_degenerate", cm.degenerate}});
    }
    add(experiment::run_forest(labeled, c.rc.forest, c.rc.forest_seed()),
        {{"config_hash", c.hash}, {"seed", c.rc.seed}, {"protocol", "leave-one-out"}});
    add(experiment::run_random(labeled, std::max(c.rc.random_windows, labeled.size()), c.rc.random_seed()),
        {{"config_hash", c.hash}, {"seed", c.rc.seed}, {"protocol", "none"}});
    write_json(d / "metrics.json", {{"config_hash", c.hash}, {"reports", reports}});
    outs.push_back("metrics.json");
    finish_stage(c, "evaluate", outs);
}

void stage_noise_sweep(const Context& c) {
    const auto all = read_windows(c);
    const auto labeled = experiment::labeled_windows(all);
    std::vector<noise::FixedPredictions> fixed;
    for (auto k : c.rc.architectures) {
        const std::string name = models::to_string(k);
        fixed.push_back(read_predictions(input(c, "evaluate", "predictions_" + name + ".csv"), name));
    }
    auto sc = c.rc.sweep;
    sc.seed = c.rc.sweep_seed();
    const auto rows = noise::noise_sweep(labeled, sc, fixed);
    const auto d = begin_stage(c, "noise-sweep");
    std::ostringstream csv;
    noise::write_sweep_csv(csv, rows);
    write_text(d / "sensitivity.csv", csv.str());
    finish_stage(c, "noise-sweep", {"sensitivity.csv"});
}

void stage_report(const Context& c) {
    const auto m = read_json(input(c, "evaluate", "metrics.json"));
    const auto sweep_path = input(c, "noise-sweep", "sensitivity.csv");
    const auto d = begin_stage(c, "report");

    std::ostringstream table, md;
    table << "model,f1_macro,f1_weighted,accuracy,auc_roc,bi_precision,bi_recall,bo_precision,bo_recall,"
             "user_f1_macro_mean,user_f1_macro_std,user_f1_weighted_mean,user_f1_weighted_std,user_accuracy_mean,"
             "user_accuracy_std\n";
    md << "| model | F1 macro | F1 weighted | accuracy | AUC ROC | BI recall | per-user F1 macro |\n"
       << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : m.at("reports")) {
        const auto& p = r.at("pooled");
        const auto& u = r.at("per_user_mean_std");
        const std::string auc = p.at("auc_roc").is_null() ? "" : num(p.at("auc_roc").get<double>());
        table << r.at("model").get<std::string>() << ',' << num(p.at("f1_macro")) << ',' << num(p.at("f1_weighted")) << ','
              << num(p.at("accuracy")) << ',' << auc << ',' << num(p.at("BI").at("precision")) << ','
              << num(p.at("BI").at("recall")) << ',' << num(p.at("BO").at("precision")) << ','
              << num(p.at("BO").at("recall")) << ',' << num(u.at("f1_macro").at("mean")) << ','
              << num(u.at("f1_macro").at("std")) << ',' << num(u.at("f1_weighted").at("mean")) << ','
              << num(u.at("f1_weighted").at("std")) << ',' << num(u.at("accuracy").at("mean")) << ','
              << num(u.at("accuracy").at("std")) << '\n';
        char line[512];
        std::snprintf(line, sizeof line, "| %s | %.2f | %.2f | %.2f | %s | %.2f | %.2f ± %.2f |\n",
                      r.at("model").get<std::string>().c_str(), p.at("f1_macro").get<double>(),
                      p.at("f1_weighted").get<double>(), p.at("accuracy").get<double>(),
                      p.at("auc_roc").is_null() ? "n/a" : (std::to_string(p.at("auc_roc").get<double>()).substr(0, 4)).c_str(),
                      p.at("BI").at("recall").get<double>(), u.at("f1_macro").at("mean").get<double>(),
                      u.at("f1_macro").at("std").get<double>());
        md << line;
    }
    write_text(d / "table.csv", table.str());
    write_text(d / "table.md", md.str());

    // one CSV per metric: mean and std over trials for each (p, model)
    struct Acc {
        std::vector<double> f1m, f1w, auc, acc;
    };
    std::map<std::pair<std::string, std::string>, Acc> groups;  // (p text, model)
    std::vector<std::string> p_order, model_order;
    {
        std::ifstream in(sweep_path);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() < 7) fail(ErrorKind::io, sweep_path.string() + ": malformed row '" + line + "'");
            if (std::find(p_order.begin(), p_order.end(), cells[0]) == p_order.end()) p_order.push_back(cells[0]);
            if (std::find(model_order.begin(), model_order.end(), cells[2]) == model_order.end()) model_order.push_back(cells[2]);
            auto& g = groups[{cells[0], cells[2]}];
            g.f1m.push_back(std::stod(cells[3]));
            g.f1w.push_back(std::stod(cells[4]));
            if (!cells[5].empty()) g.auc.push_back(std::stod(cells[5]));
            g.acc.push_back(std::stod(cells[6]));
        }
    }
    std::vector<std::string> outs{"table.csv", "table.md"};
    const std::vector<std::pair<std::string, std::vector<double> Acc::*>> figs{
        {"f1_macro", &Acc::f1m}, {"f1_weighted", &Acc::f1w}, {"auc_roc", &Acc::auc}, {"accuracy", &Acc::acc}};
    for (const auto& [metric, field] : figs) {
        std::ostringstream csv;
        csv << "p,model,mean,std,trials\n";
        for (const auto& p : p_order)
            for (const auto& model : model_order) {
                auto it = groups.find({p, model});
                if (it == groups.end()) continue;
                const auto s = metrics::mean_std(it->second.*field);
                csv << p << ',' << model << ',' << num(s.mean) << ',' << num(s.std) << ',' << s.n << '\n';
            }
        write_text(d / ("noise_" + metric + ".csv"), csv.str());
        outs.push_back("noise_" + metric + ".csv");
    }
    finish_stage(c, "report", outs);
}

void run_stage(const Context& c, const std::string& stage) {
    const auto t0 = std::chrono::steady_clock::now();
    if (stage == "simulate") stage_simulate(c);
    else if (stage == "prepare") stage_prepare(c);
    else if (stage == "train") stage_train(c);
    else if (stage == "cluster") stage_cluster(c);
    else if (stage == "evaluate") stage_evaluate(c);
    else if (stage == "noise-sweep") stage_noise_sweep(c);
    else if (stage == "report") stage_report(c);
    else fail(ErrorKind::config, "unknown stage '" + stage + "'");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "[" << stage << "] " << secs << " s\n";
}

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::missing_artifact: return 3;
    case ErrorKind::numerical: return 4;
    default: return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised Be-In/Be-Out classification pipeline"};
    std::string config_path, out_dir = "out", stage = "all";
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
    app.add_option("--seed", seed, "master seed override");
    app.add_option("--out", out_dir, "artifact directory");
    app.add_option("--stage", stage, "simulate | prepare | train | cluster | evaluate | noise-sweep | report | all");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        Context c;
        c.rc = config_path.empty() ? config::from_json(nlohmann::json::object()) : config::load(config_path);
        if (seed) c.rc.seed = *seed;
        c.hash = config::config_hash(c.rc);
        c.out = out_dir;
        fs::create_directories(c.out);
        if (stage == "all") {
            for (const auto& s : stage_order) run_stage(c, s);
        } else {
            run_stage(c, stage);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
