#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nml/dataset.hpp"
#include "nml/flows.hpp"
#include "nml/net.hpp"
#include "nml/optim.hpp"
#include "nml/predict.hpp"
#include "nml/svg.hpp"
#include "nml/symmetry.hpp"

namespace nml::harness {

using nlohmann::json;
namespace fs = std::filesystem;

// Residual tolerances enforced by `check` (and by the acceptance suite).
struct CheckTolerances {
    double gradient = 1e-8;
    double hessian = 1e-7;
    double conservation = 1e-8;
    double equivariance_loss = 1e-9;
    double equivariance_grad = 1e-8;
    double noise_batch = 1e-8;
    double noise_covariance = 1e-8;
};

struct DatasetSpec {
    enum class Kind { Synthetic, Csv, Idx } kind = Kind::Synthetic;
    // synthetic
    int classes = 10;
    std::size_t dim = 20;
    std::size_t n = 512;
    std::uint64_t seed = 7;
    double spread = 1.0;
    double mean_scale = 2.0;
    // csv
    std::string path;
    std::string label_column = "label";
    // idx
    std::string images;
    std::string labels;
};

struct DescriptorFilter {
    bool all = true;
    std::optional<sym::Kind> kind;
    std::optional<std::string> label_contains;
};

struct CheckSpec {
    std::size_t batches = 16;
    std::size_t alphas = 20;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t batch_size = 32;
    bool include_nonhomogeneous = false;
};

struct ExperimentConfig {
    std::string arch_path;
    net::ArchSpec arch;
    DatasetSpec dataset;
    optim::HyperParams hyper;
    std::size_t epochs = 1;
    std::size_t log_every = 1;
    std::size_t checkpoint_every = 0;
    std::size_t trace_every = 0;
    DescriptorFilter filter;
    std::vector<std::string> predictions{"continuous", "discrete"};
    std::string out_dir;
    net::InitScheme init;
    CheckSpec check;
    json raw;  // echo for provenance

    bool wants(const std::string& method) const {
        for (const auto& m : predictions)
            if (m == method) return true;
        return false;
    }
};

inline DatasetSpec dataset_spec_from_json(const json& j) {
    net::detail::check_keys(j,
                            {"kind", "classes", "dim", "n", "seed", "spread", "mean_scale", "path", "label_column",
                             "images", "labels"},
                            "dataset");
    DatasetSpec d;
    const auto kind = net::detail::get_req<std::string>(j, "kind", "dataset");
    if (kind == "synthetic") {
        d.kind = DatasetSpec::Kind::Synthetic;
        d.classes = net::detail::get_opt<int>(j, "classes", 10);
        d.dim = net::detail::get_opt<std::size_t>(j, "dim", 20);
        d.n = net::detail::get_opt<std::size_t>(j, "n", 512);
        d.seed = net::detail::get_opt<std::uint64_t>(j, "seed", 7);
        d.spread = net::detail::get_opt<double>(j, "spread", 1.0);
        d.mean_scale = net::detail::get_opt<double>(j, "mean_scale", 2.0);
    } else if (kind == "csv") {
        d.kind = DatasetSpec::Kind::Csv;
        d.path = net::detail::get_req<std::string>(j, "path", "dataset");
        d.label_column = net::detail::get_opt<std::string>(j, "label_column", std::string("label"));
    } else if (kind == "idx") {
        d.kind = DatasetSpec::Kind::Idx;
        d.images = net::detail::get_req<std::string>(j, "images", "dataset");
        d.labels = net::detail::get_req<std::string>(j, "labels", "dataset");
    } else {
        throw net::ConfigError("dataset: unknown kind '" + kind + "'");
    }
    return d;
}

inline data::Dataset load_dataset(const DatasetSpec& d) {
    switch (d.kind) {
        case DatasetSpec::Kind::Synthetic:
            return data::synthetic_clusters(d.classes, d.dim, d.n, d.seed, d.spread, d.mean_scale);
        case DatasetSpec::Kind::Csv:
            if (!fs::exists(d.path)) throw net::ConfigError("dataset: missing file " + d.path);
            return data::load_csv(d.path, d.label_column);
        case DatasetSpec::Kind::Idx:
            if (!fs::exists(d.images) || !fs::exists(d.labels))
                throw net::ConfigError("dataset: missing idx files");
            return data::load_idx(d.images, d.labels);
    }
    throw net::ConfigError("dataset: bad kind");
}

inline ExperimentConfig config_from_json(const json& j, const fs::path& base_dir = {}) {
    net::detail::check_keys(j,
                            {"version", "arch", "dataset", "hyper", "epochs", "log_every", "checkpoint_every",
                             "trace_every", "descriptors", "predictions", "out_dir", "init", "check"},
                            "config");
    if (net::detail::get_req<int>(j, "version", "config") != 1) throw net::ConfigError("config: unsupported version");
    // paths inside a config resolve against the config file's directory
    auto resolve = [&base_dir](const std::string& p) {
        if (p.empty() || base_dir.empty() || fs::path(p).is_absolute() || fs::exists(p)) return p;
        return (base_dir / p).string();
    };
    ExperimentConfig c;
    c.raw = j;
    if (j.contains("arch") && j.at("arch").is_object()) {
        c.arch = net::arch_from_json(j.at("arch"));
    } else {
        c.arch_path = resolve(net::detail::get_req<std::string>(j, "arch", "config"));
        c.arch = net::load_arch(c.arch_path);
        c.raw["arch"] = net::arch_to_json(c.arch);  // runlogs stay self-contained
    }
    if (j.contains("dataset")) {
        c.dataset = dataset_spec_from_json(j.at("dataset"));
        c.dataset.path = resolve(c.dataset.path);
        c.dataset.images = resolve(c.dataset.images);
        c.dataset.labels = resolve(c.dataset.labels);
    }
    if (j.contains("hyper")) {
        const auto& hj = j.at("hyper");
        net::detail::check_keys(hj, {"eta", "lambda", "alpha", "beta", "batch_size", "seed"}, "hyper");
        c.hyper.eta = net::detail::get_opt<double>(hj, "eta", 0.1);
        c.hyper.lambda = net::detail::get_opt<double>(hj, "lambda", 0.0);
        c.hyper.alpha = net::detail::get_opt<double>(hj, "alpha", 0.0);
        c.hyper.beta = net::detail::get_opt<double>(hj, "beta", 0.0);
        c.hyper.batch_size = net::detail::get_opt<std::size_t>(hj, "batch_size", 32);
        c.hyper.seed = net::detail::get_opt<std::uint64_t>(hj, "seed", 0);
        c.hyper.validate();
    }
    c.epochs = net::detail::get_opt<std::size_t>(j, "epochs", 1);
    if (c.epochs == 0) throw net::ConfigError("config: epochs must be >= 1");
    c.log_every = net::detail::get_opt<std::size_t>(j, "log_every", 1);
    if (c.log_every == 0) throw net::ConfigError("config: log_every must be >= 1");
    c.checkpoint_every = net::detail::get_opt<std::size_t>(j, "checkpoint_every", 0);
    c.trace_every = net::detail::get_opt<std::size_t>(j, "trace_every", 0);
    if (j.contains("descriptors")) {
        const auto& dj = j.at("descriptors");
        if (dj.is_string()) {
            if (dj.get<std::string>() != "all") throw net::ConfigError("config: descriptors must be 'all' or an object");
        } else {
            net::detail::check_keys(dj, {"kind", "label_contains"}, "descriptors");
            c.filter.all = false;
            if (dj.contains("kind")) {
                const auto k = dj.at("kind").get<std::string>();
                if (k == "translation")
                    c.filter.kind = sym::Kind::Translation;
                else if (k == "scale")
                    c.filter.kind = sym::Kind::Scale;
                else if (k == "rescale")
                    c.filter.kind = sym::Kind::Rescale;
                else
                    throw net::ConfigError("config: unknown descriptor kind '" + k + "'");
            }
            if (dj.contains("label_contains")) c.filter.label_contains = dj.at("label_contains").get<std::string>();
        }
    }
    if (j.contains("predictions")) c.predictions = j.at("predictions").get<std::vector<std::string>>();
    for (const auto& m : c.predictions)
        if (m != "continuous" && m != "discrete" && m != "momentum" && m != "ito")
            throw net::ConfigError("config: unknown prediction method '" + m + "'");
    if (c.wants("ito") && c.trace_every == 0)
        throw net::ConfigError("config: the ito method needs trace_every >= 1");
    c.out_dir = net::detail::get_opt<std::string>(j, "out_dir", std::string());
    if (j.contains("init")) {
        const auto& ij = j.at("init");
        net::detail::check_keys(ij, {"scheme", "std"}, "init");
        const auto scheme = net::detail::get_opt<std::string>(ij, "scheme", std::string("kaiming"));
        if (scheme == "kaiming")
            c.init.kind = net::InitScheme::Kind::KaimingNormal;
        else if (scheme == "normal")
            c.init.kind = net::InitScheme::Kind::Normal;
        else
            throw net::ConfigError("config: unknown init scheme '" + scheme + "'");
        c.init.std = net::detail::get_opt<double>(ij, "std", 0.01);
    }
    if (j.contains("check")) {
        const auto& cj = j.at("check");
        net::detail::check_keys(cj, {"batches", "alphas", "seeds", "batch_size", "include_nonhomogeneous"}, "check");
        c.check.batches = net::detail::get_opt<std::size_t>(cj, "batches", 16);
        c.check.alphas = net::detail::get_opt<std::size_t>(cj, "alphas", 20);
        if (cj.contains("seeds")) c.check.seeds = cj.at("seeds").get<std::vector<std::uint64_t>>();
        c.check.batch_size = net::detail::get_opt<std::size_t>(cj, "batch_size", 32);
        c.check.include_nonhomogeneous = net::detail::get_opt<bool>(cj, "include_nonhomogeneous", false);
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw net::ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw net::ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(j, fs::path(path).parent_path());
}

inline std::vector<sym::Descriptor> filtered_descriptors(const net::BuiltNetwork& network,
                                                         const DescriptorFilter& f,
                                                         bool include_nonhomogeneous = false) {
    sym::EnumerateOptions opt;
    opt.include_nonhomogeneous = include_nonhomogeneous;
    auto descs = sym::enumerate_groups(network, opt);
    if (f.all) return descs;
    std::vector<sym::Descriptor> out;
    for (auto& d : descs) {
        if (f.kind && d.kind != *f.kind) continue;
        if (f.label_contains && d.label.find(*f.label_contains) == std::string::npos) continue;
        out.push_back(std::move(d));
    }
    return out;
}

// --- formatting -------------------------------------------------------------

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

// --- symmetry check ----------------------------------------------------------

struct CheckReport {
    double max_gradient = 0.0;
    double max_hessian = 0.0;
    double max_conservation = 0.0;
    double max_equivariance_loss = 0.0;
    double max_equivariance_grad = 0.0;
    double max_noise_batch = 0.0;
    double max_noise_covariance = 0.0;
    std::size_t descriptors_checked = 0;
    bool pass = false;

    json to_json() const {
        return json{{"max_gradient_residual", max_gradient},
                    {"max_hessian_residual", max_hessian},
                    {"max_conservation_condition", max_conservation},
                    {"max_equivariance_loss_gap", max_equivariance_loss},
                    {"max_equivariance_gradient_gap", max_equivariance_grad},
                    {"max_noise_batch_residual", max_noise_batch},
                    {"max_noise_covariance_residual", max_noise_covariance},
                    {"descriptors_checked", descriptors_checked},
                    {"pass", pass}};
    }
};

// Runs every geometric check over the configured seeds and batches.
inline CheckReport run_check(const ExperimentConfig& cfg, const CheckTolerances& tol = {}) {
    CheckReport rep;
    const auto dataset = load_dataset(cfg.dataset);
    for (std::uint64_t seed : cfg.check.seeds) {
        const auto network = net::build(cfg.arch, seed, cfg.init);
        const auto descs = filtered_descriptors(network, cfg.filter, cfg.check.include_nonhomogeneous);
        rep.descriptors_checked += descs.size();

        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
        std::vector<data::Batch> batches;
        for (std::size_t b = 0; b < cfg.check.batches; ++b) {
            std::vector<std::size_t> idx(cfg.check.batch_size);
            for (auto& i : idx) i = rng() % dataset.size();
            batches.push_back(dataset.batch(idx));
        }

        const auto& theta = network.theta0;
        std::vector<std::vector<double>> grads;
        grads.reserve(batches.size());
        for (const auto& b : batches) grads.push_back(ad::gradient(network.objective(b), theta));

        std::uniform_real_distribution<double> shift(-3.0, 3.0);
        std::uniform_real_distribution<double> log_gain(std::log(0.25), std::log(4.0));

        for (const auto& d : descs) {
            for (const auto& g : grads) {
                rep.max_gradient = std::max(rep.max_gradient, std::abs(sym::gradient_residual_from(d, theta, g)));
                rep.max_conservation = std::max(rep.max_conservation, std::abs(sym::conservation_condition_from(d, theta, g)));
            }
            const auto obj = network.objective(batches[0]);
            const auto h_gen = ad::hvp(obj, theta, sym::generator(d, theta));
            rep.max_hessian = std::max(rep.max_hessian, sym::hessian_residual_from(d, grads[0], h_gen));
            for (std::size_t a = 0; a < cfg.check.alphas; ++a) {
                const double alpha = d.kind == sym::Kind::Translation ? shift(rng) : std::exp(log_gain(rng));
                const auto gaps = sym::equivariance_check(network, theta, batches[0], d, alpha);
                rep.max_equivariance_loss = std::max(rep.max_equivariance_loss, gaps.loss_gap);
                rep.max_equivariance_grad = std::max(rep.max_equivariance_grad, gaps.gradient_gap);
            }
            const auto noise = sym::noise_lowrank_check(network, theta, batches, d);
            rep.max_noise_batch = std::max(rep.max_noise_batch, noise.max_batch_residual);
            rep.max_noise_covariance = std::max(rep.max_noise_covariance, noise.covariance_residual);
        }
    }
    rep.pass = rep.max_gradient <= tol.gradient && rep.max_hessian <= tol.hessian && rep.max_conservation <= tol.conservation &&
               rep.max_equivariance_loss <= tol.equivariance_loss &&
               rep.max_equivariance_grad <= tol.equivariance_grad && rep.max_noise_batch <= tol.noise_batch &&
               rep.max_noise_covariance <= tol.noise_covariance;
    return rep;
}

// --- train ------------------------------------------------------------------

struct PredictionColumns {
    // one entry per logged step; NaN marks an absent method (empty CSV field)
    std::vector<double> continuous, discrete, momentum, ito;
};

inline const double kAbsent = std::numeric_limits<double>::quiet_NaN();

// Computes all configured prediction series for one descriptor on the logged grid.
inline PredictionColumns predict_series(const ExperimentConfig& cfg, const optim::TrajectoryLog& log,
                                        std::size_t k, const std::vector<std::size_t>& steps) {
    const auto& d = log.descriptors[k];
    const auto& s = log.series[k];
    const auto& h = log.hyper;
    PredictionColumns cols;
    const bool traced = cfg.trace_every > 0 && d.kind == sym::Kind::Scale;
    for (std::size_t n : steps) {
        const double t = log.time_at(n);
        double c = kAbsent, disc = kAbsent, mom = kAbsent, ito = kAbsent;
        if (cfg.wants("continuous")) {
            switch (d.kind) {
                case sym::Kind::Translation: c = predict::translation_sgd(s.conserved0, h.lambda, t); break;
                case sym::Kind::Scale: c = predict::scale_sgd(s.conserved0, h, s.grad_a, n); break;
                case sym::Kind::Rescale: c = predict::rescale_sgd(s.conserved0, h, s.grad_a, n); break;
            }
        }
        if (cfg.wants("discrete"))
            disc = predict::discrete_exact(d.kind, s.conserved0, h, s.grad_a, n);
        if (cfg.wants("momentum")) {
            switch (d.kind) {
                case sym::Kind::Translation: mom = predict::translation_momentum(s.conserved0, h, t); break;
                case sym::Kind::Scale: mom = predict::scale_momentum(s.conserved0, h, s.vel2, n); break;
                case sym::Kind::Rescale: mom = predict::rescale_momentum(s.conserved0, h, s.vel2, n); break;
            }
        }
        if (cfg.wants("ito") && traced)
            ito = predict::ito_scale_ode(s.conserved0, h, s.dataset_gradnorm2, s.trace, n);
        cols.continuous.push_back(c);
        cols.discrete.push_back(disc);
        cols.momentum.push_back(mom);
        cols.ito.push_back(ito);
    }
    return cols;
}

inline void write_trajectories_csv(const std::string& path, const ExperimentConfig& cfg,
                                   const optim::TrajectoryLog& log, bool with_predictions) {
    std::ofstream out(path);
    out << "step,time,descriptor_label,kind,empirical,pred_continuous,pred_discrete,pred_momentum,pred_ito\n";
    const auto steps = log.logged_steps();
    auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
    for (std::size_t k = 0; k < log.descriptors.size(); ++k) {
        PredictionColumns cols;
        if (with_predictions) cols = predict_series(cfg, log, k, steps);
        for (std::size_t si = 0; si < steps.size(); ++si) {
            const std::size_t n = steps[si];
            out << n << ',' << fmt_double(log.time_at(n)) << ',' << log.descriptors[k].label << ','
                << sym::to_string(log.descriptors[k].kind) << ',' << fmt_double(log.conserved_at(k, n));
            if (with_predictions)
                out << ',' << cell(cols.continuous[si]) << ',' << cell(cols.discrete[si]) << ','
                    << cell(cols.momentum[si]) << ',' << cell(cols.ito[si]);
            else
                out << ",,,,";
            out << '\n';
        }
    }
}

// Continuous-flow trajectories share the training CSV schema; the prediction
// columns stay empty.
inline void write_flow_csv(const std::string& path, const flows::FlowTrajectory& traj,
                           const std::vector<sym::Descriptor>& descriptors) {
    std::ofstream out(path);
    out << "step,time,descriptor_label,kind,empirical,pred_continuous,pred_discrete,pred_momentum,pred_ito\n";
    for (std::size_t k = 0; k < descriptors.size(); ++k)
        for (std::size_t s = 0; s < traj.times.size(); ++s)
            out << s << ',' << fmt_double(traj.times[s]) << ',' << descriptors[k].label << ','
                << sym::to_string(descriptors[k].kind) << ',' << fmt_double(traj.conserved[k][s]) << ",,,,\n";
}

struct TrainResult {
    optim::TrajectoryLog log;
    std::string run_dir;
    bool diverged = false;
    std::size_t diverged_step = 0;
};

inline void write_runlog(const std::string& dir, const ExperimentConfig& cfg, const optim::RunState& st) {
    json j{{"version", 1}, {"config", cfg.raw}, {"state", optim::checkpoint_to_json(st)}};
    std::ofstream out(fs::path(dir) / "runlog.json");
    out << j.dump(1) << '\n';
}

inline TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& resume_from = "") {
    fs::create_directories(out_dir);
    const auto dataset = load_dataset(cfg.dataset);
    const auto network = net::build(cfg.arch, cfg.hyper.seed, cfg.init);

    optim::RunOptions opt;
    opt.log_every = cfg.log_every;
    opt.trace_every = cfg.trace_every;
    opt.checkpoint_every = cfg.checkpoint_every;
    opt.on_checkpoint = [&](const optim::RunState& st) {
        std::ofstream out(fs::path(out_dir) / ("checkpoint-" + std::to_string(st.step) + ".json"));
        out << optim::checkpoint_to_json(st).dump(1) << '\n';
    };

    optim::RunState st;
    if (resume_from.empty()) {
        const auto descs = filtered_descriptors(network, cfg.filter);
        st = optim::init_state(network, dataset, cfg.hyper, descs, cfg.log_every);
    } else {
        std::ifstream in(resume_from);
        if (!in) throw net::ConfigError("resume: cannot open " + resume_from);
        json j;
        in >> j;
        st = optim::checkpoint_from_json(j);
        if (st.theta.size() != network.dim()) throw net::ConfigError("resume: checkpoint does not match network");
    }

    TrainResult result;
    result.run_dir = out_dir;
    try {
        optim::run_into(st, network, dataset, cfg.epochs, opt);
    } catch (const optim::DivergedError& e) {
        result.diverged = true;
        result.diverged_step = e.step;
    }
    write_runlog(out_dir, cfg, st);
    write_trajectories_csv((fs::path(out_dir) / "trajectories.csv").string(), cfg, st.log, false);
    result.log = std::move(st.log);
    return result;
}

// --- compare -----------------------------------------------------------------

struct MethodResidual {
    double max_rel = 0.0;
    double mean_rel = 0.0;
    std::size_t points = 0;
};

// Relative error of a prediction series against the empirical one, normalized
// by the larger series sup. Conserved quantities live on the parameter scale
// (0.01 and up at initialization), so series below 1e-4 in sup norm (bias
// sums start and stay at zero) compare against that floor instead of their
// own roundoff dust.
inline MethodResidual series_residual(const std::vector<double>& emp, const std::vector<double>& pred) {
    MethodResidual r;
    double scale = 1e-4;
    for (double v : emp) scale = std::max(scale, std::abs(v));
    for (double v : pred)
        if (!std::isnan(v)) scale = std::max(scale, std::abs(v));
    double total = 0.0;
    for (std::size_t i = 0; i < emp.size(); ++i) {
        if (std::isnan(pred[i])) continue;
        const double rel = std::abs(emp[i] - pred[i]) / scale;
        r.max_rel = std::max(r.max_rel, rel);
        total += rel;
        ++r.points;
    }
    if (r.points > 0) r.mean_rel = total / static_cast<double>(r.points);
    return r;
}

struct CompareResult {
    json report;
    std::map<std::string, std::map<std::string, MethodResidual>> residuals;  // label -> method -> residual
};

inline CompareResult compare(const std::string& run_dir, bool write_svg = false) {
    std::ifstream in(fs::path(run_dir) / "runlog.json");
    if (!in) throw net::ConfigError("compare: no runlog.json in " + run_dir);
    json j;
    in >> j;
    const auto cfg = config_from_json(j.at("config"));
    auto st = optim::checkpoint_from_json(j.at("state"));
    const auto& log = st.log;

    const auto steps = log.logged_steps();
    CompareResult res;
    json per_descriptor = json::array();
    for (std::size_t k = 0; k < log.descriptors.size(); ++k) {
        const auto cols = predict_series(cfg, log, k, steps);
        std::vector<double> emp;
        emp.reserve(steps.size());
        for (std::size_t n : steps) emp.push_back(log.conserved_at(k, n));

        json methods = json::object();
        auto add = [&](const char* name, const std::vector<double>& pred) {
            if (!cfg.wants(name)) return;
            const auto r = series_residual(emp, pred);
            if (r.points == 0) return;
            methods[name] = {{"max_rel_err", r.max_rel}, {"mean_rel_err", r.mean_rel}, {"points", r.points}};
            res.residuals[log.descriptors[k].label][name] = r;
        };
        add("continuous", cols.continuous);
        add("discrete", cols.discrete);
        add("momentum", cols.momentum);
        add("ito", cols.ito);
        per_descriptor.push_back(json{{"label", log.descriptors[k].label},
                                      {"kind", sym::to_string(log.descriptors[k].kind)},
                                      {"methods", methods}});

        if (write_svg) {
            std::vector<svg::Series> chart;
            std::vector<double> times;
            for (std::size_t n : steps) times.push_back(log.time_at(n));
            chart.push_back({"empirical", times, emp, "#1f77b4", false});
            if (cfg.wants("continuous")) chart.push_back({"continuous", times, cols.continuous, "#d62728", true});
            if (cfg.wants("discrete")) chart.push_back({"discrete", times, cols.discrete, "#2ca02c", true});
            if (cfg.wants("momentum")) chart.push_back({"momentum", times, cols.momentum, "#9467bd", true});
            if (cfg.wants("ito")) chart.push_back({"ito", times, cols.ito, "#8c564b", true});
            std::string fname = log.descriptors[k].label;
            for (auto& ch : fname)
                if (ch == ' ' || ch == '/') ch = '_';
            svg::write_chart((fs::path(run_dir) / (fname + ".svg")).string(), log.descriptors[k].label, chart);
        }
    }

    write_trajectories_csv((fs::path(run_dir) / "trajectories.csv").string(), cfg, log, true);

    res.report = json{{"version", 1},
                      {"seed", log.hyper.seed},
                      {"hyper", optim::hyper_to_json(log.hyper)},
                      {"steps", log.steps},
                      {"logged_steps", steps.size()},
                      {"max_step_residual", log.max_step_residual},
                      {"descriptors", per_descriptor},
                      {"descriptor_sets", sym::descriptors_to_json(log.descriptors)}};
    std::ofstream out(fs::path(run_dir) / "report.json");
    out << res.report.dump(1) << '\n';
    return res;
}

// --- demos -------------------------------------------------------------------

// Fixed-step comparisons on the 2x2 quadratic: discrete iterates against the
// plain and modified continuous trajectories, for gradient descent and for
// momentum.
inline void demo_quadratic(const std::string& out_dir) {
    fs::create_directories(out_dir);
    const flows::Sym2 A{2.5, -1.5, 2.0};
    const std::array<double, 2> w0{1.0, 1.5};
    std::ofstream out(fs::path(out_dir) / "quadratic.csv");
    out << "variant,eta,step,time,discrete_x,discrete_y,flow_x,flow_y,modified_x,modified_y\n";
    for (double eta : {0.05, 0.1, 0.2}) {
        // discrete gradient descent iterates
        std::array<double, 2> w = w0;
        const int nsteps = 25;
        for (int n = 0; n <= nsteps; ++n) {
            const double t = eta * n;
            const auto flow = flows::quadratic_exact(A, w0, eta, 0.0, 0.0, t, flows::QuadraticModel::GradientFlow);
            const auto mod = flows::quadratic_exact(A, w0, eta, 0.0, 0.0, t, flows::QuadraticModel::ModifiedLossFlow);
            out << "gd," << eta << ',' << n << ',' << fmt_double(t) << ',' << fmt_double(w[0]) << ','
                << fmt_double(w[1]) << ',' << fmt_double(flow[0]) << ',' << fmt_double(flow[1]) << ','
                << fmt_double(mod[0]) << ',' << fmt_double(mod[1]) << '\n';
            const std::array<double, 2> grad{A.a * w[0] + A.b * w[1], A.b * w[0] + A.c * w[1]};
            w = {w[0] - eta * grad[0], w[1] - eta * grad[1]};
        }
        // momentum iterates against momentum flow / modified momentum flow
        const double beta = 0.9;
        std::array<double, 2> wm = w0, v{0.0, 0.0};
        for (int n = 0; n <= nsteps; ++n) {
            const double t = eta * n;
            const auto flow = flows::quadratic_exact(A, w0, eta, 0.0, beta, t, flows::QuadraticModel::MomentumFlow);
            const auto mod =
                flows::quadratic_exact(A, w0, eta, 0.0, beta, t, flows::QuadraticModel::ModifiedMomentumFlow);
            out << "momentum," << eta << ',' << n << ',' << fmt_double(t) << ',' << fmt_double(wm[0]) << ','
                << fmt_double(wm[1]) << ',' << fmt_double(flow[0]) << ',' << fmt_double(flow[1]) << ','
                << fmt_double(mod[0]) << ',' << fmt_double(mod[1]) << '\n';
            const std::array<double, 2> grad{A.a * wm[0] + A.b * wm[1], A.b * wm[0] + A.c * wm[1]};
            v = {beta * v[0] + grad[0], beta * v[1] + grad[1]};
            wm = {wm[0] - eta * v[0], wm[1] - eta * v[1]};
        }
    }
}

inline void demo_rotation(const std::string& out_dir, double eta = 0.1, std::size_t n = 100) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "rotation.csv");
    out << "step,x,y,radius_discrete,radius_flow,radius_modified\n";
    double x = 1.0, y = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const auto r = flows::rotation_demo(eta, k);
        out << k << ',' << fmt_double(x) << ',' << fmt_double(y) << ',' << fmt_double(r.discrete) << ','
            << fmt_double(r.flow) << ',' << fmt_double(r.modified) << '\n';
        const double nx = x - eta * y, ny = y + eta * x;
        x = nx;
        y = ny;
    }
}

inline void demo_oscillator(const std::string& out_dir, double gamma = 0.05, double omega = 0.5) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "oscillator.csv");
    out << "t,homogeneous,driven_const\n";
    const osc::Params p{gamma, omega};
    osc::ForcingSeries f;
    f.dt = 0.05;
    f.values.assign(2001, 0.1);
    for (double t = 0.0; t <= 100.0 + 1e-9; t += 0.5)
        out << fmt_double(t) << ',' << fmt_double(osc::homogeneous(p, 1.0, t)) << ','
            << fmt_double(osc::driven(p, 1.0, f, t)) << '\n';
}

}  // namespace nml::harness
