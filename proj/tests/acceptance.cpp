// Acceptance suite: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nml/harness.hpp"

using namespace nml;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail, double seconds) {
    std::printf("%s  criterion %2d: %s (%s, %.1fs)\n", pass ? "PASS" : "FAIL", number, name.c_str(), detail.c_str(),
                seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(int number, const std::string& name, const std::function<bool(std::string&)>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
        pass = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(number, name, pass, detail, secs);
}

std::string repo_path(const char* rel) {
    for (fs::path p = fs::current_path(); !p.empty(); p = p.parent_path()) {
        if (fs::exists(p / rel)) return (p / rel).string();
        if (p == p.root_path()) break;
    }
    return rel;
}

net::ArchSpec lab_mlp(net::Activation act = net::Activation::Relu, bool bn = true) {
    net::ArchSpec spec;
    spec.input_dim = 20;
    spec.num_classes = 10;
    spec.layers.push_back(net::DenseLayer{20, 24});
    if (bn) spec.layers.push_back(net::BatchNormLayer{24, 0.0, true});
    spec.layers.push_back(net::ActivationLayer{act, 0.01});
    spec.layers.push_back(net::DenseLayer{24, 16});
    spec.layers.push_back(net::ActivationLayer{act, 0.01});
    spec.layers.push_back(net::DenseLayer{16, 10});
    spec.layers.push_back(net::SoftmaxHead{});
    return spec;
}

optim::TrajectoryLog lab_run(double lambda, double beta, std::size_t epochs, std::uint64_t seed) {
    const auto network = net::build(lab_mlp(), seed);
    const auto dataset = data::synthetic_clusters(10, 20, 512, 7);
    optim::HyperParams h;
    h.eta = 0.1;
    h.lambda = lambda;
    h.beta = beta;
    h.batch_size = 32;
    h.seed = seed;
    optim::RunOptions opt;
    opt.log_every = 1;
    return optim::run(network, dataset, h, epochs, sym::enumerate_groups(network), opt);
}

// Sup-normalized residual between an empirical series (on the logged grid)
// and a per-step prediction; floor 1e-4 for identically-zero series.
double series_error(const std::vector<double>& emp, const std::vector<double>& pred) {
    double sup = 1e-4, worst = 0.0;
    for (double v : emp) sup = std::max(sup, std::abs(v));
    for (double v : pred) sup = std::max(sup, std::abs(v));
    for (std::size_t i = 0; i < emp.size(); ++i) worst = std::max(worst, std::abs(emp[i] - pred[i]) / sup);
    return worst;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- criteria ---------------------------------------------------------------

bool c1_census(std::string& detail) {
    const auto plain = net::census(net::load_arch(repo_path("specs/vgg16_tiny_imagenet.json")));
    const auto bn = net::census(net::load_arch(repo_path("specs/vgg16_bn_tiny_imagenet.json")));
    const bool ok = plain.n_scale == 0 && plain.n_rescale == 8323 && plain.n_translation == 201 &&
                    plain.n_params == 18067464 && bn.n_scale == 4227 && bn.n_rescale == 8323 &&
                    bn.n_translation == 201 && bn.n_params == 18075912;
    detail = "plain " + std::to_string(plain.n_scale) + "/" + std::to_string(plain.n_rescale) + "/" +
             std::to_string(plain.n_translation) + "/" + std::to_string(plain.n_params) + ", bn " +
             std::to_string(bn.n_scale) + "/" + std::to_string(bn.n_rescale) + "/" + std::to_string(bn.n_translation) +
             "/" + std::to_string(bn.n_params);
    return ok;
}

bool c2_symmetry_geometry(std::string& detail) {
    harness::ExperimentConfig cfg;
    cfg.arch = lab_mlp();
    cfg.dataset.kind = harness::DatasetSpec::Kind::Synthetic;
    cfg.dataset.classes = 10;
    cfg.dataset.dim = 20;
    cfg.dataset.n = 256;
    cfg.dataset.seed = 7;
    cfg.check.batches = 8;
    cfg.check.alphas = 20;
    cfg.check.seeds = {0, 1, 2};
    cfg.check.batch_size = 32;
    const auto rep = harness::run_check(cfg);

    harness::ExperimentConfig control = cfg;
    control.arch = lab_mlp(net::Activation::Tanh, false);
    control.check.seeds = {0};
    control.check.batches = 4;
    control.check.alphas = 4;
    control.check.include_nonhomogeneous = true;
    const auto crep = harness::run_check(control);

    const bool ok = rep.pass && crep.max_gradient > 1e-3;
    detail = "max grad " + fmt(rep.max_gradient) + ", hess " + fmt(rep.max_hessian) + ", conservation " +
             fmt(rep.max_conservation) + ", equiv " + fmt(rep.max_equivariance_loss) + "; tanh control " +
             fmt(crep.max_gradient);
    return ok;
}

bool c3_conservation(std::string& detail) {
    // smooth activations: gradient flow is differentiable, so integrator
    // error is the only drift and the RK4 order is observable
    const auto network = net::build(lab_mlp(net::Activation::Linear), 3);
    const auto batch = data::synthetic_clusters(10, 20, 64, 11).full_batch();
    const auto descs = sym::enumerate_groups(network);
    const auto obj = network.objective(batch);

    auto drifts = [&](double h) {
        flows::FlowSpec spec;
        spec.kind = flows::FlowKind::GradientFlow;
        spec.step = h;
        spec.horizon = 5.0;
        spec.sample_every = std::max<std::size_t>(1, static_cast<std::size_t>(0.25 / h));
        const auto traj = flows::integrate(obj, network.theta0, spec, descs);
        double tr = 0.0, sc = 0.0, rs = 0.0;
        for (std::size_t k = 0; k < descs.size(); ++k) {
            const double q0 = traj.conserved[k].front();
            double w = 0.0;
            for (double q : traj.conserved[k]) w = std::max(w, std::abs(q - q0));
            w /= std::max(std::abs(q0), 1e-3);
            if (descs[k].kind == sym::Kind::Translation) tr = std::max(tr, w);
            if (descs[k].kind == sym::Kind::Scale) sc = std::max(sc, w);
            if (descs[k].kind == sym::Kind::Rescale) rs = std::max(rs, w);
        }
        return std::array<double, 3>{tr, sc, rs};
    };

    const auto fine = drifts(0.01);
    const bool bounded = fine[0] <= 1e-7 && fine[1] <= 1e-7 && fine[2] <= 1e-7;

    // the pair sits inside the asymptotic regime; at h = 0.2 fifth-order
    // terms still inflate the ratio past the window
    const auto d1 = drifts(0.1);
    const auto d2 = drifts(0.05);
    const double ratio_scale = d1[1] / d2[1];
    const double ratio_rescale = d1[2] / d2[2];
    const bool fourth = ratio_scale >= 12.0 && ratio_scale <= 20.0 && ratio_rescale >= 12.0 && ratio_rescale <= 20.0;

    detail = "drift t/s/r " + fmt(fine[0]) + "/" + fmt(fine[1]) + "/" + fmt(fine[2]) + "; halving ratios " +
             fmt(ratio_scale) + ", " + fmt(ratio_rescale);
    return bounded && fourth;
}

bool c4_discrete_replay(std::string& detail) {
    double worst = 0.0;
    for (double lambda : {0.0, 1e-3}) {
        const auto log = lab_run(lambda, 0.0, 5, 1);
        for (std::size_t k = 0; k < log.descriptors.size(); ++k) {
            const auto& s = log.series[k];
            std::vector<double> emp, pred;
            for (std::size_t n : log.logged_steps()) {
                emp.push_back(log.conserved_at(k, n));
                pred.push_back(predict::discrete_exact(log.descriptors[k].kind, s.conserved0, log.hyper, s.grad_a, n));
            }
            worst = std::max(worst, series_error(emp, pred));
        }
    }
    detail = "max relative error " + fmt(worst);
    return worst <= 1e-8;
}

bool c5_continuous_predictions(std::string& detail) {
    double worst_tr = 0.0, worst_sc = 0.0, worst_rs = 0.0;
    for (double lambda : {0.0, 1e-3}) {
        const auto log = lab_run(lambda, 0.0, 5, 1);
        for (std::size_t k = 0; k < log.descriptors.size(); ++k) {
            const auto& s = log.series[k];
            const auto kind = log.descriptors[k].kind;
            std::vector<double> emp, pred;
            for (std::size_t n : log.logged_steps()) {
                emp.push_back(log.conserved_at(k, n));
                const double t = log.time_at(n);
                switch (kind) {
                    case sym::Kind::Translation:
                        pred.push_back(predict::translation_sgd(s.conserved0, lambda, t));
                        break;
                    case sym::Kind::Scale:
                        pred.push_back(predict::scale_sgd(s.conserved0, log.hyper, s.grad_a, n));
                        break;
                    case sym::Kind::Rescale:
                        pred.push_back(predict::rescale_sgd(s.conserved0, log.hyper, s.grad_a, n));
                        break;
                }
            }
            const double err = series_error(emp, pred);
            if (kind == sym::Kind::Translation && lambda > 0.0) worst_tr = std::max(worst_tr, err);
            if (kind == sym::Kind::Scale) worst_sc = std::max(worst_sc, err);
            if (kind == sym::Kind::Rescale) worst_rs = std::max(worst_rs, err);
        }
    }
    detail = "translation " + fmt(worst_tr) + " (<=2%), scale " + fmt(worst_sc) + ", rescale " + fmt(worst_rs) +
             " (<=5%)";
    return worst_tr <= 0.02 && worst_sc <= 0.05 && worst_rs <= 0.05;
}

bool c6_monotone_norms(std::string& detail) {
    const auto log = lab_run(0.0, 0.0, 5, 1);
    std::size_t violations = 0, groups = 0;
    for (std::size_t k = 0; k < log.descriptors.size(); ++k) {
        if (log.descriptors[k].kind != sym::Kind::Scale) continue;
        ++groups;
        double prev = log.series[k].conserved0;
        for (double q : log.series[k].conserved) {
            if (q < prev) ++violations;
            prev = q;
        }
    }
    detail = std::to_string(groups) + " scale groups over " + std::to_string(log.steps) + " steps, " +
             std::to_string(violations) + " violations";
    return groups > 0 && violations == 0;
}

bool c7_momentum_oscillation(std::string& detail) {
    optim::HyperParams h;
    h.eta = 0.1;
    h.lambda = 5e-3;
    h.beta = 0.99;
    const auto params = predict::translation_momentum_params(h);
    if (params.regime() != osc::Regime::Underdamped) {
        detail = "prediction not underdamped";
        return false;
    }
    const double t_star = osc::first_zero_crossing(params);

    const auto log = lab_run(5e-3, 0.99, 8, 1);
    double ref = 0.0;
    for (std::size_t k = 0; k < log.descriptors.size(); ++k)
        if (log.descriptors[k].kind == sym::Kind::Translation)
            ref = std::max(ref, std::abs(log.series[k].conserved0));
    std::size_t checked = 0, inside = 0;
    double first_cross = 0.0;
    for (std::size_t k = 0; k < log.descriptors.size(); ++k) {
        if (log.descriptors[k].kind != sym::Kind::Translation) continue;
        const auto& s = log.series[k];
        if (std::abs(s.conserved0) < 0.05 * ref) continue;  // zero-sum groups carry no phase information
        ++checked;
        for (std::size_t n = 0; n < s.conserved.size(); ++n)
            if (s.conserved[n] * s.conserved0 < 0.0) {
                const double t = log.time_at(n + 1);
                if (checked == 1) first_cross = t;
                if (t >= 0.75 * t_star && t <= 1.25 * t_star) ++inside;
                break;
            }
    }

    // beta = 0 control: monotone decay, no crossing
    const auto log0 = lab_run(5e-3, 0.0, 8, 1);
    bool monotone = true;
    for (std::size_t k = 0; k < log0.descriptors.size(); ++k) {
        if (log0.descriptors[k].kind != sym::Kind::Translation) continue;
        const auto& s = log0.series[k];
        if (std::abs(s.conserved0) < 0.05 * ref) continue;
        double prev = std::abs(s.conserved0);
        for (double q : s.conserved) {
            if (std::abs(q) > prev * (1.0 + 1e-12) || q * s.conserved0 < 0.0) monotone = false;
            prev = std::abs(q);
        }
    }

    detail = "predicted crossing t*=" + fmt(t_star) + ", first empirical " + fmt(first_cross) + ", " +
             std::to_string(inside) + "/" + std::to_string(checked) + " groups in window; beta=0 monotone " +
             (monotone ? "yes" : "no");
    return checked > 0 && inside == checked && monotone;
}

bool c8_oscillator_oracle(std::string& detail) {
    auto forcing_fn = [](double t) { return 0.4 * std::sin(1.3 * t) + 0.2; };
    osc::ForcingSeries f;
    f.dt = 1e-3;
    f.values.resize(10001);
    for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = forcing_fn(f.dt * static_cast<double>(k));

    double worst = 0.0;
    for (double g : {0.2, 1.0, 5.0})
        for (double w : {0.2, 1.0, 5.0}) {
            const osc::Params p{g, w};
            for (double t : {1.0, 5.0, 10.0}) {
                // RK4 oracle
                double x = 1.0, v = 0.0, tt = 0.0;
                const double hh = 1e-4;
                const auto n = static_cast<std::size_t>(std::llround(t / hh));
                auto acc = [&](double ttt, double xx, double vv) {
                    return forcing_fn(ttt) - 2.0 * g * vv - w * w * xx;
                };
                for (std::size_t i = 0; i < n; ++i) {
                    const double k1x = v, k1v = acc(tt, x, v);
                    const double k2x = v + 0.5 * hh * k1v, k2v = acc(tt + 0.5 * hh, x + 0.5 * hh * k1x, v + 0.5 * hh * k1v);
                    const double k3x = v + 0.5 * hh * k2v, k3v = acc(tt + 0.5 * hh, x + 0.5 * hh * k2x, v + 0.5 * hh * k2v);
                    const double k4x = v + hh * k3v, k4v = acc(tt + hh, x + hh * k3x, v + hh * k3v);
                    x += hh / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                    v += hh / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                    tt += hh;
                }
                const double hom_err =
                    std::abs(osc::homogeneous(p, 1.0, t) -
                             [&] {
                                 double xx = 1.0, vv = 0.0, t2 = 0.0;
                                 for (std::size_t i = 0; i < n; ++i) {
                                     const double k1x = vv, k1v = -2.0 * g * vv - w * w * xx;
                                     const double k2x = vv + 0.5 * hh * k1v,
                                                  k2v = -2.0 * g * (vv + 0.5 * hh * k1v) - w * w * (xx + 0.5 * hh * k1x);
                                     const double k3x = vv + 0.5 * hh * k2v,
                                                  k3v = -2.0 * g * (vv + 0.5 * hh * k2v) - w * w * (xx + 0.5 * hh * k2x);
                                     const double k4x = vv + hh * k3v,
                                                  k4v = -2.0 * g * (vv + hh * k3v) - w * w * (xx + hh * k3x);
                                     xx += hh / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                                     vv += hh / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                                     t2 += hh;
                                 }
                                 return xx;
                             }());
                const double drv_err = std::abs(osc::driven(p, 1.0, f, t) - x);
                worst = std::max(worst, hom_err / (1.0 + std::abs(x)));
                worst = std::max(worst, drv_err / (1.0 + std::abs(x)));
            }
        }

    // regime-boundary continuity
    double cont = 0.0;
    for (double w : {0.5, 1.0, 2.0})
        for (double t : {0.5, 1.0, 3.0}) {
            const double crit = osc::green({w, w}, t);
            cont = std::max(cont, std::abs(osc::green({std::sqrt(w * w + 1e-12), w}, t) - crit));
            cont = std::max(cont, std::abs(osc::green({std::sqrt(w * w - 1e-12), w}, t) - crit));
            const double hcrit = osc::homogeneous({w, w}, 1.0, t);
            cont = std::max(cont, std::abs(osc::homogeneous({std::sqrt(w * w + 1e-12), w}, 1.0, t) - hcrit));
        }

    detail = "max solver error " + fmt(worst) + ", boundary gap " + fmt(cont);
    return worst <= 1e-5 && cont <= 1e-9;
}

bool c9_modified_equation_demos(std::string& detail) {
    const flows::Sym2 A{2.5, -1.5, 2.0};
    const std::array<double, 2> w0{1.0, 1.5};
    bool closer = true;
    for (double eta : {0.05, 0.1, 0.2}) {
        const int n = 25;
        std::array<double, 2> w = w0;
        for (int k = 0; k < n; ++k) {
            const std::array<double, 2> grad{A.a * w[0] + A.b * w[1], A.b * w[0] + A.c * w[1]};
            w = {w[0] - eta * grad[0], w[1] - eta * grad[1]};
        }
        const double t = eta * n;
        const auto flow = flows::quadratic_exact(A, w0, eta, 0.0, 0.0, t, flows::QuadraticModel::GradientFlow);
        const auto mod = flows::quadratic_exact(A, w0, eta, 0.0, 0.0, t, flows::QuadraticModel::ModifiedLossFlow);
        if (std::hypot(w[0] - mod[0], w[1] - mod[1]) >= std::hypot(w[0] - flow[0], w[1] - flow[1])) closer = false;
    }

    // rotation radii: simulate the discrete spiral and integrate the modified
    // field, then compare both against the closed forms
    const double eta = 0.1;
    const std::size_t n = 100;
    double x = 1.0, y = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double nx = x - eta * y, ny = y + eta * x;
        x = nx;
        y = ny;
    }
    const auto radii = flows::rotation_demo(eta, n);
    const double discrete_err = std::abs(std::hypot(x, y) - radii.discrete);

    double mx = 1.0, my = 0.0;
    const double hh = 5e-4;
    const auto steps = static_cast<std::size_t>(std::llround(eta * n / hh));
    for (std::size_t k = 0; k < steps; ++k) {
        auto fxy = [eta](double ax, double ay) { return std::array<double, 2>{-ay + 0.5 * eta * ax, ax + 0.5 * eta * ay}; };
        const auto k1 = fxy(mx, my);
        const auto k2 = fxy(mx + 0.5 * hh * k1[0], my + 0.5 * hh * k1[1]);
        const auto k3 = fxy(mx + 0.5 * hh * k2[0], my + 0.5 * hh * k2[1]);
        const auto k4 = fxy(mx + hh * k3[0], my + hh * k3[1]);
        mx += hh / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        my += hh / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    }
    const double modified_err = std::abs(std::hypot(mx, my) - radii.modified);

    detail = std::string("gd closer for all eta: ") + (closer ? "yes" : "no") + ", radius errors " +
             fmt(discrete_err) + " / " + fmt(modified_err);
    return closer && discrete_err <= 1e-10 && modified_err <= 1e-10;
}

bool c10_noise_lowrank(std::string& detail) {
    const auto network = net::build(lab_mlp(), 4);
    const auto dataset = data::synthetic_clusters(10, 20, 256, 9);
    std::mt19937_64 rng(13);
    std::vector<data::Batch> batches;
    for (int b = 0; b < 16; ++b) {
        std::vector<std::size_t> idx(32);
        for (auto& i : idx) i = rng() % dataset.size();
        batches.push_back(dataset.batch(idx));
    }
    double worst_batch = 0.0, worst_cov = 0.0;
    for (const auto& d : sym::enumerate_groups(network)) {
        const auto res = sym::noise_lowrank_check(network, network.theta0, batches, d);
        worst_batch = std::max(worst_batch, res.max_batch_residual);
        worst_cov = std::max(worst_cov, res.covariance_residual);
    }
    detail = "max per-batch " + fmt(worst_batch) + ", covariance " + fmt(worst_cov);
    return worst_batch <= 1e-8 && worst_cov <= 1e-8;
}

bool c11_determinism_resume(std::string& detail) {
    const auto base = fs::temp_directory_path() / "nml-acceptance";
    fs::remove_all(base);
    fs::create_directories(base);

    harness::json arch = net::arch_to_json(lab_mlp());
    harness::json cfg_json{
        {"version", 1},
        {"arch", arch},
        {"dataset", {{"kind", "synthetic"}, {"classes", 10}, {"dim", 20}, {"n", 256}, {"seed", 7}}},
        {"hyper", {{"eta", 0.1}, {"lambda", 1e-3}, {"alpha", 0.0}, {"beta", 0.0}, {"batch_size", 32}, {"seed", 5}}},
        {"epochs", 4},
        {"log_every", 2},
    };
    const auto cfg = harness::config_from_json(cfg_json);

    harness::train(cfg, (base / "a").string());
    harness::train(cfg, (base / "b").string());
    harness::compare((base / "a").string());
    harness::compare((base / "b").string());
    const bool identical = slurp(base / "a" / "trajectories.csv") == slurp(base / "b" / "trajectories.csv");

    // resume: stop after 2 epochs, continue to 4, compare against a straight run
    auto half = cfg_json;
    half["epochs"] = 2;
    harness::train(harness::config_from_json(half), (base / "half").string());
    const auto runlog = harness::json::parse(slurp(base / "half" / "runlog.json"));
    std::ofstream(base / "ckpt.json") << runlog.at("state").dump(1) << '\n';
    harness::train(cfg, (base / "resumed").string(), (base / "ckpt.json").string());
    harness::compare((base / "resumed").string());
    const bool resumed =
        slurp(base / "a" / "trajectories.csv") == slurp(base / "resumed" / "trajectories.csv");

    detail = std::string("byte-identical reruns: ") + (identical ? "yes" : "no") + ", resumed run identical: " +
             (resumed ? "yes" : "no");
    fs::remove_all(base);
    return identical && resumed;
}

}  // namespace

int main() {
    run_criterion(1, "census reproduction", c1_census);
    run_criterion(2, "symmetry geometry suite", c2_symmetry_geometry);
    run_criterion(3, "conservation under gradient flow", c3_conservation);
    run_criterion(4, "discrete exact replay", c4_discrete_replay);
    run_criterion(5, "continuous sgd predictions", c5_continuous_predictions);
    run_criterion(6, "monotone norm growth at lambda=0", c6_monotone_norms);
    run_criterion(7, "momentum oscillation", c7_momentum_oscillation);
    run_criterion(8, "oscillator library oracle", c8_oscillator_oracle);
    run_criterion(9, "modified-equation demos", c9_modified_equation_demos);
    run_criterion(10, "noise low-rank property", c10_noise_lowrank);
    run_criterion(11, "determinism and resume", c11_determinism_resume);

    if (g_failures == 0)
        std::printf("all criteria passed\n");
    else
        std::printf("%d criteria FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
