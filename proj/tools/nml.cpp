// Command-line front end: census / check / train / compare / demo.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "nml/harness.hpp"

namespace {

int cmd_census(const std::string& spec_path) {
    const auto spec = nml::net::load_arch(spec_path);
    const auto c = nml::net::census(spec);
    std::cout << nml::net::census_to_json(c).dump(2) << '\n';
    return 0;
}

int cmd_check(const std::string& config_path, std::optional<std::uint64_t> seed_override) {
    auto cfg = nml::harness::load_config(config_path);
    if (seed_override) cfg.check.seeds = {*seed_override};
    const auto rep = nml::harness::run_check(cfg);
    std::cout << rep.to_json().dump(2) << '\n';
    if (!rep.pass) {
        std::cerr << "symmetry check FAILED: residual above tolerance\n";
        return 1;
    }
    return 0;
}

int worker_count(std::size_t jobs) {
    std::size_t n = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("NML_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = static_cast<std::size_t>(v);
    }
    if (n == 0) n = 1;
    return static_cast<int>(std::min(n, jobs));
}

int cmd_train(const std::vector<std::string>& config_paths, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override, const std::string& resume) {
    struct Job {
        nml::harness::ExperimentConfig cfg;
        std::string out;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < config_paths.size(); ++i) {
        Job job;
        job.cfg = nml::harness::load_config(config_paths[i]);
        if (seed_override) job.cfg.hyper.seed = *seed_override;
        job.out = !out_dir.empty() ? (config_paths.size() == 1 ? out_dir : out_dir + "/run" + std::to_string(i))
                                   : job.cfg.out_dir;
        if (job.out.empty()) throw nml::net::ConfigError("train: no output directory (config out_dir or --out)");
        jobs.push_back(std::move(job));
    }
    if (!resume.empty() && jobs.size() != 1)
        throw nml::net::ConfigError("train: --resume takes exactly one config");

    std::mutex io;
    std::atomic<int> failures{0};
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                const auto res = nml::harness::train(jobs[i].cfg, jobs[i].out, resume);
                std::lock_guard<std::mutex> lock(io);
                if (res.diverged) {
                    std::cerr << "run " << jobs[i].out << " diverged at step " << res.diverged_step
                              << " (partial log flushed)\n";
                    ++failures;
                } else {
                    std::cout << "trained " << jobs[i].out << ": " << res.log.steps << " steps, "
                              << res.log.descriptors.size() << " descriptors\n";
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(io);
                std::cerr << "run " << jobs[i].out << " failed: " << e.what() << '\n';
                ++failures;
            }
        }
    };
    const int workers = worker_count(jobs.size());
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return failures.load() == 0 ? 0 : 1;
}

int cmd_compare(const std::string& run_dir, bool svg) {
    const auto res = nml::harness::compare(run_dir, svg);
    double worst = 0.0;
    for (const auto& [label, methods] : res.residuals)
        for (const auto& [name, r] : methods) worst = std::max(worst, r.max_rel);
    std::cout << "report written to " << run_dir << "/report.json (worst max_rel_err " << worst << ")\n";
    return 0;
}

int cmd_demo(const std::string& kind, const std::string& out_dir) {
    if (kind == "quadratic")
        nml::harness::demo_quadratic(out_dir);
    else if (kind == "rotation")
        nml::harness::demo_rotation(out_dir);
    else if (kind == "oscillator")
        nml::harness::demo_oscillator(out_dir);
    else {
        std::cerr << "unknown demo '" << kind << "' (quadratic | rotation | oscillator)\n";
        return 1;
    }
    std::cout << "demo written to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"symmetry-instrumented training laboratory"};
    app.require_subcommand(1);

    std::string spec_path, config_path, out_dir, run_dir, demo_kind, resume;
    std::vector<std::string> config_paths;
    std::optional<std::uint64_t> seed;
    bool svg = false;

    auto* census = app.add_subcommand("census", "count symmetry groups of an architecture spec");
    census->add_option("spec", spec_path, "architecture spec JSON")->required();

    auto* check = app.add_subcommand("check", "verify gradient/Hessian symmetry geometry");
    check->add_option("--config", config_path, "experiment config JSON")->required();
    check->add_option("--seed", seed, "override the check seeds");

    auto* train = app.add_subcommand("train", "run instrumented training");
    train->add_option("--config", config_paths, "experiment config JSON (repeatable)")->required();
    train->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    train->add_option("--seed", seed, "override the optimizer seed");
    train->add_option("--resume", resume, "checkpoint JSON to resume from");

    auto* compare = app.add_subcommand("compare", "overlay theoretical predictions on a finished run");
    compare->add_option("run_dir", run_dir, "directory written by train")->required();
    compare->add_flag("--svg", svg, "also write per-descriptor SVG plots");

    auto* demo = app.add_subcommand("demo", "closed-form discretization demos");
    demo->add_option("kind", demo_kind, "quadratic | rotation | oscillator")->required();
    demo->add_option("--out", out_dir, "output directory")->default_val("demo-out");

    CLI11_PARSE(app, argc, argv);

    try {
        if (census->parsed()) return cmd_census(spec_path);
        if (check->parsed()) return cmd_check(config_path, seed);
        if (train->parsed()) return cmd_train(config_paths, out_dir, seed, resume);
        if (compare->parsed()) return cmd_compare(run_dir, svg);
        if (demo->parsed()) return cmd_demo(demo_kind, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
