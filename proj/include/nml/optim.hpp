#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nml/autodiff.hpp"
#include "nml/dataset.hpp"
#include "nml/net.hpp"
#include "nml/symmetry.hpp"

namespace nml::optim {

using nlohmann::json;

struct HyperParams {
    double eta = 0.1;
    double lambda = 0.0;
    double alpha = 0.0;  // damping
    double beta = 0.0;   // momentum
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (eta <= 0.0) throw std::invalid_argument("hyper: eta must be > 0");
        if (lambda < 0.0) throw std::invalid_argument("hyper: lambda must be >= 0");
        if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("hyper: alpha must lie in [0, 1)");
        if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("hyper: beta must lie in [0, 1)");
        if (batch_size == 0) throw std::invalid_argument("hyper: batch_size must be >= 1");
    }

    // Continuous time per optimizer step: eta for plain SGD, eta (1 - alpha)
    // with momentum; identical when alpha = 0.
    double time_step() const { return eta * (1.0 - alpha); }
};

// v' = beta v + (1 - alpha)(g + lambda theta);  theta' = theta - eta v'.
// Weight decay enters through the buffer, matching standard framework
// semantics; with alpha = beta = 0 this reduces exactly (bitwise) to
// theta - eta (g + lambda theta).
inline void momentum_step_inplace(std::vector<double>& theta, std::vector<double>& velocity,
                                  const std::vector<double>& g, const HyperParams& h) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double v = h.beta * velocity[i] + (1.0 - h.alpha) * (g[i] + h.lambda * theta[i]);
        velocity[i] = v;
        theta[i] -= h.eta * v;
    }
}

inline std::vector<double> sgd_step(const std::vector<double>& theta, const std::vector<double>& g,
                                    const HyperParams& h) {
    if (h.beta != 0.0) throw std::invalid_argument("sgd_step: beta must be 0");
    std::vector<double> out = theta;
    std::vector<double> v(theta.size(), 0.0);
    HyperParams plain = h;
    plain.alpha = 0.0;
    momentum_step_inplace(out, v, g, plain);
    return out;
}

inline std::pair<std::vector<double>, std::vector<double>> momentum_step(const std::vector<double>& theta,
                                                                         const std::vector<double>& velocity,
                                                                         const std::vector<double>& g,
                                                                         const HyperParams& h) {
    auto th = theta;
    auto v = velocity;
    momentum_step_inplace(th, v, g, h);
    return {std::move(th), std::move(v)};
}

// Online exponentially weighted Riemann sum, one update per optimizer step:
//   I <- e^{-2 lambda dt} I + dt * eta * grad_a
inline double integral_update(double integral, double grad_a, double dt, double eta, double lambda) {
    return std::exp(-2.0 * lambda * dt) * integral + dt * eta * grad_a;
}

// Per-descriptor instrumentation. grad_a is recorded once per step from the
// pre-update batch gradient; conserved and vel2 are post-update state. The
// integral buffer applies integral_update (scale and rescale kinds only).
struct DescriptorSeries {
    std::vector<double> grad_a;      // <g,1_A> | |g_A|^2 | |g_A1|^2 - |g_A2|^2
    std::vector<double> conserved;   // after step n (index n-1)
    std::vector<double> vel2;        // |v_A|^2 (signed for rescale) after step n
    std::vector<double> trace;       // per-example noise trace estimate (scale only; 0 when unmeasured)
    std::vector<double> dataset_gradnorm2;  // |g_A|^2 of the full-dataset gradient (scale only, traced steps)
    std::vector<double> integral_series;
    double integral = 0.0;
    double conserved0 = 0.0;
};

struct TrajectoryLog {
    HyperParams hyper;
    std::size_t steps = 0;
    std::size_t log_every = 1;
    std::vector<double> loss;  // pre-update batch loss per step
    std::vector<sym::Descriptor> descriptors;
    std::vector<DescriptorSeries> series;
    double max_step_residual = 0.0;  // only filled when verification is on

    double time_at(std::size_t n) const { return hyper.time_step() * static_cast<double>(n); }

    // Steps at which the harness emits rows: 0, multiples of log_every, final.
    std::vector<std::size_t> logged_steps() const {
        std::vector<std::size_t> out{0};
        for (std::size_t n = log_every; n <= steps; n += log_every) out.push_back(n);
        if (out.back() != steps) out.push_back(steps);
        return out;
    }

    double conserved_at(std::size_t desc, std::size_t step) const {
        return step == 0 ? series[desc].conserved0 : series[desc].conserved[step - 1];
    }
};

struct DivergedError : std::runtime_error {
    std::size_t step;
    explicit DivergedError(std::size_t s)
        : std::runtime_error("training diverged at step " + std::to_string(s)), step(s) {}
};

// Mutable state of one run: everything needed for bitwise-exact resume.
struct RunState {
    std::vector<double> theta;
    std::vector<double> velocity;
    std::size_t step = 0;
    std::vector<std::size_t> perm;  // current epoch order
    std::size_t pos = 0;            // batch position within the epoch
    std::mt19937_64 rng;
    TrajectoryLog log;
};

struct RunOptions {
    std::size_t log_every = 1;
    std::size_t trace_every = 0;  // measure per-example gradient traces at these step multiples (0 = off)
    bool verify_symmetry = false;
    std::size_t checkpoint_every = 0;
    std::function<void(const RunState&)> on_checkpoint;
};

namespace detail {

inline double series_value(const sym::Descriptor& d, const std::vector<double>& v) {
    double acc = 0.0;
    switch (d.kind) {
        case sym::Kind::Translation:
            for (std::size_t i : d.set_a) acc += v[i];
            break;
        case sym::Kind::Scale:
            for (std::size_t i : d.set_a) acc += v[i] * v[i];
            break;
        case sym::Kind::Rescale:
            for (std::size_t i : d.set_a) acc += v[i] * v[i];
            for (std::size_t i : d.set_b) acc -= v[i] * v[i];
            break;
    }
    return acc;
}

inline std::size_t steps_per_epoch(std::size_t n, std::size_t s) { return (n + s - 1) / s; }

// |v_A|^2, signed across the two sets for rescale.
inline double velocity_norm2(const sym::Descriptor& d, const std::vector<double>& v) {
    double acc = 0.0;
    for (std::size_t i : d.set_a) acc += v[i] * v[i];
    if (d.kind == sym::Kind::Rescale)
        for (std::size_t i : d.set_b) acc -= v[i] * v[i];
    return acc;
}

// Unbiased per-example gradient covariance trace restricted to the A set.
inline double noise_trace(const std::vector<std::vector<double>>& per_example, const sym::Descriptor& d) {
    const std::size_t s = per_example.size();
    if (s < 2) return 0.0;
    double tr = 0.0;
    for (std::size_t i : d.set_a) {
        double mean = 0.0;
        for (const auto& g : per_example) mean += g[i];
        mean /= static_cast<double>(s);
        double var = 0.0;
        for (const auto& g : per_example) var += (g[i] - mean) * (g[i] - mean);
        tr += var / static_cast<double>(s - 1);
    }
    return tr;
}

}  // namespace detail

inline RunState init_state(const net::BuiltNetwork& network, const data::Dataset& dataset, const HyperParams& hyper,
                           const std::vector<sym::Descriptor>& descriptors, std::size_t log_every) {
    hyper.validate();
    if (dataset.size() == 0) throw std::invalid_argument("run: empty dataset");
    RunState st;
    st.theta = network.theta0;
    st.velocity.assign(network.dim(), 0.0);
    st.rng.seed(hyper.seed);
    st.perm.resize(dataset.size());
    for (std::size_t i = 0; i < st.perm.size(); ++i) st.perm[i] = i;
    std::shuffle(st.perm.begin(), st.perm.end(), st.rng);
    st.log.hyper = hyper;
    st.log.log_every = log_every;
    st.log.descriptors = descriptors;
    st.log.series.resize(descriptors.size());
    for (std::size_t k = 0; k < descriptors.size(); ++k)
        st.log.series[k].conserved0 = sym::conserved_quantity(descriptors[k], st.theta);
    return st;
}

// Epoch/batch loop: shuffled epochs without replacement, accumulators updated
// with the pre-update batch gradient, conserved quantities logged from the
// post-update parameters at every step.
inline void run_into(RunState& st, const net::BuiltNetwork& network, const data::Dataset& dataset,
                     std::size_t epochs, const RunOptions& opt = {}) {
    const HyperParams& hyper = st.log.hyper;
    const std::size_t spe = detail::steps_per_epoch(dataset.size(), hyper.batch_size);
    const std::size_t total_steps = spe * epochs;
    const double dt = hyper.time_step();
    st.log.log_every = opt.log_every;

    while (st.step < total_steps) {
        if (st.pos == spe) {
            std::shuffle(st.perm.begin(), st.perm.end(), st.rng);
            st.pos = 0;
        }
        const std::size_t lo = st.pos * hyper.batch_size;
        const std::size_t hi = std::min(dataset.size(), lo + hyper.batch_size);
        std::vector<std::size_t> idx(st.perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                     st.perm.begin() + static_cast<std::ptrdiff_t>(hi));
        const data::Batch batch = dataset.batch(idx);

        double loss;
        std::vector<double> g;
        // noise-trace instrumentation: per-example gradients for the batch
        // covariance and the full-dataset gradient for the deterministic part
        std::vector<std::vector<double>> per_example;
        std::vector<double> g_dataset;
        const bool measure_trace = opt.trace_every > 0 && st.step % opt.trace_every == 0;
        try {
            std::tie(loss, g) = ad::value_grad(network.objective(batch), st.theta);
            if (measure_trace) {
                per_example.reserve(idx.size());
                for (std::size_t r = 0; r < idx.size(); ++r)
                    per_example.push_back(ad::gradient(network.example_objective(batch, r), st.theta));
                g_dataset = ad::gradient(network.objective(dataset.full_batch()), st.theta);
            }
        } catch (const NumericError&) {
            // values ran out of range: the previous update already diverged
            throw DivergedError(st.step + 1);
        }

        for (std::size_t k = 0; k < st.log.descriptors.size(); ++k) {
            const auto& d = st.log.descriptors[k];
            auto& s = st.log.series[k];
            double ga = 0.0;
            switch (d.kind) {
                case sym::Kind::Translation:
                    for (std::size_t i : d.set_a) ga += g[i];
                    break;
                case sym::Kind::Scale:
                    for (std::size_t i : d.set_a) ga += g[i] * g[i];
                    break;
                case sym::Kind::Rescale:
                    for (std::size_t i : d.set_a) ga += g[i] * g[i];
                    for (std::size_t i : d.set_b) ga -= g[i] * g[i];
                    break;
            }
            s.grad_a.push_back(ga);
            if (d.kind != sym::Kind::Translation)
                s.integral = integral_update(s.integral, ga, dt, hyper.eta, hyper.lambda);
            s.integral_series.push_back(s.integral);
            if (d.kind == sym::Kind::Scale) {
                s.trace.push_back(measure_trace ? detail::noise_trace(per_example, d)
                                                : (s.trace.empty() ? 0.0 : s.trace.back()));
                double full = 0.0;
                if (measure_trace)
                    for (std::size_t i : d.set_a) full += g_dataset[i] * g_dataset[i];
                else if (!s.dataset_gradnorm2.empty())
                    full = s.dataset_gradnorm2.back();
                s.dataset_gradnorm2.push_back(full);
            } else {
                s.trace.push_back(0.0);
                s.dataset_gradnorm2.push_back(0.0);
            }
            if (opt.verify_symmetry)
                st.log.max_step_residual =
                    std::max(st.log.max_step_residual, std::abs(sym::gradient_residual_from(d, st.theta, g)));
        }

        momentum_step_inplace(st.theta, st.velocity, g, hyper);
        ++st.step;
        ++st.pos;

        for (double v : st.theta)
            if (!std::isfinite(v)) {
                st.log.steps = st.step - 1;  // series were not appended for the diverging step
                throw DivergedError(st.step);
            }

        for (std::size_t k = 0; k < st.log.descriptors.size(); ++k) {
            auto& s = st.log.series[k];
            s.conserved.push_back(detail::series_value(st.log.descriptors[k], st.theta));
            s.vel2.push_back(detail::velocity_norm2(st.log.descriptors[k], st.velocity));
        }
        st.log.loss.push_back(loss);
        st.log.steps = st.step;

        if (opt.checkpoint_every > 0 && opt.on_checkpoint && st.step % opt.checkpoint_every == 0 &&
            st.step != total_steps)
            opt.on_checkpoint(st);
    }
}

inline TrajectoryLog run(const net::BuiltNetwork& network, const data::Dataset& dataset, const HyperParams& hyper,
                         std::size_t epochs, const std::vector<sym::Descriptor>& descriptors,
                         const RunOptions& opt = {}) {
    RunState st = init_state(network, dataset, hyper, descriptors, opt.log_every);
    run_into(st, network, dataset, epochs, opt);
    return std::move(st.log);
}

// ---------------------------------------------------------------------------
// Checkpoints: a complete JSON image of the run state. Doubles survive the
// round trip exactly (shortest-representation printing).
// ---------------------------------------------------------------------------

inline json hyper_to_json(const HyperParams& h) {
    return json{{"eta", h.eta},   {"lambda", h.lambda},         {"alpha", h.alpha},
                {"beta", h.beta}, {"batch_size", h.batch_size}, {"seed", h.seed}};
}

inline HyperParams hyper_from_json(const json& j) {
    HyperParams h;
    h.eta = j.at("eta").get<double>();
    h.lambda = j.at("lambda").get<double>();
    h.alpha = j.at("alpha").get<double>();
    h.beta = j.at("beta").get<double>();
    h.batch_size = j.at("batch_size").get<std::size_t>();
    h.seed = j.at("seed").get<std::uint64_t>();
    return h;
}

inline json descriptor_to_json_full(const sym::Descriptor& d) {
    return json{{"kind", sym::to_string(d.kind)}, {"label", d.label}, {"set_a", d.set_a}, {"set_b", d.set_b}};
}

inline sym::Descriptor descriptor_from_json(const json& j) {
    sym::Descriptor d;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "translation")
        d.kind = sym::Kind::Translation;
    else if (kind == "scale")
        d.kind = sym::Kind::Scale;
    else if (kind == "rescale")
        d.kind = sym::Kind::Rescale;
    else
        throw std::invalid_argument("descriptor: unknown kind " + kind);
    d.label = j.at("label").get<std::string>();
    d.set_a = j.at("set_a").get<std::vector<std::size_t>>();
    d.set_b = j.at("set_b").get<std::vector<std::size_t>>();
    return d;
}

inline json log_to_json(const TrajectoryLog& log) {
    json sj = json::array();
    for (std::size_t k = 0; k < log.series.size(); ++k) {
        const auto& s = log.series[k];
        sj.push_back(json{{"descriptor", descriptor_to_json_full(log.descriptors[k])},
                          {"grad_a", s.grad_a},
                          {"conserved", s.conserved},
                          {"conserved0", s.conserved0},
                          {"vel2", s.vel2},
                          {"trace", s.trace},
                          {"dataset_gradnorm2", s.dataset_gradnorm2},
                          {"integral", s.integral},
                          {"integral_series", s.integral_series}});
    }
    return json{{"hyper", hyper_to_json(log.hyper)}, {"steps", log.steps},   {"log_every", log.log_every},
                {"loss", log.loss},                  {"series", sj},         {"max_step_residual", log.max_step_residual}};
}

inline TrajectoryLog log_from_json(const json& j) {
    TrajectoryLog log;
    log.hyper = hyper_from_json(j.at("hyper"));
    log.steps = j.at("steps").get<std::size_t>();
    log.log_every = j.at("log_every").get<std::size_t>();
    log.loss = j.at("loss").get<std::vector<double>>();
    log.max_step_residual = j.at("max_step_residual").get<double>();
    for (const auto& sj : j.at("series")) {
        log.descriptors.push_back(descriptor_from_json(sj.at("descriptor")));
        DescriptorSeries s;
        s.grad_a = sj.at("grad_a").get<std::vector<double>>();
        s.conserved = sj.at("conserved").get<std::vector<double>>();
        s.conserved0 = sj.at("conserved0").get<double>();
        s.vel2 = sj.at("vel2").get<std::vector<double>>();
        s.trace = sj.at("trace").get<std::vector<double>>();
        s.dataset_gradnorm2 = sj.at("dataset_gradnorm2").get<std::vector<double>>();
        s.integral = sj.at("integral").get<double>();
        s.integral_series = sj.at("integral_series").get<std::vector<double>>();
        log.series.push_back(std::move(s));
    }
    return log;
}

inline json checkpoint_to_json(const RunState& st) {
    std::ostringstream rng_out;
    rng_out << st.rng;
    return json{{"version", 1},
                {"step", st.step},
                {"theta", st.theta},
                {"velocity", st.velocity},
                {"perm", st.perm},
                {"pos", st.pos},
                {"rng", rng_out.str()},
                {"log", log_to_json(st.log)}};
}

inline RunState checkpoint_from_json(const json& j) {
    if (j.at("version").get<int>() != 1) throw std::invalid_argument("checkpoint: unsupported version");
    RunState st;
    st.step = j.at("step").get<std::size_t>();
    st.theta = j.at("theta").get<std::vector<double>>();
    st.velocity = j.at("velocity").get<std::vector<double>>();
    st.perm = j.at("perm").get<std::vector<std::size_t>>();
    st.pos = j.at("pos").get<std::size_t>();
    std::istringstream rng_in(j.at("rng").get<std::string>());
    rng_in >> st.rng;
    st.log = log_from_json(j.at("log"));
    return st;
}

}  // namespace nml::optim
