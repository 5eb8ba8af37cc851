#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nml/autodiff.hpp"
#include "nml/oscillator.hpp"
#include "nml/symmetry.hpp"

namespace nml::flows {

enum class FlowKind {
    GradientFlow,              // dtheta/dt = -g
    WeightDecayFlow,           // dtheta/dt = -g - lambda theta
    MomentumFlow,              // (1 - beta) dtheta/dt = -g
    ModifiedLossFlow,          // dtheta/dt = -g - (eta/2) H g
    ModifiedEquationOfLearning,// dtheta/dt = -(1 + eta lambda/2) g - (lambda + eta lambda^2/2) theta - (eta/2) H (g + lambda theta)
    ModifiedMomentumFlow,      // (eta(1-alpha)(1+beta)/2) theta'' + (1-beta) theta' + lambda theta = -g
};

enum class Integrator { RK4, Euler };

struct FlowSpec {
    FlowKind kind = FlowKind::GradientFlow;
    double eta = 0.1;
    double lambda = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    Integrator integrator = Integrator::RK4;
    double step = 0.01;
    double horizon = 1.0;
    std::size_t sample_every = 1;
};

struct DivergenceError : std::runtime_error {
    double time;
    explicit DivergenceError(double t)
        : std::runtime_error("flow diverged at t = " + std::to_string(t)), time(t) {}
};

struct FlowTrajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;                 // theta snapshots
    std::vector<std::vector<double>> conserved;              // [descriptor][sample]
};

namespace detail {
using Deriv = std::function<std::vector<double>(const std::vector<double>&)>;

inline void step_rk4(const Deriv& f, std::vector<double>& y, double h) {
    const std::size_t n = y.size();
    const auto k1 = f(y);
    std::vector<double> tmp(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    const auto k2 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    const auto k3 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    const auto k4 = f(tmp);
    for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

inline void step_euler(const Deriv& f, std::vector<double>& y, double h) {
    const auto k = f(y);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += h * k[i];
}

inline bool finite(const std::vector<double>& y) {
    for (double v : y)
        if (!std::isfinite(v)) return false;
    return true;
}
}  // namespace detail

// Integrates the chosen continuous model with the full-batch objective,
// recording theta and every descriptor's conserved quantity at each sample.
// Second-order models carry (theta, dtheta/dt) with dtheta/dt(0) = 0; only the
// theta half is recorded.
inline FlowTrajectory integrate(const ad::Objective& obj, const std::vector<double>& theta0, const FlowSpec& spec,
                                const std::vector<sym::Descriptor>& descriptors = {}) {
    if (spec.step <= 0.0 || spec.horizon < spec.step) throw std::invalid_argument("flow: need 0 < step <= horizon");
    const std::size_t dim = theta0.size();
    const bool second_order = spec.kind == FlowKind::ModifiedMomentumFlow;

    detail::Deriv deriv = [&](const std::vector<double>& y) {
        std::vector<double> dy(y.size());
        std::vector<double> th(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(dim));
        switch (spec.kind) {
            case FlowKind::GradientFlow: {
                auto g = ad::gradient(obj, th);
                for (std::size_t i = 0; i < dim; ++i) dy[i] = -g[i];
                break;
            }
            case FlowKind::WeightDecayFlow: {
                auto g = ad::gradient(obj, th);
                for (std::size_t i = 0; i < dim; ++i) dy[i] = -g[i] - spec.lambda * th[i];
                break;
            }
            case FlowKind::MomentumFlow: {
                auto g = ad::gradient(obj, th);
                const double inv = 1.0 / (1.0 - spec.beta);
                for (std::size_t i = 0; i < dim; ++i) dy[i] = -inv * g[i];
                break;
            }
            case FlowKind::ModifiedLossFlow: {
                auto g = ad::gradient(obj, th);
                auto hg = ad::hvp(obj, th, g);
                for (std::size_t i = 0; i < dim; ++i) dy[i] = -g[i] - 0.5 * spec.eta * hg[i];
                break;
            }
            case FlowKind::ModifiedEquationOfLearning: {
                auto g = ad::gradient(obj, th);
                std::vector<double> v(dim);
                for (std::size_t i = 0; i < dim; ++i) v[i] = g[i] + spec.lambda * th[i];
                auto hv = ad::hvp(obj, th, v);
                const double cg = 1.0 + 0.5 * spec.eta * spec.lambda;
                const double ct = spec.lambda + 0.5 * spec.eta * spec.lambda * spec.lambda;
                for (std::size_t i = 0; i < dim; ++i) dy[i] = -cg * g[i] - ct * th[i] - 0.5 * spec.eta * hv[i];
                break;
            }
            case FlowKind::ModifiedMomentumFlow: {
                auto g = ad::gradient(obj, th);
                const double a = 0.5 * spec.eta * (1.0 - spec.alpha) * (1.0 + spec.beta);
                for (std::size_t i = 0; i < dim; ++i) {
                    const double u = y[dim + i];
                    dy[i] = u;
                    dy[dim + i] = (-g[i] - spec.lambda * th[i] - (1.0 - spec.beta) * u) / a;
                }
                break;
            }
        }
        return dy;
    };

    std::vector<double> y = theta0;
    if (second_order) y.resize(2 * dim, 0.0);

    FlowTrajectory traj;
    traj.conserved.resize(descriptors.size());
    auto record = [&](double t) {
        std::vector<double> th(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(dim));
        for (std::size_t k = 0; k < descriptors.size(); ++k)
            traj.conserved[k].push_back(sym::conserved_quantity(descriptors[k], th));
        traj.times.push_back(t);
        traj.states.push_back(std::move(th));
    };

    record(0.0);
    const auto nsteps = static_cast<std::size_t>(std::llround(spec.horizon / spec.step));
    for (std::size_t s = 1; s <= nsteps; ++s) {
        const double t = spec.step * static_cast<double>(s);
        try {
            if (spec.integrator == Integrator::RK4)
                detail::step_rk4(deriv, y, spec.step);
            else
                detail::step_euler(deriv, y, spec.step);
        } catch (const NumericError&) {
            throw DivergenceError(t);
        }
        if (!detail::finite(y)) throw DivergenceError(t);
        if (s % spec.sample_every == 0 || s == nsteps) record(t);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Exact trajectories on the quadratic loss L(w) = 1/2 w^T A w
// ---------------------------------------------------------------------------

struct Sym2 {
    // [[a, b], [b, c]]
    double a = 0.0, b = 0.0, c = 0.0;
};

struct Eigen2 {
    std::array<double, 2> values{};
    std::array<std::array<double, 2>, 2> vectors{};  // vectors[k] is the unit eigenvector of values[k]
};

inline Eigen2 eigen_sym2(const Sym2& m) {
    Eigen2 e;
    const double tr = m.a + m.c;
    const double det = m.a * m.c - m.b * m.b;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    e.values = {tr / 2.0 + disc, tr / 2.0 - disc};
    for (int k = 0; k < 2; ++k) {
        double vx, vy;
        if (std::abs(m.b) > 1e-300) {
            vx = e.values[static_cast<std::size_t>(k)] - m.c;
            vy = m.b;
        } else {
            // diagonal matrix: axis-aligned eigenvectors, largest first
            vx = (k == 0) == (m.a >= m.c) ? 1.0 : 0.0;
            vy = 1.0 - vx;
        }
        const double n = std::hypot(vx, vy);
        e.vectors[static_cast<std::size_t>(k)] = {vx / n, vy / n};
    }
    return e;
}

enum class QuadraticModel { GdTrajectory, GradientFlow, ModifiedLossFlow, MomentumFlow, ModifiedMomentumFlow };

// Closed-form state at time t. GdTrajectory returns the discrete iterate at
// step floor(t / eta); the flows evaluate their eigen-diagonal solutions.
inline std::array<double, 2> quadratic_exact(const Sym2& A, const std::array<double, 2>& w0, double eta, double alpha,
                                             double beta, double t, QuadraticModel model) {
    const Eigen2 e = eigen_sym2(A);
    if (e.values[1] <= 0.0) throw std::invalid_argument("quadratic_exact: A must be positive definite");
    std::array<double, 2> coords{};
    for (int k = 0; k < 2; ++k)
        coords[static_cast<std::size_t>(k)] = e.vectors[static_cast<std::size_t>(k)][0] * w0[0] +
                                              e.vectors[static_cast<std::size_t>(k)][1] * w0[1];
    for (int k = 0; k < 2; ++k) {
        const double lam = e.values[static_cast<std::size_t>(k)];
        double& x = coords[static_cast<std::size_t>(k)];
        switch (model) {
            case QuadraticModel::GdTrajectory: {
                const auto n = static_cast<long long>(std::floor(t / eta + 1e-12));
                x *= std::pow(1.0 - eta * lam, static_cast<double>(n));
                break;
            }
            case QuadraticModel::GradientFlow:
                x *= std::exp(-lam * t);
                break;
            case QuadraticModel::ModifiedLossFlow:
                x *= std::exp(-(lam + 0.5 * eta * lam * lam) * t);
                break;
            case QuadraticModel::MomentumFlow:
                x *= std::exp(-lam * t / (1.0 - beta));
                break;
            case QuadraticModel::ModifiedMomentumFlow: {
                const double a = 0.5 * eta * (1.0 - alpha) * (1.0 + beta);
                osc::Params p{(1.0 - beta) / (2.0 * a), std::sqrt(lam / a)};
                x = osc::homogeneous(p, x, t);
                break;
            }
        }
    }
    return {e.vectors[0][0] * coords[0] + e.vectors[1][0] * coords[1],
            e.vectors[0][1] * coords[0] + e.vectors[1][1] * coords[1]};
}

struct RotationRadii {
    double discrete = 1.0;  // (1 + eta^2)^{n/2}
    double flow = 1.0;      // gradient flow stays on the circle
    double modified = 1.0;  // e^{eta^2 n / 2}
};

// Forward Euler on the rotation field f(x) = [[0,-1],[1,0]] x spirals outward;
// the modified flow dx/dt = f(x) + (eta/2) x reproduces that growth.
inline RotationRadii rotation_demo(double eta, std::size_t n) {
    if (eta <= 0.0 || eta > 0.5) throw std::invalid_argument("rotation_demo: eta must lie in (0, 0.5]");
    RotationRadii r;
    r.discrete = std::pow(1.0 + eta * eta, static_cast<double>(n) / 2.0);
    r.flow = 1.0;
    r.modified = std::exp(eta * eta * static_cast<double>(n) / 2.0);
    return r;
}

}  // namespace nml::flows
