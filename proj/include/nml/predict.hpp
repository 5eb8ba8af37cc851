#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nml/optim.hpp"
#include "nml/oscillator.hpp"

namespace nml::predict {

enum class Quadrature { Trapezoid, LeftRiemann };

// <theta(t), 1_A> = e^{-lambda t} <theta(0), 1_A>. No learning rate, no data.
inline double translation_sgd(double s0, double lambda, double t) {
    if (t < 0.0) throw std::invalid_argument("translation_sgd: negative time");
    return std::exp(-lambda * t) * s0;
}

namespace detail {
// Per-step samples lifted onto the quadrature grid: node k carries the step-k
// sample and the final node reuses the last available one when the series
// ends at n-1.
inline osc::ForcingSeries grid_forcing(const std::vector<double>& per_step, double dt, std::size_t n, double factor) {
    osc::ForcingSeries f;
    f.dt = dt;
    f.values.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) f.values[k] = factor * per_step[std::min(k, per_step.size() - 1)];
    return f;
}

// The online buffer recursion I_n = e^{-2 lambda dt} I_{n-1} + dt * eta * f_{n-1}.
inline double left_riemann_integral(const std::vector<double>& f, double dt, double eta, double lambda,
                                    std::size_t n) {
    const double decay = std::exp(-2.0 * lambda * dt);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = decay * acc + dt * eta * f[i];
    return acc;
}
}  // namespace detail

// |theta_A(t)|^2 = e^{-2 lambda t} n0 + eta * int e^{-2 lambda (t-tau)} |g_A|^2.
// `gradnorm2` is the per-step batch series on the optimizer grid; evaluation
// at step n (t = n dt). LeftRiemann replays the online integral buffer.
inline double scale_sgd(double n0, const optim::HyperParams& h, const std::vector<double>& gradnorm2, std::size_t n,
                        Quadrature quad = Quadrature::Trapezoid) {
    if (gradnorm2.size() < n) throw std::invalid_argument("scale_sgd: series does not cover requested time");
    const double dt = h.time_step();
    const double t = dt * static_cast<double>(n);
    if (n == 0) return n0;
    if (quad == Quadrature::LeftRiemann)
        return std::exp(-2.0 * h.lambda * t) * n0 + detail::left_riemann_integral(gradnorm2, dt, h.eta, h.lambda, n);
    const auto f = detail::grid_forcing(gradnorm2, dt, n, h.eta);
    return osc::first_order(2.0 * h.lambda, n0, &f, t);
}

// Same solution with the signed forcing |g_A1|^2 - |g_A2|^2.
inline double rescale_sgd(double d0, const optim::HyperParams& h, const std::vector<double>& signed_gradnorm2,
                          std::size_t n, Quadrature quad = Quadrature::Trapezoid) {
    return scale_sgd(d0, h, signed_gradnorm2, n, quad);
}

// Stationary angular speed sqrt(2 lambda / eta) where the centrifugal
// discretization push balances the centripetal weight-decay pull.
inline double stationary_angular_speed(const optim::HyperParams& h) {
    if (h.lambda <= 0.0) throw std::invalid_argument("stationary_angular_speed: requires lambda > 0");
    if (h.eta <= 0.0) throw std::invalid_argument("stationary_angular_speed: requires eta > 0");
    return std::sqrt(2.0 * h.lambda / h.eta);
}

// Exact unrolls of the discrete update:
//   translation: (1 - eta lambda)^n s0
//   scale:       (1 - eta lambda)^{2n} n0 + eta^2 sum (1 - eta lambda)^{2(n-1-i)} f_i
// For runs produced by the SGD stepper these replay the empirical quantities
// up to floating-point accumulation.
inline double discrete_exact(sym::Kind kind, double initial, const optim::HyperParams& h,
                             const std::vector<double>& series, std::size_t n) {
    if (kind != sym::Kind::Translation && series.size() < n)
        throw std::invalid_argument("discrete_exact: series shorter than n");
    const double r = 1.0 - h.eta * h.lambda;
    if (kind == sym::Kind::Translation) return std::pow(r, static_cast<double>(n)) * initial;
    double acc = std::pow(r, 2.0 * static_cast<double>(n)) * initial;
    double weight = h.eta * h.eta;  // (1 - eta lambda)^{2(n-1-i)} eta^2, built backward from i = n-1
    for (std::size_t i = n; i-- > 0;) {
        acc += weight * series[i];
        weight *= r * r;
    }
    return acc;
}

// Momentum turns the decaying parameter sum into a damped harmonic oscillator:
//   gamma = (1 - beta) / (eta (1 - alpha)(1 + beta))
//   omega = sqrt(2 lambda / (eta (1 - alpha)(1 + beta)))
inline osc::Params translation_momentum_params(const optim::HyperParams& h) {
    const double m = h.eta * (1.0 - h.alpha) * (1.0 + h.beta);
    return osc::Params{(1.0 - h.beta) / m, std::sqrt(2.0 * h.lambda / m)};
}

inline double translation_momentum(double s0, const optim::HyperParams& h, double t) {
    return osc::homogeneous(translation_momentum_params(h), s0, t);
}

// Squared-norm dynamics under momentum: same friction, omega uses 4 lambda,
// driven by f(t) = 2 |dtheta_A/dt|^2 estimated from the velocity buffer.
inline osc::Params scale_momentum_params(const optim::HyperParams& h) {
    const double m = h.eta * (1.0 - h.alpha) * (1.0 + h.beta);
    return osc::Params{(1.0 - h.beta) / m, std::sqrt(4.0 * h.lambda / m)};
}

// `vel2` holds |v_A|^2 after each step; the forcing grid point k carries the
// velocity reached at time k dt, with f(0) = 0 matching dtheta/dt(0) = 0.
inline double scale_momentum(double n0, const optim::HyperParams& h, const std::vector<double>& vel2, std::size_t n) {
    if (vel2.size() < n) throw std::invalid_argument("scale_momentum: series shorter than n");
    const double dt = h.time_step();
    osc::ForcingSeries f;
    f.dt = dt;
    f.values.resize(n + 1);
    f.values[0] = 0.0;
    for (std::size_t k = 1; k <= n; ++k) f.values[k] = 2.0 * vel2[k - 1];
    return osc::driven(scale_momentum_params(h), n0, f, dt * static_cast<double>(n));
}

inline double rescale_momentum(double d0, const optim::HyperParams& h, const std::vector<double>& signed_vel2,
                               std::size_t n) {
    return scale_momentum(d0, h, signed_vel2, n);
}

// First-order norm dynamics with the batch-noise trace forcing:
//   dn/dt = -2 lambda n + eta |g_A|^2 + (eta / S) Tr[Cov_A]
// Falls back to the plain continuous solution when the trace is zero.
inline double ito_scale_ode(double n0, const optim::HyperParams& h, const std::vector<double>& gradnorm2,
                            const std::vector<double>& trace, std::size_t n) {
    if (gradnorm2.size() < n || trace.size() < n) throw std::invalid_argument("ito_scale_ode: series shorter than n");
    const double dt = h.time_step();
    if (n == 0) return n0;
    osc::ForcingSeries f;
    f.dt = dt;
    f.values.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const std::size_t i = std::min(k, gradnorm2.size() - 1);
        f.values[k] = h.eta * gradnorm2[i] + h.eta / static_cast<double>(h.batch_size) * trace[std::min(i, trace.size() - 1)];
    }
    return osc::first_order(2.0 * h.lambda, n0, &f, dt * static_cast<double>(n));
}

}  // namespace nml::predict
