#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace nml::osc {

enum class Regime { Overdamped, Critical, Underdamped };

// Damped oscillator x'' + 2 gamma x' + omega^2 x = f with x'(0) = 0. Inside a
// narrow band around gamma = omega the critical-form expressions are used to
// avoid cancellation in the cosh/sinh branch.
struct Params {
    double gamma = 0.0;
    double omega = 0.0;

    double critical_band() const { return 1e-9 * std::max(gamma * gamma, omega * omega); }

    Regime regime() const {
        const double disc = gamma * gamma - omega * omega;
        if (std::abs(disc) <= critical_band()) return Regime::Critical;
        return disc > 0.0 ? Regime::Overdamped : Regime::Underdamped;
    }
};

// Uniformly sampled forcing f(k * dt), k = 0..n-1.
struct ForcingSeries {
    double dt = 0.0;
    std::vector<double> values;

    double t_max() const { return values.empty() ? 0.0 : dt * static_cast<double>(values.size() - 1); }

    double at(std::size_t k) const { return values[k]; }

    // Linear interpolation inside the sampled support.
    double interp(double t) const {
        if (values.empty() || t < 0.0 || t > t_max() * (1.0 + 1e-12))
            throw std::out_of_range("forcing: time outside sampled support");
        const double u = t / dt;
        const auto k = static_cast<std::size_t>(u);
        if (k + 1 >= values.size()) return values.back();
        const double w = u - static_cast<double>(k);
        return (1.0 - w) * values[k] + w * values[k + 1];
    }
};

namespace detail {
// Trapezoidal integral of w(t - tau) * f(tau) over [0, t] on the forcing grid,
// with a partial last cell when t is off-grid.
template <class Kernel>
double convolve(const ForcingSeries& f, double t, Kernel w) {
    if (t < 0.0) throw std::invalid_argument("convolve: negative time");
    if (t == 0.0) return 0.0;
    if (f.values.empty() || f.dt <= 0.0) throw std::invalid_argument("convolve: empty forcing");
    if (t > f.t_max() * (1.0 + 1e-12)) throw std::out_of_range("convolve: time beyond forcing support");
    const double dt = f.dt;
    const auto full = static_cast<std::size_t>(t / dt);
    double acc = 0.0;
    for (std::size_t k = 0; k <= full && k < f.values.size(); ++k) {
        const double tau = dt * static_cast<double>(k);
        const double weight = (k == 0 || k == full) ? 0.5 : 1.0;
        acc += weight * w(t - tau) * f.values[k];
    }
    acc *= dt;
    const double rem = t - dt * static_cast<double>(full);
    if (rem > 1e-15 * t) {
        const double f0 = f.values[std::min(full, f.values.size() - 1)];
        const double f1 = f.interp(t);
        acc += 0.5 * rem * (w(rem) * f0 + w(0.0) * f1);
    }
    return acc;
}
}  // namespace detail

// x' + lambda x = f, x(0) = x0:  x(t) = e^{-lambda t} x0 + int e^{-lambda (t-tau)} f.
inline double first_order(double lambda, double x0, const ForcingSeries* forcing, double t) {
    if (t < 0.0) throw std::invalid_argument("first_order: negative time");
    const double hom = std::exp(-lambda * t) * x0;
    if (!forcing || forcing->values.empty()) return hom;
    return hom + detail::convolve(*forcing, t, [lambda](double s) { return std::exp(-lambda * s); });
}

// Closed-form homogeneous solution with x(0) = x0, x'(0) = 0. The overdamped
// branch is evaluated as a sum of decaying exponentials so large gamma*t does
// not overflow cosh.
inline double homogeneous(const Params& p, double x0, double t) {
    if (t < 0.0) throw std::invalid_argument("homogeneous: negative time");
    const double g = p.gamma, w = p.omega;
    switch (p.regime()) {
        case Regime::Critical:
            return std::exp(-g * t) * (1.0 + g * t) * x0;
        case Regime::Overdamped: {
            const double s = std::sqrt(g * g - w * w);
            // e^{-gt}(cosh(st) + (g/s) sinh(st)) = ((1+g/s) e^{(s-g)t} + (1-g/s) e^{-(s+g)t}) / 2
            return 0.5 * x0 * ((1.0 + g / s) * std::exp((s - g) * t) + (1.0 - g / s) * std::exp(-(s + g) * t));
        }
        case Regime::Underdamped: {
            const double d = std::sqrt(w * w - g * g);
            return std::exp(-g * t) * (std::cos(d * t) + (g / d) * std::sin(d * t)) * x0;
        }
    }
    return 0.0;
}

// Green's function of the damped oscillator (unit impulse response).
inline double green(const Params& p, double t) {
    if (t <= 0.0) return 0.0;
    const double g = p.gamma, w = p.omega;
    switch (p.regime()) {
        case Regime::Critical:
            return t * std::exp(-g * t);
        case Regime::Overdamped: {
            const double s = std::sqrt(g * g - w * w);
            return (std::exp((s - g) * t) - std::exp(-(s + g) * t)) / (2.0 * s);
        }
        case Regime::Underdamped: {
            const double d = std::sqrt(w * w - g * g);
            return std::exp(-g * t) * std::sin(d * t) / d;
        }
    }
    return 0.0;
}

// Driven solution x_h(t) + int_0^t G(t - tau) f(tau) dtau by trapezoidal
// convolution on the forcing grid.
inline double driven(const Params& p, double x0, const ForcingSeries& forcing, double t) {
    const double hom = homogeneous(p, x0, t);
    if (t == 0.0) return hom;
    return hom + detail::convolve(forcing, t, [&p](double s) { return green(p, s); });
}

// First zero crossing of the underdamped homogeneous solution (x0 != 0):
// cos(d t) + (g/d) sin(d t) = 0, first root at t = (pi - atan(d/g)) / d.
inline double first_zero_crossing(const Params& p) {
    if (p.regime() != Regime::Underdamped) throw std::invalid_argument("first_zero_crossing: not underdamped");
    const double d = std::sqrt(p.omega * p.omega - p.gamma * p.gamma);
    if (p.gamma <= 0.0) return 0.5 * M_PI / d;
    return (M_PI - std::atan(d / p.gamma)) / d;
}

}  // namespace nml::osc
