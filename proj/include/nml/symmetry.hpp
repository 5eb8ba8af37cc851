#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nml/autodiff.hpp"
#include "nml/dataset.hpp"
#include "nml/net.hpp"

namespace nml::sym {

using nlohmann::json;

constexpr double kResidualFloor = 1e-30;

enum class Kind { Translation, Scale, Rescale };

inline std::string to_string(Kind k) {
    switch (k) {
        case Kind::Translation: return "translation";
        case Kind::Scale: return "scale";
        case Kind::Rescale: return "rescale";
    }
    return "?";
}

// One symmetry group of the loss. set_a holds A (translation/scale) or A1
// (rescale); set_b holds A2 for rescale and is empty otherwise.
struct Descriptor {
    Kind kind = Kind::Translation;
    std::vector<std::size_t> set_a;
    std::vector<std::size_t> set_b;
    std::string label;
};

struct EnumerateOptions {
    // Emit rescale descriptors for non-homogeneous activations too. They are
    // not symmetries; used as negative controls to confirm test power.
    bool include_nonhomogeneous = false;
};

// Walks the architecture and emits every group in the three families:
//  - translation: one group per input column of the softmax weight matrix
//    (the class-indexed entries tied to one input feature) plus the bias row;
//  - scale: one group per feature of an affine layer feeding a batchnorm
//    (incoming weight column plus bias);
//  - rescale: one group per hidden unit under a homogeneous activation,
//    pairing the unit's immediate affine parameters (dense column + bias, or
//    batchnorm gamma/beta) against its outgoing weight row.
inline std::vector<Descriptor> enumerate_groups(const net::BuiltNetwork& network, EnumerateOptions opt = {}) {
    std::vector<Descriptor> out;
    const auto& spec = network.spec;
    const auto& layout = network.layout;

    auto dense_col = [&](const net::DenseBind& d, std::size_t j) {
        std::vector<std::size_t> idx;
        idx.reserve(d.in + 1);
        const std::size_t w0 = layout.blocks[d.w_block].offset;
        for (std::size_t i = 0; i < d.in; ++i) idx.push_back(w0 + i * d.out + j);
        if (d.bias) idx.push_back(layout.blocks[d.b_block].offset + j);
        return idx;
    };
    auto dense_row = [&](const net::DenseBind& d, std::size_t j) {
        std::vector<std::size_t> idx;
        idx.reserve(d.out);
        const std::size_t w0 = layout.blocks[d.w_block].offset;
        for (std::size_t c = 0; c < d.out; ++c) idx.push_back(w0 + j * d.out + c);
        return idx;
    };

    // Translation: softmax head directly fed by a dense layer.
    if (network.softmax_head) {
        const std::size_t head = spec.layers.size() - 1;
        if (head > 0 && std::holds_alternative<net::DenseLayer>(spec.layers[head - 1])) {
            const net::DenseBind* d = network.dense_at_layer(head - 1);
            const std::size_t w0 = layout.blocks[d->w_block].offset;
            for (std::size_t f = 0; f < d->in; ++f) {
                Descriptor desc;
                desc.kind = Kind::Translation;
                for (std::size_t c = 0; c < d->out; ++c) desc.set_a.push_back(w0 + f * d->out + c);
                desc.label = "softmax column " + std::to_string(f);
                out.push_back(std::move(desc));
            }
            if (d->bias) {
                Descriptor desc;
                desc.kind = Kind::Translation;
                const std::size_t b0 = layout.blocks[d->b_block].offset;
                for (std::size_t c = 0; c < d->out; ++c) desc.set_a.push_back(b0 + c);
                desc.label = "softmax bias";
                out.push_back(std::move(desc));
            }
        }
    }

    // Scale: affine layer immediately before a batchnorm.
    for (const auto& bn : network.batchnorm) {
        if (bn.layer == 0) continue;
        if (!std::holds_alternative<net::DenseLayer>(spec.layers[bn.layer - 1])) continue;
        const net::DenseBind* d = network.dense_at_layer(bn.layer - 1);
        for (std::size_t j = 0; j < bn.features; ++j) {
            Descriptor desc;
            desc.kind = Kind::Scale;
            desc.set_a = dense_col(*d, j);
            desc.label = "bn channel " + std::to_string(j) + " layer " + std::to_string(bn.layer);
            out.push_back(std::move(desc));
        }
    }

    // Rescale: (dense | batchnorm) -> activation -> dense.
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto* act = std::get_if<net::ActivationLayer>(&spec.layers[i]);
        if (!act) continue;
        if (!net::is_homogeneous(act->fn) && !opt.include_nonhomogeneous) continue;
        if (i == 0 || i + 1 >= spec.layers.size()) continue;
        if (!std::holds_alternative<net::DenseLayer>(spec.layers[i + 1])) continue;
        const net::DenseBind* next = network.dense_at_layer(i + 1);

        if (const auto* prev_dense = std::get_if<net::DenseLayer>(&spec.layers[i - 1])) {
            (void)prev_dense;
            const net::DenseBind* prev = network.dense_at_layer(i - 1);
            for (std::size_t j = 0; j < prev->out; ++j) {
                Descriptor desc;
                desc.kind = Kind::Rescale;
                desc.set_a = dense_col(*prev, j);
                desc.set_b = dense_row(*next, j);
                desc.label = "hidden neuron " + std::to_string(j) + " layer " + std::to_string(i);
                out.push_back(std::move(desc));
            }
        } else if (std::holds_alternative<net::BatchNormLayer>(spec.layers[i - 1])) {
            const net::BnBind* bn = network.bn_at_layer(i - 1);
            for (std::size_t j = 0; j < bn->features; ++j) {
                Descriptor desc;
                desc.kind = Kind::Rescale;
                desc.set_a = {layout.blocks[bn->gamma_block].offset + j, layout.blocks[bn->beta_block].offset + j};
                desc.set_b = dense_row(*next, j);
                desc.label = "hidden neuron " + std::to_string(j) + " layer " + std::to_string(i);
                out.push_back(std::move(desc));
            }
        }
    }
    return out;
}

inline void validate_indices(const Descriptor& d, std::size_t dim) {
    if (d.set_a.empty()) throw std::invalid_argument("descriptor: empty index set");
    for (std::size_t i : d.set_a)
        if (i >= dim) throw std::out_of_range("descriptor: index out of range");
    for (std::size_t i : d.set_b)
        if (i >= dim) throw std::out_of_range("descriptor: index out of range");
}

// The generator vector field at theta, embedded in the full parameter layout:
// 1_A, theta_A, or theta_A1 - theta_A2.
inline std::vector<double> generator(const Descriptor& d, const std::vector<double>& theta) {
    validate_indices(d, theta.size());
    std::vector<double> v(theta.size(), 0.0);
    switch (d.kind) {
        case Kind::Translation:
            for (std::size_t i : d.set_a) v[i] = 1.0;
            break;
        case Kind::Scale:
            for (std::size_t i : d.set_a) v[i] = theta[i];
            break;
        case Kind::Rescale:
            for (std::size_t i : d.set_a) v[i] = theta[i];
            for (std::size_t i : d.set_b) v[i] = -theta[i];
            break;
    }
    return v;
}

// <theta, generator>: the parameter sum, squared norm, or squared-norm gap.
inline double conserved_quantity(const Descriptor& d, const std::vector<double>& theta) {
    double q = 0.0;
    switch (d.kind) {
        case Kind::Translation:
            for (std::size_t i : d.set_a) q += theta[i];
            break;
        case Kind::Scale:
            for (std::size_t i : d.set_a) q += theta[i] * theta[i];
            break;
        case Kind::Rescale:
            for (std::size_t i : d.set_a) q += theta[i] * theta[i];
            for (std::size_t i : d.set_b) q -= theta[i] * theta[i];
            break;
    }
    return q;
}

// --- residuals over a precomputed gradient -------------------------------

inline double gradient_residual_from(const Descriptor& d, const std::vector<double>& theta,
                                     const std::vector<double>& g) {
    const auto gen = generator(d, theta);
    return dot(g, gen) / (norm2(g) * norm2(gen) + kResidualFloor);
}

inline double conservation_condition_from(const Descriptor& d, const std::vector<double>& theta,
                                     const std::vector<double>& g) {
    if (d.kind == Kind::Translation) return 0.0;  // the mixed Jacobian vanishes
    double q = 0.0;
    for (std::size_t i : d.set_a) q += theta[i] * g[i];
    if (d.kind == Kind::Rescale)
        for (std::size_t i : d.set_b) q -= theta[i] * g[i];
    const auto gen = generator(d, theta);
    return q / (norm2(g) * norm2(gen) + kResidualFloor);
}

inline double hessian_residual_from(const Descriptor& d, const std::vector<double>& g,
                                    const std::vector<double>& h_gen) {
    std::vector<double> r = h_gen;
    if (d.kind == Kind::Scale) {
        for (std::size_t i : d.set_a) r[i] += g[i];
    } else if (d.kind == Kind::Rescale) {
        for (std::size_t i : d.set_a) r[i] += g[i];
        for (std::size_t i : d.set_b) r[i] -= g[i];
    }
    return norm2(r) / (norm2(g) + norm2(h_gen) + kResidualFloor);
}

// --- spec-facing entry points ---------------------------------------------

inline double gradient_residual(const net::BuiltNetwork& network, const std::vector<double>& theta,
                                const data::Batch& batch, const Descriptor& d) {
    const auto g = ad::gradient(network.objective(batch), theta);
    return gradient_residual_from(d, theta, g);
}

inline double hessian_residual(const net::BuiltNetwork& network, const std::vector<double>& theta,
                               const data::Batch& batch, const Descriptor& d) {
    const auto obj = network.objective(batch);
    const auto g = ad::gradient(obj, theta);
    const auto h_gen = ad::hvp(obj, theta, generator(d, theta));
    return hessian_residual_from(d, g, h_gen);
}

inline double conservation_condition(const net::BuiltNetwork& network, const std::vector<double>& theta,
                                const data::Batch& batch, const Descriptor& d) {
    const auto g = ad::gradient(network.objective(batch), theta);
    return conservation_condition_from(d, theta, g);
}

// Applies the group action at alpha.
inline std::vector<double> apply_action(const Descriptor& d, const std::vector<double>& theta, double alpha) {
    if ((d.kind == Kind::Scale || d.kind == Kind::Rescale) && alpha <= 0.0)
        throw std::invalid_argument("group action: alpha must be positive for scale/rescale");
    std::vector<double> out = theta;
    switch (d.kind) {
        case Kind::Translation:
            for (std::size_t i : d.set_a) out[i] += alpha;
            break;
        case Kind::Scale:
            for (std::size_t i : d.set_a) out[i] *= alpha;
            break;
        case Kind::Rescale:
            for (std::size_t i : d.set_a) out[i] *= alpha;
            for (std::size_t i : d.set_b) out[i] /= alpha;
            break;
    }
    return out;
}

struct EquivarianceGaps {
    double loss_gap = 0.0;
    double gradient_gap = 0.0;
};

// loss_gap = |L(theta) - L(psi(theta, alpha))|; gradient_gap compares g(theta)
// against the transported gradient at the moved point (the kind-specific
// diagonal transport), relative to |g|.
inline EquivarianceGaps equivariance_check(const net::BuiltNetwork& network, const std::vector<double>& theta,
                                           const data::Batch& batch, const Descriptor& d, double alpha) {
    const auto moved = apply_action(d, theta, alpha);
    const auto obj = network.objective(batch);
    const auto [l0, g0] = ad::value_grad(obj, theta);
    const auto [l1, g1] = ad::value_grad(obj, moved);
    std::vector<double> transported = g1;
    switch (d.kind) {
        case Kind::Translation:
            break;
        case Kind::Scale:
            for (std::size_t i : d.set_a) transported[i] *= alpha;
            break;
        case Kind::Rescale:
            for (std::size_t i : d.set_a) transported[i] *= alpha;
            for (std::size_t i : d.set_b) transported[i] /= alpha;
            break;
    }
    EquivarianceGaps gaps;
    gaps.loss_gap = std::abs(l0 - l1);
    double diff2 = 0.0;
    for (std::size_t i = 0; i < g0.size(); ++i) {
        const double dgi = g0[i] - transported[i];
        diff2 += dgi * dgi;
    }
    gaps.gradient_gap = std::sqrt(diff2) / (norm2(g0) + kResidualFloor);
    return gaps;
}

struct NoiseCheckResult {
    double max_batch_residual = 0.0;   // worst per-batch |<g_B, generator>| residual
    double covariance_residual = 0.0;  // |Cov gen| / (|Cov|_F |gen|)
};

// Verifies the low-rank structure of gradient noise: every batch gradient is
// orthogonal to the generator, and so is their sample covariance.
inline NoiseCheckResult noise_lowrank_check(const net::BuiltNetwork& network, const std::vector<double>& theta,
                                            const std::vector<data::Batch>& batches, const Descriptor& d) {
    if (batches.size() < 2) throw std::invalid_argument("noise_lowrank_check: need at least 2 batches");
    NoiseCheckResult res;
    const std::size_t m = theta.size();
    const std::size_t nb = batches.size();
    std::vector<std::vector<double>> grads;
    grads.reserve(nb);
    for (const auto& b : batches) {
        auto g = ad::gradient(network.objective(b), theta);
        res.max_batch_residual = std::max(res.max_batch_residual, std::abs(gradient_residual_from(d, theta, g)));
        grads.push_back(std::move(g));
    }
    std::vector<double> mean(m, 0.0);
    for (const auto& g : grads) axpy(1.0 / static_cast<double>(nb), g, mean);
    for (auto& g : grads) axpy(-1.0, mean, g);

    const auto gen = generator(d, theta);
    const double denom_n = static_cast<double>(nb - 1);
    std::vector<double> cov_gen(m, 0.0);
    for (const auto& c : grads) axpy(dot(c, gen) / denom_n, c, cov_gen);

    // |Cov|_F via the centered Gram matrix.
    double gram_f2 = 0.0;
    for (std::size_t a = 0; a < nb; ++a)
        for (std::size_t b = 0; b < nb; ++b) {
            const double gab = dot(grads[a], grads[b]);
            gram_f2 += gab * gab;
        }
    const double cov_fro = std::sqrt(gram_f2) / denom_n;
    res.covariance_residual = norm2(cov_gen) / (cov_fro * norm2(gen) + kResidualFloor);
    return res;
}

// Index sets exported as sorted [start, end) runs.
inline json ranges_json(std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());
    json runs = json::array();
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && idx[j + 1] == idx[j] + 1) ++j;
        runs.push_back({idx[i], idx[j] + 1});
        i = j + 1;
    }
    return runs;
}

inline json descriptors_to_json(const std::vector<Descriptor>& descs) {
    json out = json::array();
    for (const auto& d : descs) {
        json dj{{"kind", to_string(d.kind)}, {"label", d.label}, {"set_a", ranges_json(d.set_a)}};
        if (!d.set_b.empty()) dj["set_b"] = ranges_json(d.set_b);
        out.push_back(dj);
    }
    return out;
}

}  // namespace nml::sym
