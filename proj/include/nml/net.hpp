#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nml/autodiff.hpp"
#include "nml/dataset.hpp"
#include "nml/tensor.hpp"

namespace nml::net {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Activation { Relu, LeakyRelu, Linear, Tanh };

inline bool is_homogeneous(Activation a) { return a != Activation::Tanh; }

constexpr double kDefaultLeakySlope = 0.01;

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    bool bias = true;
};

struct ActivationLayer {
    Activation fn = Activation::Relu;
    double slope = kDefaultLeakySlope;  // leaky_relu only
};

struct BatchNormLayer {
    std::size_t features = 0;
    double epsilon = 0.0;  // 0 keeps the scale symmetry exact
    bool affine = true;
};

// Catalog-only convolution: channel counts are all the census needs, plus a
// kernel edge for the parameter tally. Not executable.
struct ConvMetaLayer {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
};

struct SoftmaxHead {};
struct MseHead {};

using Layer = std::variant<DenseLayer, ActivationLayer, BatchNormLayer, ConvMetaLayer, SoftmaxHead, MseHead>;

struct ArchSpec {
    std::string name;
    std::size_t input_dim = 0;
    int num_classes = 0;
    std::size_t census_channel_adjust = 0;  // added to conv channel tallies (see bundled VGG specs)
    std::vector<Layer> layers;

    bool has_conv_meta() const {
        for (const auto& l : layers)
            if (std::holds_alternative<ConvMetaLayer>(l)) return true;
        return false;
    }
};

namespace detail {
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
T get_req(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ConfigError(ctx + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(ctx + ": bad value for '" + std::string(key) + "'");
    }
}

template <class T>
T get_opt(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}
}  // namespace detail

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "linear") return Activation::Linear;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Linear: return "linear";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

inline ArchSpec arch_from_json(const json& j) {
    detail::check_keys(j, {"version", "name", "input_dim", "num_classes", "census_channel_adjust", "layers"},
                       "arch spec");
    const int version = detail::get_req<int>(j, "version", "arch spec");
    if (version != 1) throw ConfigError("arch spec: unsupported version " + std::to_string(version));
    ArchSpec spec;
    spec.name = detail::get_opt<std::string>(j, "name", "");
    spec.input_dim = detail::get_req<std::size_t>(j, "input_dim", "arch spec");
    spec.num_classes = detail::get_req<int>(j, "num_classes", "arch spec");
    spec.census_channel_adjust = detail::get_opt<std::size_t>(j, "census_channel_adjust", 0);
    if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty())
        throw ConfigError("arch spec: 'layers' must be a non-empty array");
    for (const auto& lj : j.at("layers")) {
        const auto kind = detail::get_req<std::string>(lj, "kind", "layer");
        if (kind == "dense") {
            detail::check_keys(lj, {"kind", "in", "out", "bias"}, "dense layer");
            DenseLayer d;
            d.in = detail::get_req<std::size_t>(lj, "in", "dense layer");
            d.out = detail::get_req<std::size_t>(lj, "out", "dense layer");
            d.bias = detail::get_opt<bool>(lj, "bias", true);
            if (d.in == 0 || d.out == 0) throw ConfigError("dense layer: zero width");
            spec.layers.emplace_back(d);
        } else if (kind == "activation") {
            detail::check_keys(lj, {"kind", "fn", "slope"}, "activation layer");
            ActivationLayer a;
            a.fn = activation_from_string(detail::get_req<std::string>(lj, "fn", "activation layer"));
            a.slope = detail::get_opt<double>(lj, "slope", kDefaultLeakySlope);
            spec.layers.emplace_back(a);
        } else if (kind == "batchnorm") {
            detail::check_keys(lj, {"kind", "features", "epsilon", "affine"}, "batchnorm layer");
            BatchNormLayer b;
            b.features = detail::get_req<std::size_t>(lj, "features", "batchnorm layer");
            b.epsilon = detail::get_opt<double>(lj, "epsilon", 0.0);
            b.affine = detail::get_opt<bool>(lj, "affine", true);
            if (b.features == 0) throw ConfigError("batchnorm layer: zero width");
            if (b.epsilon < 0.0) throw ConfigError("batchnorm layer: negative epsilon");
            spec.layers.emplace_back(b);
        } else if (kind == "conv_meta") {
            detail::check_keys(lj, {"kind", "in_channels", "out_channels", "kernel"}, "conv_meta layer");
            ConvMetaLayer c;
            c.in_channels = detail::get_req<std::size_t>(lj, "in_channels", "conv_meta layer");
            c.out_channels = detail::get_req<std::size_t>(lj, "out_channels", "conv_meta layer");
            c.kernel = detail::get_opt<std::size_t>(lj, "kernel", 3);
            if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0)
                throw ConfigError("conv_meta layer: zero geometry");
            spec.layers.emplace_back(c);
        } else if (kind == "softmax_head") {
            detail::check_keys(lj, {"kind"}, "softmax_head");
            spec.layers.emplace_back(SoftmaxHead{});
        } else if (kind == "mse_head") {
            detail::check_keys(lj, {"kind"}, "mse_head");
            spec.layers.emplace_back(MseHead{});
        } else {
            throw ConfigError("layer: unknown kind '" + kind + "'");
        }
    }
    // Heads are terminal and unique.
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const bool is_head = std::holds_alternative<SoftmaxHead>(spec.layers[i]) ||
                             std::holds_alternative<MseHead>(spec.layers[i]);
        if (is_head && i + 1 != spec.layers.size())
            throw ConfigError("arch spec: head must be the last layer");
    }
    return spec;
}

inline json arch_to_json(const ArchSpec& spec) {
    json j;
    j["version"] = 1;
    if (!spec.name.empty()) j["name"] = spec.name;
    j["input_dim"] = spec.input_dim;
    j["num_classes"] = spec.num_classes;
    if (spec.census_channel_adjust != 0) j["census_channel_adjust"] = spec.census_channel_adjust;
    j["layers"] = json::array();
    for (const auto& l : spec.layers) {
        json lj;
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            lj = {{"kind", "dense"}, {"in", d->in}, {"out", d->out}, {"bias", d->bias}};
        } else if (const auto* a = std::get_if<ActivationLayer>(&l)) {
            lj = {{"kind", "activation"}, {"fn", to_string(a->fn)}};
            if (a->fn == Activation::LeakyRelu) lj["slope"] = a->slope;
        } else if (const auto* b = std::get_if<BatchNormLayer>(&l)) {
            lj = {{"kind", "batchnorm"}, {"features", b->features}};
            if (b->epsilon != 0.0) lj["epsilon"] = b->epsilon;
            if (!b->affine) lj["affine"] = false;
        } else if (const auto* c = std::get_if<ConvMetaLayer>(&l)) {
            lj = {{"kind", "conv_meta"}, {"in_channels", c->in_channels}, {"out_channels", c->out_channels}};
            if (c->kernel != 3) lj["kernel"] = c->kernel;
        } else if (std::holds_alternative<SoftmaxHead>(l)) {
            lj = {{"kind", "softmax_head"}};
        } else {
            lj = {{"kind", "mse_head"}};
        }
        j["layers"].push_back(lj);
    }
    return j;
}

inline ArchSpec load_arch(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("arch spec: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("arch spec: invalid JSON in " + path + ": " + e.what());
    }
    return arch_from_json(j);
}

// ---------------------------------------------------------------------------
// Census
// ---------------------------------------------------------------------------

struct CensusBreakdown {
    std::size_t scale_features = 0;        // features of affine layers feeding a batchnorm
    std::size_t scale_adjust = 0;          // spec-declared channel adjustment
    std::size_t rescale_conv_channels = 0; // all conv channels
    std::size_t rescale_adjust = 0;
    std::size_t rescale_hidden_dense = 0;  // hidden inputs of dense layers across homogeneous interfaces
    std::size_t translation_columns = 0;   // one per class column of the softmax input
    std::size_t translation_bias = 0;
    std::size_t params_conv = 0;
    std::size_t params_batchnorm = 0;
    std::size_t params_dense = 0;
};

struct SymmetryCensus {
    std::size_t n_scale = 0;
    std::size_t n_rescale = 0;
    std::size_t n_translation = 0;
    std::size_t n_params = 0;
    CensusBreakdown breakdown;
};

// Static counting rules over the architecture spec. Scale groups live on affine layers
// directly preceding a batchnorm. Rescale groups live on conv channels and on
// hidden dense inputs whose producing interface is homogeneous. Translation
// groups count one per class column into the softmax plus one for its bias.
inline SymmetryCensus census(const ArchSpec& spec) {
    SymmetryCensus c;
    auto& b = c.breakdown;

    bool has_softmax = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Layer& l = spec.layers[i];
        if (const auto* conv = std::get_if<ConvMetaLayer>(&l)) {
            b.rescale_conv_channels += conv->out_channels;
            b.params_conv += conv->kernel * conv->kernel * conv->in_channels * conv->out_channels + conv->out_channels;
            if (i + 1 < spec.layers.size())
                if (const auto* bn = std::get_if<BatchNormLayer>(&spec.layers[i + 1]); bn && bn->features == conv->out_channels)
                    b.scale_features += conv->out_channels;
        } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
            b.params_dense += d->in * d->out + (d->bias ? d->out : 0);
            if (i + 1 < spec.layers.size())
                if (const auto* bn = std::get_if<BatchNormLayer>(&spec.layers[i + 1]); bn && bn->features == d->out)
                    b.scale_features += d->out;
            // Hidden inputs: some earlier affine layer produced this signal and
            // everything between that producer and this layer scales through.
            // An affine batchnorm is itself a per-feature producer; a bare one
            // absorbs scaling and breaks the pairing.
            bool hidden = false;
            bool homogeneous = true;
            for (std::size_t k = 0; k < i; ++k) {
                if (std::holds_alternative<DenseLayer>(spec.layers[k]) ||
                    std::holds_alternative<ConvMetaLayer>(spec.layers[k])) {
                    hidden = true;
                    homogeneous = true;
                } else if (const auto* ibn = std::get_if<BatchNormLayer>(&spec.layers[k])) {
                    if (ibn->affine) {
                        hidden = true;
                        homogeneous = true;
                    } else {
                        homogeneous = false;
                    }
                } else if (const auto* act = std::get_if<ActivationLayer>(&spec.layers[k])) {
                    if (!is_homogeneous(act->fn)) homogeneous = false;
                }
            }
            if (hidden && homogeneous) b.rescale_hidden_dense += d->in;
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
            if (bn->affine) b.params_batchnorm += 2 * bn->features;
        } else if (std::holds_alternative<SoftmaxHead>(l)) {
            has_softmax = true;
        }
    }

    if (b.scale_features > 0) b.scale_adjust = spec.census_channel_adjust;
    if (b.rescale_conv_channels > 0) b.rescale_adjust = spec.census_channel_adjust;
    if (has_softmax) {
        b.translation_columns = static_cast<std::size_t>(spec.num_classes);
        b.translation_bias = 1;
    }

    c.n_scale = b.scale_features + b.scale_adjust;
    c.n_rescale = b.rescale_conv_channels + b.rescale_adjust + b.rescale_hidden_dense;
    c.n_translation = b.translation_columns + b.translation_bias;
    c.n_params = b.params_conv + b.params_batchnorm + b.params_dense;
    return c;
}

inline json census_to_json(const SymmetryCensus& c) {
    return json{{"n_scale", c.n_scale},
                {"n_rescale", c.n_rescale},
                {"n_translation", c.n_translation},
                {"n_params", c.n_params},
                {"breakdown",
                 {{"scale", {{"features_feeding_batchnorm", c.breakdown.scale_features}, {"channel_adjust", c.breakdown.scale_adjust}}},
                  {"rescale",
                   {{"conv_channels", c.breakdown.rescale_conv_channels},
                    {"channel_adjust", c.breakdown.rescale_adjust},
                    {"hidden_dense_inputs", c.breakdown.rescale_hidden_dense}}},
                  {"translation", {{"columns", c.breakdown.translation_columns}, {"bias", c.breakdown.translation_bias}}},
                  {"params",
                   {{"conv", c.breakdown.params_conv},
                    {"batchnorm", c.breakdown.params_batchnorm},
                    {"dense", c.breakdown.params_dense}}}}}};
}

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

struct InitScheme {
    enum class Kind { KaimingNormal, Normal } kind = Kind::KaimingNormal;
    double std = 0.01;  // Normal only
};

struct DenseBind {
    std::size_t layer = 0;  // index into spec.layers
    std::size_t w_block = 0;
    std::size_t b_block = 0;  // valid only if bias
    bool bias = true;
    std::size_t in = 0;
    std::size_t out = 0;
};

struct BnBind {
    std::size_t layer = 0;
    std::size_t gamma_block = 0;
    std::size_t beta_block = 0;
    std::size_t features = 0;
    double epsilon = 0.0;
};

// An executable network: spec + parameter layout + seeded initial parameters.
// Parameters flow through the library as flat vectors; this object is
// immutable after build and shareable across threads.
struct BuiltNetwork {
    ArchSpec spec;
    ad::ParamLayout layout;
    std::vector<double> theta0;
    std::vector<DenseBind> dense;
    std::vector<BnBind> batchnorm;
    bool softmax_head = false;
    bool mse_head = false;

    std::size_t dim() const { return layout.dim(); }

    const DenseBind* dense_at_layer(std::size_t layer_index) const {
        for (const auto& d : dense)
            if (d.layer == layer_index) return &d;
        return nullptr;
    }

    const BnBind* bn_at_layer(std::size_t layer_index) const {
        for (const auto& b : batchnorm)
            if (b.layer == layer_index) return &b;
        return nullptr;
    }

    // Differentiable loss over a batch. The returned Objective references this
    // network; keep the network alive while using it. `capture` receives the
    // post-layer activations when provided (testing hook).
    ad::Objective objective(const data::Batch& batch, std::vector<Tensor>* capture = nullptr) const {
        ad::Objective obj;
        obj.layout = layout;
        const BuiltNetwork* net = this;
        obj.build = [net, batch, capture](ad::Tape& tape, const std::vector<ad::Var>& leaves) {
            return net->build_loss(tape, leaves, batch, capture);
        };
        return obj;
    }

    // Loss contribution of one example, evaluated with the whole batch so the
    // batch statistics (and with them the noise model) stay intact.
    ad::Objective example_objective(const data::Batch& batch, std::size_t example) const {
        ad::Objective obj;
        obj.layout = layout;
        const BuiltNetwork* net = this;
        obj.build = [net, batch, example](ad::Tape& tape, const std::vector<ad::Var>& leaves) {
            return net->build_loss(tape, leaves, batch, nullptr, static_cast<std::ptrdiff_t>(example));
        };
        return obj;
    }

    ad::Var build_loss(ad::Tape& tape, const std::vector<ad::Var>& leaves, const data::Batch& batch,
                       std::vector<Tensor>* capture = nullptr, std::ptrdiff_t example = -1) const {
        if (batch.x.cols != spec.input_dim) throw ShapeError("batch width does not match network input");
        const std::size_t n = batch.x.rows;
        if (n == 0) throw ShapeError("empty batch");
        ad::Var cur = tape.constant(batch.x);
        std::size_t di = 0, bi = 0;
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            const Layer& l = spec.layers[i];
            if (std::holds_alternative<DenseLayer>(l)) {
                const DenseBind& bind = dense[di++];
                cur = tape.matmul(cur, leaves[bind.w_block]);
                if (bind.bias) cur = tape.add(cur, tape.broadcast_rows(leaves[bind.b_block], n));
            } else if (const auto* a = std::get_if<ActivationLayer>(&l)) {
                switch (a->fn) {
                    case Activation::Relu: cur = tape.relu(cur); break;
                    case Activation::LeakyRelu: cur = tape.leaky_relu(cur, a->slope); break;
                    case Activation::Linear: break;
                    case Activation::Tanh: cur = tape.tanh_(cur); break;
                }
            } else if (std::holds_alternative<BatchNormLayer>(l)) {
                const BnBind& bind = batchnorm[bi++];
                ad::Var mu = tape.mean_rows(cur);
                ad::Var xc = tape.sub(cur, tape.broadcast_rows(mu, n));
                ad::Var var = tape.mean_rows(tape.mul(xc, xc));
                ad::Var sd = bind.epsilon > 0.0 ? tape.sqrt_(tape.add_scalar(var, bind.epsilon)) : tape.sqrt_(var);
                ad::Var xhat = tape.div(xc, tape.broadcast_rows(sd, n));
                cur = tape.add(tape.mul(xhat, tape.broadcast_rows(leaves[bind.gamma_block], n)),
                               tape.broadcast_rows(leaves[bind.beta_block], n));
            } else if (std::holds_alternative<SoftmaxHead>(l)) {
                cur = reduce_rows(tape, softmax_cross_entropy_rows(tape, cur, batch), n, example);
            } else if (std::holds_alternative<MseHead>(l)) {
                cur = reduce_rows(tape, mse_rows(tape, cur, batch), n, example);
            } else {
                throw ConfigError("conv_meta layer in executable network");
            }
            if (capture) capture->push_back(tape.value(cur));
        }
        if (tape.value(cur).size() != 1) throw ShapeError("network does not end in a scalar loss head");
        const double loss = tape.value(cur).data[0];
        if (!std::isfinite(loss)) throw NumericError("non-finite loss (degenerate batch, e.g. zero batchnorm variance)");
        return cur;
    }

  private:
    Tensor onehot(const data::Batch& batch) const {
        Tensor y(batch.x.rows, static_cast<std::size_t>(spec.num_classes), 0.0);
        for (std::size_t i = 0; i < batch.labels.size(); ++i) {
            const int lab = batch.labels[i];
            if (lab < 0 || lab >= spec.num_classes) throw ShapeError("label out of range");
            y.at(i, static_cast<std::size_t>(lab)) = 1.0;
        }
        return y;
    }

    // Per-row negative log likelihood (N x 1). Shift by the (constant) row
    // max; the shift cancels in the softmax so differentiating through it is
    // unnecessary and exact.
    ad::Var softmax_cross_entropy_rows(ad::Tape& tape, ad::Var logits, const data::Batch& batch) const {
        const std::size_t n = batch.x.rows;
        const std::size_t classes = static_cast<std::size_t>(spec.num_classes);
        if (tape.value(logits).cols != classes) throw ShapeError("softmax head width != num_classes");
        if (batch.labels.size() != n) throw ShapeError("labels missing");
        ad::Var m = tape.row_max(logits);
        ad::Var zs = tape.sub(logits, tape.broadcast_cols(m, classes));
        ad::Var lse = tape.log_(tape.sum_cols(tape.exp_(zs)));
        ad::Var picked = tape.sum_cols(tape.mul(zs, tape.constant(onehot(batch))));
        return tape.sub(lse, picked);
    }

    ad::Var mse_rows(ad::Tape& tape, ad::Var out, const data::Batch& batch) const {
        ad::Var r = tape.sub(out, tape.constant(onehot(batch)));
        return tape.scale(tape.sum_cols(tape.mul(r, r)), 0.5);
    }

    ad::Var reduce_rows(ad::Tape& tape, ad::Var rows, std::size_t n, std::ptrdiff_t example) const {
        if (example < 0) return tape.scale(tape.sum_all(rows), 1.0 / static_cast<double>(n));
        if (static_cast<std::size_t>(example) >= n) throw ShapeError("example index out of batch");
        Tensor sel(n, 1, 0.0);
        sel.data[static_cast<std::size_t>(example)] = 1.0;
        return tape.sum_all(tape.mul(rows, tape.constant(sel)));
    }
};

inline void validate_executable(const ArchSpec& spec) {
    if (spec.layers.empty()) throw ConfigError("arch spec: no layers");
    if (spec.has_conv_meta()) throw ConfigError("arch spec: conv_meta layers are not executable");
    if (spec.input_dim == 0) throw ConfigError("arch spec: input_dim required");
    if (spec.num_classes < 2) throw ConfigError("arch spec: num_classes must be >= 2");
    std::size_t width = spec.input_dim;
    bool head_seen = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Layer& l = spec.layers[i];
        if (head_seen) throw ConfigError("arch spec: layers after the head");
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            if (d->in != width) throw ConfigError("arch spec: dense input width mismatch at layer " + std::to_string(i));
            width = d->out;
        } else if (const auto* b = std::get_if<BatchNormLayer>(&l)) {
            if (b->features != width) throw ConfigError("arch spec: batchnorm width mismatch at layer " + std::to_string(i));
            if (!b->affine) throw ConfigError("arch spec: executable batchnorm requires affine parameters");
        } else if (std::holds_alternative<SoftmaxHead>(l) || std::holds_alternative<MseHead>(l)) {
            if (width != static_cast<std::size_t>(spec.num_classes))
                throw ConfigError("arch spec: head width != num_classes");
            head_seen = true;
        }
    }
    if (!head_seen) throw ConfigError("arch spec: missing loss head (softmax_head or mse_head)");
}

inline BuiltNetwork build(const ArchSpec& spec, std::uint64_t seed, const InitScheme& init = {}) {
    validate_executable(spec);
    BuiltNetwork net;
    net.spec = spec;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Layer& l = spec.layers[i];
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            DenseBind bind;
            bind.layer = i;
            bind.in = d->in;
            bind.out = d->out;
            bind.bias = d->bias;
            const std::string base = "layer" + std::to_string(i);
            bind.w_block = net.layout.add(base + ".weight", d->in, d->out);
            if (d->bias) bind.b_block = net.layout.add(base + ".bias", 1, d->out);
            net.dense.push_back(bind);
        } else if (const auto* b = std::get_if<BatchNormLayer>(&l)) {
            BnBind bind;
            bind.layer = i;
            bind.features = b->features;
            bind.epsilon = b->epsilon;
            const std::string base = "layer" + std::to_string(i);
            bind.gamma_block = net.layout.add(base + ".gamma", 1, b->features);
            bind.beta_block = net.layout.add(base + ".beta", 1, b->features);
            net.batchnorm.push_back(bind);
        } else if (std::holds_alternative<SoftmaxHead>(l)) {
            net.softmax_head = true;
        } else if (std::holds_alternative<MseHead>(l)) {
            net.mse_head = true;
        }
    }

    net.theta0.assign(net.layout.dim(), 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& d : net.dense) {
        const ad::ParamBlock& w = net.layout.blocks[d.w_block];
        const double std_dev = init.kind == InitScheme::Kind::KaimingNormal
                                   ? std::sqrt(2.0 / static_cast<double>(d.in))
                                   : init.std;
        for (std::size_t k = 0; k < w.size(); ++k) net.theta0[w.offset + k] = std_dev * gauss(rng);
        // biases stay zero
    }
    for (const auto& b : net.batchnorm) {
        const ad::ParamBlock& g = net.layout.blocks[b.gamma_block];
        for (std::size_t k = 0; k < g.size(); ++k) net.theta0[g.offset + k] = 1.0;
        // beta stays zero
    }
    return net;
}

}  // namespace nml::net
