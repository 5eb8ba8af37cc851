#include <catch2/catch.hpp>

#include <random>

#include "nml/dataset.hpp"
#include "nml/net.hpp"
#include "nml/symmetry.hpp"

using namespace nml;

namespace {

net::ArchSpec bn_mlp_spec(double bn_eps = 0.0, net::Activation act = net::Activation::Relu) {
    net::ArchSpec spec;
    spec.input_dim = 10;
    spec.num_classes = 5;
    spec.layers = {net::DenseLayer{10, 12},
                   net::BatchNormLayer{12, bn_eps, true},
                   net::ActivationLayer{act, 0.01},
                   net::DenseLayer{12, 8},
                   net::ActivationLayer{act, 0.01},
                   net::DenseLayer{8, 5},
                   net::SoftmaxHead{}};
    return spec;
}

}  // namespace

TEST_CASE("generator fields on toy vectors", "[symmetry]") {
    const std::vector<double> theta{5.0, 7.0, 9.0};
    sym::Descriptor tr{sym::Kind::Translation, {0, 1}, {}, "t"};
    CHECK(sym::generator(tr, theta) == std::vector<double>{1.0, 1.0, 0.0});
    sym::Descriptor sc{sym::Kind::Scale, {0, 2}, {}, "s"};
    CHECK(sym::generator(sc, theta) == std::vector<double>{5.0, 0.0, 9.0});
    sym::Descriptor rs{sym::Kind::Rescale, {0}, {1}, "r"};
    CHECK(sym::generator(rs, theta) == std::vector<double>{5.0, -7.0, 0.0});
}

TEST_CASE("conserved quantities on toy vectors", "[symmetry]") {
    CHECK(sym::conserved_quantity({sym::Kind::Translation, {0, 1}, {}, ""}, {5.0, 7.0, 9.0}) == 12.0);
    CHECK(sym::conserved_quantity({sym::Kind::Scale, {0, 2}, {}, ""}, {3.0, 1.0, 4.0}) == 25.0);
    CHECK(sym::conserved_quantity({sym::Kind::Rescale, {0, 1}, {2}, ""}, {3.0, 4.0, 5.0}) == 0.0);
}

TEST_CASE("generator support stays inside the descriptor sets", "[symmetry]") {
    const auto network = net::build(bn_mlp_spec(), 17);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> theta(network.dim());
    for (auto& v : theta) v = gauss(rng);
    for (const auto& d : sym::enumerate_groups(network)) {
        auto gen = sym::generator(d, theta);
        for (std::size_t i : d.set_a) gen[i] = 0.0;
        for (std::size_t i : d.set_b) gen[i] = 0.0;
        for (double v : gen) REQUIRE(v == 0.0);
    }
}

TEST_CASE("enumeration of a plain relu MLP", "[symmetry]") {
    net::ArchSpec spec;
    spec.input_dim = 4;
    spec.num_classes = 3;
    spec.layers = {net::DenseLayer{4, 8}, net::ActivationLayer{net::Activation::Relu, 0.01}, net::DenseLayer{8, 3},
                   net::SoftmaxHead{}};
    const auto network = net::build(spec, 0);
    const auto descs = sym::enumerate_groups(network);
    std::size_t rescale = 0, translation = 0, scale = 0;
    for (const auto& d : descs) {
        if (d.kind == sym::Kind::Rescale) ++rescale;
        if (d.kind == sym::Kind::Translation) ++translation;
        if (d.kind == sym::Kind::Scale) ++scale;
    }
    CHECK(rescale == 8);    // one per hidden neuron
    CHECK(scale == 0);      // no batchnorm
    // one per input column of the head weight matrix plus the bias row
    CHECK(translation == 8 + 1);
    // rescale sets pair incoming column + bias against the outgoing row
    for (const auto& d : descs)
        if (d.kind == sym::Kind::Rescale) {
            CHECK(d.set_a.size() == 4 + 1);
            CHECK(d.set_b.size() == 3);
        }
}

TEST_CASE("single batchnorm neuron yields one scale group", "[symmetry]") {
    net::ArchSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    spec.layers = {net::DenseLayer{2, 1}, net::BatchNormLayer{1, 0.0, true},
                   net::ActivationLayer{net::Activation::Relu, 0.01}, net::DenseLayer{1, 2}, net::SoftmaxHead{}};
    const auto network = net::build(spec, 0);
    std::size_t scale = 0;
    for (const auto& d : sym::enumerate_groups(network))
        if (d.kind == sym::Kind::Scale) {
            ++scale;
            CHECK(d.set_a.size() == 3);  // w1, w2, bias
        }
    CHECK(scale == 1);
}

TEST_CASE("hidden linear neurons still carry rescale symmetry", "[symmetry]") {
    net::ArchSpec spec;
    spec.input_dim = 4;
    spec.num_classes = 3;
    spec.layers = {net::DenseLayer{4, 6}, net::ActivationLayer{net::Activation::Linear, 0.01}, net::DenseLayer{6, 3},
                   net::MseHead{}};
    const auto network = net::build(spec, 1);
    const auto descs = sym::enumerate_groups(network);
    std::size_t rescale = 0;
    for (const auto& d : descs)
        if (d.kind == sym::Kind::Rescale) ++rescale;
    CHECK(rescale == 6);
    // no softmax: no translation groups
    for (const auto& d : descs) CHECK(d.kind != sym::Kind::Translation);

    // and the symmetry is real: residuals vanish on a random batch
    const auto ds = data::synthetic_clusters(3, 4, 16, 3);
    const auto batch = ds.full_batch();
    for (const auto& d : descs)
        CHECK(std::abs(sym::gradient_residual(network, network.theta0, batch, d)) <= 1e-8);
}

TEST_CASE("residual identities hold for every enumerated group", "[symmetry]") {
    const auto network = net::build(bn_mlp_spec(), 23);
    const auto ds = data::synthetic_clusters(5, 10, 48, 11);
    std::mt19937_64 rng(41);
    std::vector<std::size_t> idx(24);
    for (auto& i : idx) i = rng() % ds.size();
    const auto batch = ds.batch(idx);
    const auto obj = network.objective(batch);
    const auto& theta = network.theta0;
    const auto g = ad::gradient(obj, theta);

    const auto descs = sym::enumerate_groups(network);
    REQUIRE(!descs.empty());
    for (const auto& d : descs) {
        INFO(d.label);
        CHECK(std::abs(sym::gradient_residual_from(d, theta, g)) <= 1e-8);
        CHECK(std::abs(sym::conservation_condition_from(d, theta, g)) <= 1e-8);
        const auto h_gen = ad::hvp(obj, theta, sym::generator(d, theta));
        CHECK(sym::hessian_residual_from(d, g, h_gen) <= 1e-7);
        if (d.kind == sym::Kind::Scale) {
            // theta_A^T H theta_A = 0 (quadratic-form corollary)
            const auto gen = sym::generator(d, theta);
            const double q = dot(gen, h_gen);
            CHECK(std::abs(q) <= 1e-7 * norm2(gen) * (norm2(h_gen) + 1e-30));
        }
    }
}

TEST_CASE("equivariance of loss and transported gradient", "[symmetry]") {
    const auto network = net::build(bn_mlp_spec(), 29);
    const auto ds = data::synthetic_clusters(5, 10, 32, 12);
    const auto batch = ds.full_batch();
    const auto& theta = network.theta0;
    const auto descs = sym::enumerate_groups(network);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> shift(-3.0, 3.0);
    std::uniform_real_distribution<double> log_gain(std::log(0.25), std::log(4.0));

    for (const auto& d : descs) {
        for (int rep = 0; rep < 20; ++rep) {
            const double alpha = d.kind == sym::Kind::Translation ? shift(rng) : std::exp(log_gain(rng));
            const auto gaps = sym::equivariance_check(network, theta, batch, d, alpha);
            INFO(d.label << " alpha " << alpha);
            CHECK(gaps.loss_gap <= 1e-9);
            CHECK(gaps.gradient_gap <= 1e-8);
        }
        // identity element: exact equality (alpha = 0 shifts, alpha = 1 gains)
        const double id = d.kind == sym::Kind::Translation ? 0.0 : 1.0;
        const auto id_gaps = sym::equivariance_check(network, theta, batch, d, id);
        CHECK(id_gaps.loss_gap == 0.0);
        CHECK(id_gaps.gradient_gap == 0.0);
    }

    // specific values from the contract
    for (const auto& d : descs)
        if (d.kind == sym::Kind::Translation) {
            CHECK(sym::equivariance_check(network, theta, batch, d, 2.5).loss_gap <= 1e-10);
            break;
        }
    for (const auto& d : descs)
        if (d.kind == sym::Kind::Scale) {
            const auto gaps = sym::equivariance_check(network, theta, batch, d, 3.0);
            CHECK(gaps.loss_gap <= 1e-9);
            CHECK(gaps.gradient_gap <= 1e-8);
            break;
        }
    // invalid group element
    for (const auto& d : descs)
        if (d.kind == sym::Kind::Scale) {
            REQUIRE_THROWS_AS(sym::equivariance_check(network, theta, batch, d, -2.0), std::invalid_argument);
            break;
        }
}

TEST_CASE("tanh breaks rescale symmetry (negative control)", "[symmetry]") {
    const auto network = net::build(bn_mlp_spec(0.0, net::Activation::Tanh), 31);
    const auto ds = data::synthetic_clusters(5, 10, 32, 13);
    const auto batch = ds.full_batch();

    // regular enumeration refuses tanh neurons
    for (const auto& d : sym::enumerate_groups(network)) CHECK(d.kind != sym::Kind::Rescale);

    sym::EnumerateOptions opt;
    opt.include_nonhomogeneous = true;
    double worst = 0.0;
    for (const auto& d : sym::enumerate_groups(network, opt))
        if (d.kind == sym::Kind::Rescale)
            worst = std::max(worst, std::abs(sym::gradient_residual(network, network.theta0, batch, d)));
    CHECK(worst >= 1e-3);
}

TEST_CASE("batchnorm epsilon fuzz degrades scale symmetry (negative control)", "[symmetry]") {
    const auto network = net::build(bn_mlp_spec(1e-3), 37);
    // small inputs keep the pre-normalization variance comparable to epsilon
    const auto ds = data::synthetic_clusters(5, 10, 32, 14, 0.02, 0.02);
    const auto batch = ds.full_batch();
    double worst = 0.0;
    for (const auto& d : sym::enumerate_groups(network))
        if (d.kind == sym::Kind::Scale)
            worst = std::max(worst, std::abs(sym::gradient_residual(network, network.theta0, batch, d)));
    CHECK(worst >= 1e-3);

    // and the exact-epsilon network on the same data stays clean
    const auto exact = net::build(bn_mlp_spec(0.0), 37);
    double worst_exact = 0.0;
    for (const auto& d : sym::enumerate_groups(exact))
        if (d.kind == sym::Kind::Scale)
            worst_exact = std::max(worst_exact, std::abs(sym::gradient_residual(exact, exact.theta0, batch, d)));
    CHECK(worst_exact <= 1e-8);
}

TEST_CASE("gradient noise is annihilated by the generators", "[symmetry]") {
    const auto network = net::build(bn_mlp_spec(), 43);
    const auto ds = data::synthetic_clusters(5, 10, 128, 15);
    std::mt19937_64 rng(3);
    std::vector<data::Batch> batches;
    for (int b = 0; b < 16; ++b) {
        std::vector<std::size_t> idx(16);
        for (auto& i : idx) i = rng() % ds.size();
        batches.push_back(ds.batch(idx));
    }
    for (const auto& d : sym::enumerate_groups(network)) {
        const auto res = sym::noise_lowrank_check(network, network.theta0, batches, d);
        INFO(d.label);
        CHECK(res.max_batch_residual <= 1e-10);
        CHECK(res.covariance_residual <= 1e-8);
    }
    // validation: a single batch is rejected
    const auto one = std::vector<data::Batch>{batches[0]};
    const auto descs = sym::enumerate_groups(network);
    REQUIRE_THROWS_AS(sym::noise_lowrank_check(network, network.theta0, one, descs[0]), std::invalid_argument);
}

TEST_CASE("descriptor JSON uses compact index ranges", "[symmetry]") {
    sym::Descriptor d{sym::Kind::Rescale, {4, 5, 6, 9}, {11, 12}, "hidden neuron 0 layer 1"};
    const auto j = sym::descriptors_to_json({d});
    REQUIRE(j.size() == 1);
    CHECK(j[0]["kind"] == "rescale");
    CHECK(j[0]["set_a"].size() == 2);  // [4,7) and [9,10)
    CHECK(j[0]["set_a"][0][0] == 4);
    CHECK(j[0]["set_a"][0][1] == 7);
    CHECK(j[0]["set_b"][0][0] == 11);
    CHECK(j[0]["set_b"][0][1] == 13);
}
