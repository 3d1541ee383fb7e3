#include "defe/efe.hpp"
#include "defe/errors.hpp"
#include "gradient_check.hpp"

#include <doctest.h>

#include <cmath>

using namespace defe;
using namespace defe::efe;

namespace {

struct Case {
    nn::NetworkParams net;
    Eigen::VectorXd input;
    Eigen::VectorXd upstream;
};

Case random_case(std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<Eigen::Index> sizes{9, 6, 4};
    const std::vector<nn::Activation> acts(3, nn::Activation::sigmoid);
    Case c{nn::init_network(5, sizes, acts, rng), Eigen::VectorXd(5), Eigen::VectorXd(4)};
    for (Eigen::Index i = 0; i < 5; ++i) c.input(i) = rng.normal();
    for (Eigen::Index i = 0; i < 4; ++i) c.upstream(i) = rng.normal();
    return c;
}

nn::Gradients plain(const Case& c) {
    const Eigen::MatrixXd x = c.input;
    return nn::backprop(c.net, x, nn::forward(c.net, x), Eigen::MatrixXd(c.upstream));
}

bool same(const nn::Gradients& a, const nn::Gradients& b) {
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].weights != b.layers[l].weights || a.layers[l].bias != b.layers[l].bias) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("gate 1 reproduces backprop bit for bit") {
    const auto c = random_case(1);
    CHECK(same(gated_gradient(c.net, 1.0, c.input, c.upstream), plain(c)));
}

TEST_CASE("gate 0 freezes the learner") {
    const auto c = random_case(2);
    CHECK(gated_gradient(c.net, 0.0, c.input, c.upstream).max_abs() == 0.0);
}

TEST_CASE("gate 0.5 halves the gradient exactly") {
    const auto c = random_case(3);
    auto half = plain(c);
    half *= 0.5;
    CHECK(same(gated_gradient(c.net, 0.5, c.input, c.upstream), half));
}

TEST_CASE("gated gradient is linear in the gate") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto c = random_case(100 + static_cast<std::uint64_t>(t));
        const double g = rng.uniform(0.0, 3.0);
        const double a = rng.uniform(0.0, 3.0);
        auto scaled = gated_gradient(c.net, g, c.input, c.upstream);
        scaled *= a;
        const auto direct = gated_gradient(c.net, a * g, c.input, c.upstream);
        for (std::size_t l = 0; l < scaled.layers.size(); ++l) {
            const double diff = (scaled.layers[l].weights - direct.layers[l].weights).cwiseAbs().maxCoeff();
            const double mag = scaled.layers[l].weights.cwiseAbs().maxCoeff();
            CHECK(diff <= 4e-16 * mag);
        }
    }
}

TEST_CASE("gate is checked, never part of the forward pass") {
    const auto c = random_case(5);
    CHECK_THROWS_AS(gated_gradient(c.net, -0.1, c.input, c.upstream), NumericError);
    CHECK_THROWS_AS(gated_gradient(c.net, std::nan(""), c.input, c.upstream), NumericError);
    const Eigen::MatrixXd before = nn::predict(c.net, Eigen::MatrixXd(c.input));
    gated_gradient(c.net, 2.0, c.input, c.upstream);
    CHECK(nn::predict(c.net, Eigen::MatrixXd(c.input)) == before);
}

TEST_CASE("batch gated gradient sums per-example gated gradients") {
    Rng rng(6);
    const auto c = random_case(6);
    Eigen::MatrixXd x(5, 3), up(4, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = rng.normal();
    const Eigen::Vector3d gates(0.2, 0.0, 1.7);
    const auto batch = gated_gradient(c.net, gates, x, up);
    auto sum = nn::Gradients::zeros_like(c.net);
    for (Eigen::Index j = 0; j < 3; ++j) sum += gated_gradient(c.net, gates(j), x.col(j), up.col(j));
    for (std::size_t l = 0; l < sum.layers.size(); ++l) {
        CHECK((sum.layers[l].weights - batch.layers[l].weights).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((sum.layers[l].bias - batch.layers[l].bias).cwiseAbs().maxCoeff() < 1e-14);
    }
    CHECK_THROWS_AS(gated_gradient(c.net, Eigen::VectorXd::Ones(2), x, up), NumericError);
}

TEST_CASE("gated gradient against finite differences") {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
        const auto r = gradcheck::random_net(rng);
        Eigen::VectorXd x(r.net.input_dim), up(r.net.output_dim());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
        for (Eigen::Index i = 0; i < up.size(); ++i) up(i) = rng.normal();
        CHECK(gradcheck::gated_error(r.net, rng.uniform(0.0, 2.0), x, up).relative < gradcheck::kRelTol);
    }
}

TEST_CASE("efe_loss examples") {
    CHECK(efe_loss(0.5, 0.3, 2.0, 0.1) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(efe_loss(0.5, 0.3, 0.0, 0.1) == 0.5);
    CHECK(efe_loss(0.5, 0.05, 2.0, 0.1) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("gated ensemble demo lowers L_EFE on toy data") {
    Rng rng(8);
    nn::LabeledSet set;
    set.inputs.resize(2, 200);
    set.targets.resize(200);
    set.weights = Eigen::VectorXd::Ones(200);
    for (Eigen::Index j = 0; j < 200; ++j) {
        const bool sig = j % 2 == 0;
        set.inputs(0, j) = (sig ? 1.0 : -1.0) + 0.5 * rng.normal();
        set.inputs(1, j) = rng.normal();
        set.targets(j) = sig;
    }
    auto model = init_gated_ensemble({}, 3);
    const auto before = gated_ensemble_losses(model, set, 1.0, 0.1);
    CHECK(before.total == doctest::Approx(efe_loss(before.base, before.gate, 1.0, 0.1)));
    const auto trace = train_gated_ensemble(model, set, {});
    REQUIRE(trace.size() == 50);
    CHECK(trace.back() < before.total);
    const auto scores = gated_ensemble_scores(model, set.inputs);
    CHECK((scores.array() > 0.0).all());
    CHECK((scores.array() < 1.0).all());

    auto again = init_gated_ensemble({}, 3);
    CHECK(train_gated_ensemble(again, set, {}) == trace);
}
