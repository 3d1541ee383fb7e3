#pragma once

// Central finite differences against the analytic gradients, shared by the
// unit tests and the acceptance binary.

#include "defe/efe.hpp"
#include "defe/nn.hpp"
#include "defe/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace defe::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsFloor = 1e-7;

struct Result {
    double relative = 0.0;  // worst relative error, entries under the floor count as exact
    double absolute = 0.0;  // worst absolute error over every entry
    std::size_t entries = 0;
};

inline Result compare(const nn::NetworkParams& net, const nn::Gradients& analytic,
                      const std::function<double(const nn::NetworkParams&)>& objective) {
    Result worst;
    nn::NetworkParams probe = net;
    auto check = [&](double& slot, double a) {
        const double saved = slot;
        slot = saved + kStep;
        const double up = objective(probe);
        slot = saved - kStep;
        const double down = objective(probe);
        slot = saved;
        const double numeric = (up - down) / (2.0 * kStep);
        const double abs_err = std::abs(a - numeric);
        ++worst.entries;
        worst.absolute = std::max(worst.absolute, abs_err);
        if (abs_err < kAbsFloor) return;
        worst.relative = std::max(worst.relative, abs_err / std::max(std::abs(a), std::abs(numeric)));
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& layer = probe.layers[l];
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
            check(layer.weights.data()[i], analytic.layers[l].weights.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            check(layer.bias.data()[i], analytic.layers[l].bias.data()[i]);
    }
    return worst;
}

inline Result loss_error(const nn::NetworkParams& net, const nn::Batch& batch, nn::LossKind kind) {
    const auto analytic = nn::loss_and_gradients(net, batch, kind).gradients;
    return compare(net, analytic, [&](const nn::NetworkParams& p) { return nn::loss_value(p, batch, kind); });
}

/// The gated gradient is gate * d(upstream . H(x)) / dtheta.
inline Result gated_error(const nn::NetworkParams& net, double gate, const Eigen::VectorXd& input,
                          const Eigen::VectorXd& upstream) {
    const auto analytic = efe::gated_gradient(net, gate, input, upstream);
    return compare(net, analytic, [&](const nn::NetworkParams& p) {
        const Eigen::MatrixXd out = nn::predict(p, input);
        return gate * upstream.dot(out.col(0));
    });
}

struct RandomNet {
    nn::NetworkParams net;
    nn::Batch cross_entropy;
    nn::Batch reconstruction;
};

/// 2-5 layers, widths up to 30, inner activations mixed, sigmoid output.
inline RandomNet random_net(Rng& rng) {
    const std::size_t depth = 2 + rng.index(4);
    const Eigen::Index input_dim = 1 + static_cast<Eigen::Index>(rng.index(30));
    std::vector<Eigen::Index> sizes;
    std::vector<nn::Activation> acts;
    for (std::size_t l = 0; l < depth; ++l) {
        sizes.push_back(l + 1 == depth ? 1 + static_cast<Eigen::Index>(rng.index(3))
                                       : 1 + static_cast<Eigen::Index>(rng.index(30)));
        acts.push_back(l + 1 == depth || rng.index(3) ? nn::Activation::sigmoid : nn::Activation::linear);
    }
    RandomNet r;
    r.net = nn::init_network(input_dim, sizes, acts, rng);
    for (auto& layer : r.net.layers)
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.5, 0.5);

    const Eigen::Index n = 5;
    Eigen::MatrixXd x(input_dim, n);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = rng.uniform(0.1, 2.0);
    Eigen::MatrixXd y(sizes.back(), n);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.index(2) ? 1.0 : 0.0;
    Eigen::MatrixXd t(sizes.back(), n);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(0.0, 1.0);
    r.cross_entropy = {x, y, w};
    r.reconstruction = {x, t, w};
    return r;
}

}  // namespace defe::gradcheck
