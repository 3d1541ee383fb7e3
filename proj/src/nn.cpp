#include "defe/nn.hpp"

#include "defe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace defe::nn {

namespace {

constexpr double kSigmoidFloor = std::numeric_limits<double>::min();
constexpr double kSigmoidCeiling = 1.0 - 0x1.0p-53;

void apply_activation(Eigen::MatrixXd& z, Activation activation) {
    if (activation == Activation::sigmoid) {
        z = (1.0 / (1.0 + (-z.array()).exp())).max(kSigmoidFloor).min(kSigmoidCeiling).matrix();
    }
}

// Multiplies an upstream gradient by the activation derivative, expressed
// through the layer's output.
void scale_by_derivative(Eigen::MatrixXd& delta, const Eigen::MatrixXd& output, Activation activation) {
    if (activation == Activation::sigmoid) {
        delta.array() *= output.array() * (1.0 - output.array());
    }
}

Gradients backprop_delta_impl(const NetworkParams& net, const Eigen::MatrixXd& inputs,
                              const Activations& activations, Eigen::MatrixXd delta,
                              Eigen::MatrixXd* input_gradient) {
    Gradients grads;
    grads.layers.resize(net.layers.size());
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const Eigen::MatrixXd& below = l == 0 ? inputs : activations[l - 1];
        grads.layers[l].weights.noalias() = delta * below.transpose();
        grads.layers[l].bias = delta.rowwise().sum();
        if (l > 0 || input_gradient != nullptr) {
            Eigen::MatrixXd next = net.layers[l].weights.transpose() * delta;
            if (l > 0) {
                scale_by_derivative(next, activations[l - 1], net.layers[l - 1].activation);
                delta = std::move(next);
            } else {
                *input_gradient = std::move(next);
            }
        }
    }
    return grads;
}

void check_batch(const NetworkParams& net, const Batch& batch) {
    if (batch.inputs.rows() != net.input_dim) {
        throw NumericError("batch input dimension " + std::to_string(batch.inputs.rows()) +
                           " does not match network input " + std::to_string(net.input_dim));
    }
    if (batch.targets.cols() != batch.inputs.cols() || batch.targets.rows() != net.output_dim()) {
        throw NumericError("batch targets are not congruent with the network output");
    }
    if (batch.weights.size() != batch.inputs.cols()) {
        throw NumericError("batch weights must have one entry per example");
    }
}

// Weighted softplus form of binary cross-entropy evaluated on logits.
double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets, const Eigen::VectorXd& w) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        double example = 0.0;
        for (Eigen::Index k = 0; k < logits.rows(); ++k) {
            const double z = logits(k, j);
            const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
            example += softplus - targets(k, j) * z;
        }
        total += w(j) * example;
    }
    return total;
}

Eigen::MatrixXd output_logits(const NetworkParams& net, const Eigen::MatrixXd& inputs, const Activations& acts) {
    const std::size_t last = net.layers.size() - 1;
    const Eigen::MatrixXd& below = last == 0 ? inputs : acts[last - 1];
    Eigen::MatrixXd z = net.layers[last].weights * below;
    z.colwise() += net.layers[last].bias;
    return z;
}

}  // namespace

std::string to_string(Activation activation) {
    return activation == Activation::sigmoid ? "sigmoid" : "linear";
}

Activation activation_from_string(const std::string& text) {
    if (text == "sigmoid") return Activation::sigmoid;
    if (text == "linear") return Activation::linear;
    throw DataError("unknown activation tag '" + text + "'");
}

std::vector<Eigen::Index> NetworkParams::layer_sizes() const {
    std::vector<Eigen::Index> sizes;
    for (const auto& layer : layers) sizes.push_back(layer.out_dim());
    return sizes;
}

void NetworkParams::validate() const {
    Eigen::Index expected = input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.in_dim() != expected || layer.bias.size() != layer.out_dim()) {
            throw NumericError("layer " + std::to_string(l) + " shape is inconsistent with its neighbours");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw NumericError("layer " + std::to_string(l) + " has non-finite parameters");
        }
        expected = layer.out_dim();
    }
}

bool operator==(const LayerParams& a, const LayerParams& b) {
    return a.activation == b.activation && a.weights.rows() == b.weights.rows() &&
           a.weights.cols() == b.weights.cols() && a.bias.size() == b.bias.size() && a.weights == b.weights &&
           a.bias == b.bias;
}

bool operator==(const NetworkParams& a, const NetworkParams& b) {
    return a.input_dim == b.input_dim && a.layers == b.layers;
}

Gradients Gradients::zeros_like(const NetworkParams& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
        g.layers.push_back({Eigen::MatrixXd::Zero(layer.out_dim(), layer.in_dim()),
                            Eigen::VectorXd::Zero(layer.out_dim())});
    }
    return g;
}

Gradients& Gradients::operator*=(double factor) {
    for (auto& layer : layers) {
        layer.weights *= factor;
        layer.bias *= factor;
    }
    return *this;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.layers.size() != layers.size()) {
        throw NumericError("gradient structures are not congruent");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights += other.layers[l].weights;
        layers[l].bias += other.layers[l].bias;
    }
    return *this;
}

double Gradients::max_abs() const {
    double out = 0.0;
    for (const auto& layer : layers) {
        if (layer.weights.size() > 0) out = std::max(out, layer.weights.cwiseAbs().maxCoeff());
        if (layer.bias.size() > 0) out = std::max(out, layer.bias.cwiseAbs().maxCoeff());
    }
    return out;
}

NetworkParams init_network(Eigen::Index input_dim, std::span<const Eigen::Index> sizes,
                           std::span<const Activation> activations, Rng& rng, const InitOptions& options) {
    if (sizes.size() != activations.size()) {
        throw ConfigError("one activation per layer is required");
    }
    NetworkParams net;
    net.input_dim = input_dim;
    Eigen::Index fan_in = input_dim;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        const Eigen::Index fan_out = sizes[l];
        if (fan_out <= 0 || fan_in <= 0) {
            throw ConfigError("layer widths must be positive");
        }
        LayerParams layer;
        layer.activation = activations[l];
        layer.weights.resize(fan_out, fan_in);
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        const bool zero = options.zero_output_layer && l + 1 == sizes.size();
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        if (layer.activation == Activation::sigmoid) bound *= 4.0;
        // Column-major fill order is part of the determinism contract.
        for (Eigen::Index c = 0; c < fan_in; ++c) {
            for (Eigen::Index r = 0; r < fan_out; ++r) {
                layer.weights(r, c) = zero ? 0.0 : rng.uniform(-bound, bound);
            }
        }
        net.layers.push_back(std::move(layer));
        fan_in = fan_out;
    }
    return net;
}

Activations forward(const NetworkParams& net, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != net.input_dim) {
        throw NumericError("input dimension " + std::to_string(inputs.rows()) + " does not match network input " +
                           std::to_string(net.input_dim));
    }
    Activations acts;
    acts.reserve(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Eigen::MatrixXd& below = l == 0 ? inputs : acts.back();
        Eigen::MatrixXd z = net.layers[l].weights * below;
        z.colwise() += net.layers[l].bias;
        apply_activation(z, net.layers[l].activation);
        acts.push_back(std::move(z));
    }
    return acts;
}

std::vector<Eigen::VectorXd> forward(const NetworkParams& net, const Eigen::VectorXd& input) {
    const Activations acts = forward(net, Eigen::MatrixXd(input));
    std::vector<Eigen::VectorXd> out;
    out.reserve(acts.size());
    for (const auto& a : acts) out.emplace_back(a.col(0));
    return out;
}

Eigen::MatrixXd predict(const NetworkParams& net, const Eigen::MatrixXd& inputs) {
    if (net.layers.empty()) return inputs;
    Activations acts = forward(net, inputs);
    return std::move(acts.back());
}

Gradients backprop(const NetworkParams& net, const Eigen::MatrixXd& inputs, const Activations& activations,
                   const Eigen::MatrixXd& output_gradient, Eigen::MatrixXd* input_gradient) {
    if (activations.size() != net.layers.size() || net.layers.empty()) {
        throw NumericError("activations do not match the network depth");
    }
    if (output_gradient.rows() != net.output_dim() || output_gradient.cols() != inputs.cols()) {
        throw NumericError("upstream gradient is not congruent with the network output");
    }
    Eigen::MatrixXd delta = output_gradient;
    scale_by_derivative(delta, activations.back(), net.layers.back().activation);
    return backprop_delta_impl(net, inputs, activations, std::move(delta), input_gradient);
}

Gradients backprop_delta(const NetworkParams& net, const Eigen::MatrixXd& inputs, const Activations& activations,
                         Eigen::MatrixXd output_delta, Eigen::MatrixXd* input_gradient) {
    if (activations.size() != net.layers.size() || net.layers.empty()) {
        throw NumericError("activations do not match the network depth");
    }
    if (output_delta.rows() != net.output_dim() || output_delta.cols() != inputs.cols()) {
        throw NumericError("output delta is not congruent with the network output");
    }
    return backprop_delta_impl(net, inputs, activations, std::move(output_delta), input_gradient);
}

double loss_value(const NetworkParams& net, const Batch& batch, LossKind kind) {
    check_batch(net, batch);
    const double total_weight = batch.weights.sum();
    if (total_weight == 0.0) return 0.0;
    const Activations acts = forward(net, batch.inputs);
    switch (kind) {
        case LossKind::weighted_cross_entropy:
            if (net.layers.back().activation != Activation::sigmoid) {
                throw NumericError("cross-entropy loss requires a sigmoid output layer");
            }
            return cross_entropy(output_logits(net, batch.inputs, acts), batch.targets, batch.weights) / total_weight;
        case LossKind::squared_reconstruction: {
            const Eigen::MatrixXd diff = acts.back() - batch.targets;
            return 0.5 * (diff.colwise().squaredNorm().transpose().array() * batch.weights.array()).sum() /
                   total_weight;
        }
    }
    throw NumericError("unknown loss kind");
}

LossAndGradients loss_and_gradients(const NetworkParams& net, const Batch& batch, LossKind kind) {
    check_batch(net, batch);
    if (net.layers.empty()) {
        throw NumericError("network has no layers");
    }
    const double total_weight = batch.weights.sum();
    if (total_weight == 0.0) {
        return {0.0, Gradients::zeros_like(net)};
    }
    const Activations acts = forward(net, batch.inputs);
    const Eigen::RowVectorXd scale = (batch.weights / total_weight).transpose();
    LossAndGradients out;
    switch (kind) {
        case LossKind::weighted_cross_entropy: {
            if (net.layers.back().activation != Activation::sigmoid) {
                throw NumericError("cross-entropy loss requires a sigmoid output layer");
            }
            out.loss = cross_entropy(output_logits(net, batch.inputs, acts), batch.targets, batch.weights) /
                       total_weight;
            // d/dz of the sigmoid cross-entropy is (p - y).
            Eigen::MatrixXd delta = acts.back() - batch.targets;
            delta.array().rowwise() *= scale.array();
            out.gradients = backprop_delta_impl(net, batch.inputs, acts, std::move(delta), nullptr);
            return out;
        }
        case LossKind::squared_reconstruction: {
            Eigen::MatrixXd diff = acts.back() - batch.targets;
            out.loss = 0.5 * (diff.colwise().squaredNorm().array() * scale.array()).sum();
            diff.array().rowwise() *= scale.array();
            out.gradients = backprop(net, batch.inputs, acts, diff);
            return out;
        }
    }
    throw NumericError("unknown loss kind");
}

}  // namespace defe::nn
