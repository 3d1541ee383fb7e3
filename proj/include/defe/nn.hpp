#pragma once

#include "defe/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace defe::nn {

enum class Activation : std::uint8_t { sigmoid, linear };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& text);

struct LayerParams {
    Eigen::MatrixXd weights;  // out_dim x in_dim
    Eigen::VectorXd bias;     // out_dim
    Activation activation = Activation::sigmoid;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }
};

struct NetworkParams {
    Eigen::Index input_dim = 0;
    std::vector<LayerParams> layers;

    Eigen::Index output_dim() const { return layers.empty() ? input_dim : layers.back().out_dim(); }
    std::vector<Eigen::Index> layer_sizes() const;
    /// Throws NumericError on inconsistent shapes or non-finite entries.
    void validate() const;
};

bool operator==(const LayerParams& a, const LayerParams& b);
bool operator==(const NetworkParams& a, const NetworkParams& b);

/// Gradient (or velocity) of one layer, congruent with LayerParams.
struct LayerGradient {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

struct Gradients {
    std::vector<LayerGradient> layers;

    static Gradients zeros_like(const NetworkParams& net);
    Gradients& operator*=(double factor);
    Gradients& operator+=(const Gradients& other);
    double max_abs() const;
};

struct InitOptions {
    /// Zero the output layer so an untrained net scores exactly 0.5.
    bool zero_output_layer = false;
};

/// Uniform init in +-4 sqrt(6/(fan_in+fan_out)) for sigmoid layers, without
/// the factor 4 for linear layers; biases start at zero.
NetworkParams init_network(Eigen::Index input_dim, std::span<const Eigen::Index> sizes,
                           std::span<const Activation> activations, Rng& rng,
                           const InitOptions& options = {});

/// Per-layer activations for a batch whose examples are columns; one entry
/// per layer, the last being the network output.
using Activations = std::vector<Eigen::MatrixXd>;

Activations forward(const NetworkParams& net, const Eigen::MatrixXd& inputs);
std::vector<Eigen::VectorXd> forward(const NetworkParams& net, const Eigen::VectorXd& input);
/// Output only.
Eigen::MatrixXd predict(const NetworkParams& net, const Eigen::MatrixXd& inputs);

/// Backpropagates dLoss/dOutput (same shape as the output batch) through the
/// stored activations. When `input_gradient` is non-null it receives
/// dLoss/dInput.
Gradients backprop(const NetworkParams& net, const Eigen::MatrixXd& inputs, const Activations& activations,
                   const Eigen::MatrixXd& output_gradient, Eigen::MatrixXd* input_gradient = nullptr);

/// Same as backprop, but starting from dLoss/d(pre-activation) of the output
/// layer instead of dLoss/dOutput.
Gradients backprop_delta(const NetworkParams& net, const Eigen::MatrixXd& inputs, const Activations& activations,
                         Eigen::MatrixXd output_delta, Eigen::MatrixXd* input_gradient = nullptr);

enum class LossKind : std::uint8_t { weighted_cross_entropy, squared_reconstruction };

/// Examples are columns; `weights` has one entry per column.
struct Batch {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
    Eigen::VectorXd weights;
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients gradients;
};

/// Weighted mean loss: sum_i w_i l_i / sum_i w_i (zero when all weights are
/// zero). Cross-entropy is summed over output units and requires a sigmoid
/// output layer; reconstruction uses l_i = 0.5 ||output_i - target_i||^2.
double loss_value(const NetworkParams& net, const Batch& batch, LossKind kind);
LossAndGradients loss_and_gradients(const NetworkParams& net, const Batch& batch, LossKind kind);

}  // namespace defe::nn
