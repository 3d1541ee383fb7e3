#pragma once

#include "defe/nn.hpp"
#include "defe/training.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace defe::efe {

/// Parameter gradient of one feature learner when the upstream gradient
/// w.r.t. its output is scaled by a nonnegative gate. The gate never enters
/// the forward pass. Throws NumericError for a negative or non-finite gate.
nn::Gradients gated_gradient(const nn::NetworkParams& learner, double gate, const Eigen::VectorXd& input,
                             const Eigen::VectorXd& upstream);

/// Batch form: column j of `upstream` is scaled by gates(j) before
/// accumulation, i.e. the sum over examples of the per-example gated gradients.
nn::Gradients gated_gradient(const nn::NetworkParams& learner, const Eigen::VectorXd& gates,
                             const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream);

/// lambda * min(gate_loss, delta) + base_loss.
double efe_loss(double base_loss, double gate_loss, double lambda, double delta);

/// End-to-end gated ensemble used only for small demonstrations: learners
/// H_m feed a concatenated representation into a head F, and a separate gate
/// network g (one sigmoid unit per learner) scales each learner's gradient.
struct GatedEnsemble {
    std::vector<nn::NetworkParams> learners;
    nn::NetworkParams gate;
    nn::NetworkParams head;
};

struct GatedEnsembleShape {
    Eigen::Index input_dim = 2;
    std::size_t learner_count = 2;
    std::vector<Eigen::Index> learner_sizes{8, 4};
    std::vector<Eigen::Index> head_hidden{8};
    std::vector<Eigen::Index> gate_hidden{8};
};

GatedEnsemble init_gated_ensemble(const GatedEnsembleShape& shape, std::uint64_t seed);

/// Head output for each column of `inputs`.
Eigen::RowVectorXd gated_ensemble_scores(const GatedEnsemble& model, const Eigen::MatrixXd& inputs);

struct GatedLosses {
    double base = 0.0;   // L0: weighted cross-entropy of the head
    double gate = 0.0;   // Lg: mean cross-entropy of the gate units toward y
    double total = 0.0;  // L_EFE
};

GatedLosses gated_ensemble_losses(const GatedEnsemble& model, const nn::LabeledSet& set, double lambda,
                                  double delta);

struct GatedTrainConfig {
    nn::TrainConfig train{.batch_size = 20, .max_epochs = 50};
    double lambda = 1.0;
    double delta = 0.1;
};

/// Minibatch SGD on L_EFE. The head receives the plain gradient; learner m
/// receives its backprop gradient scaled per example by g_m(x); the gate
/// receives lambda * grad Lg only while Lg < delta. Returns L_EFE per epoch
/// evaluated on the full training set.
std::vector<double> train_gated_ensemble(GatedEnsemble& model, const nn::LabeledSet& train,
                                         const GatedTrainConfig& config);

}  // namespace defe::efe
