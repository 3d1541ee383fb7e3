#include "defe/efe.hpp"

#include "defe/errors.hpp"
#include "defe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace defe::efe {

namespace {

void check_gate(double gate) {
    if (!std::isfinite(gate) || gate < 0.0) {
        throw NumericError("gate values must be finite and nonnegative");
    }
}

std::vector<nn::Activation> all_sigmoid(std::size_t n) { return std::vector<nn::Activation>(n, nn::Activation::sigmoid); }

struct ForwardPass {
    std::vector<nn::Activations> learner_acts;
    Eigen::MatrixXd features;
    nn::Activations head_acts;
};

ForwardPass run_forward(const GatedEnsemble& model, const Eigen::MatrixXd& inputs) {
    ForwardPass pass;
    Eigen::Index rows = 0;
    for (const auto& learner : model.learners) {
        pass.learner_acts.push_back(nn::forward(learner, inputs));
        rows += learner.output_dim();
    }
    pass.features.resize(rows, inputs.cols());
    Eigen::Index at = 0;
    for (const auto& acts : pass.learner_acts) {
        pass.features.middleRows(at, acts.back().rows()) = acts.back();
        at += acts.back().rows();
    }
    pass.head_acts = nn::forward(model.head, pass.features);
    return pass;
}

}  // namespace

nn::Gradients gated_gradient(const nn::NetworkParams& learner, double gate, const Eigen::VectorXd& input,
                             const Eigen::VectorXd& upstream) {
    check_gate(gate);
    const Eigen::MatrixXd x = input;
    const nn::Activations acts = nn::forward(learner, x);
    nn::Gradients grads = nn::backprop(learner, x, acts, Eigen::MatrixXd(upstream));
    grads *= gate;
    return grads;
}

nn::Gradients gated_gradient(const nn::NetworkParams& learner, const Eigen::VectorXd& gates,
                             const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream) {
    if (gates.size() != inputs.cols()) {
        throw NumericError("one gate value per example is required");
    }
    for (Eigen::Index j = 0; j < gates.size(); ++j) check_gate(gates(j));
    Eigen::MatrixXd scaled = upstream;
    scaled.array().rowwise() *= gates.transpose().array();
    const nn::Activations acts = nn::forward(learner, inputs);
    return nn::backprop(learner, inputs, acts, scaled);
}

double efe_loss(double base_loss, double gate_loss, double lambda, double delta) {
    return lambda * std::min(gate_loss, delta) + base_loss;
}

GatedEnsemble init_gated_ensemble(const GatedEnsembleShape& shape, std::uint64_t seed) {
    if (shape.learner_count == 0 || shape.learner_sizes.empty()) {
        throw ConfigError("gated ensemble needs at least one learner with one layer");
    }
    GatedEnsemble model;
    for (std::size_t m = 0; m < shape.learner_count; ++m) {
        Rng rng(derive_seed(seed, m));
        model.learners.push_back(
            nn::init_network(shape.input_dim, shape.learner_sizes, all_sigmoid(shape.learner_sizes.size()), rng));
    }
    std::vector<Eigen::Index> head_sizes = shape.head_hidden;
    head_sizes.push_back(1);
    Rng head_rng(derive_seed(seed, 1000));
    model.head = nn::init_network(static_cast<Eigen::Index>(shape.learner_count) * shape.learner_sizes.back(),
                                  head_sizes, all_sigmoid(head_sizes.size()), head_rng);
    std::vector<Eigen::Index> gate_sizes = shape.gate_hidden;
    gate_sizes.push_back(static_cast<Eigen::Index>(shape.learner_count));
    Rng gate_rng(derive_seed(seed, 2000));
    model.gate = nn::init_network(shape.input_dim, gate_sizes, all_sigmoid(gate_sizes.size()), gate_rng);
    return model;
}

Eigen::RowVectorXd gated_ensemble_scores(const GatedEnsemble& model, const Eigen::MatrixXd& inputs) {
    return run_forward(model, inputs).head_acts.back().row(0);
}

GatedLosses gated_ensemble_losses(const GatedEnsemble& model, const nn::LabeledSet& set, double lambda,
                                  double delta) {
    const ForwardPass pass = run_forward(model, set.inputs);
    GatedLosses out;
    out.base = nn::loss_value(model.head, nn::Batch{pass.features, Eigen::MatrixXd(set.targets), set.weights},
                              nn::LossKind::weighted_cross_entropy);
    const auto units = model.gate.output_dim();
    const Eigen::MatrixXd gate_targets = set.targets.replicate(units, 1);
    out.gate = nn::loss_value(model.gate, nn::Batch{set.inputs, gate_targets, set.weights},
                              nn::LossKind::weighted_cross_entropy) /
               static_cast<double>(units);
    out.total = efe_loss(out.base, out.gate, lambda, delta);
    return out;
}

std::vector<double> train_gated_ensemble(GatedEnsemble& model, const nn::LabeledSet& train,
                                         const GatedTrainConfig& config) {
    config.train.validate();
    if (config.lambda < 0.0 || !(config.delta > 0.0)) {
        throw ConfigError("lambda must be nonnegative and delta positive");
    }
    Rng rng(config.train.seed);
    nn::Gradients head_velocity = nn::Gradients::zeros_like(model.head);
    nn::Gradients gate_velocity = nn::Gradients::zeros_like(model.gate);
    std::vector<nn::Gradients> learner_velocity;
    for (const auto& learner : model.learners) learner_velocity.push_back(nn::Gradients::zeros_like(learner));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto units = model.gate.output_dim();
    std::vector<double> history;
    for (std::size_t epoch = 0; epoch < config.train.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.train.batch_size) {
            const std::size_t count = std::min(config.train.batch_size, order.size() - start);
            const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(start + count));
            const Eigen::MatrixXd x = train.inputs(Eigen::all, idx);
            const Eigen::RowVectorXd y = train.targets(Eigen::all, idx);
            const Eigen::VectorXd w = train.weights(idx);
            const double total_weight = w.sum();
            if (total_weight == 0.0) continue;

            const ForwardPass pass = run_forward(model, x);
            Eigen::MatrixXd delta = pass.head_acts.back() - y;
            delta.array().rowwise() *= (w / total_weight).transpose().array();
            Eigen::MatrixXd feature_grad;
            const nn::Gradients head_grads = nn::backprop_delta(model.head, pass.features, pass.head_acts, delta,
                                                                &feature_grad);

            const Eigen::MatrixXd gates = nn::predict(model.gate, x);
            Eigen::Index at = 0;
            for (std::size_t m = 0; m < model.learners.size(); ++m) {
                const Eigen::Index width = model.learners[m].output_dim();
                const Eigen::MatrixXd upstream = feature_grad.middleRows(at, width);
                at += width;
                const nn::Gradients grads = gated_gradient(model.learners[m], gates.row(static_cast<Eigen::Index>(m)).transpose(), x, upstream);
                nn::sgd_step(model.learners[m], grads, learner_velocity[m], epoch, config.train);
            }
            nn::sgd_step(model.head, head_grads, head_velocity, epoch, config.train);

            auto [gate_loss, gate_grads] = nn::loss_and_gradients(
                model.gate, nn::Batch{x, y.replicate(units, 1), w}, nn::LossKind::weighted_cross_entropy);
            gate_loss /= static_cast<double>(units);
            if (gate_loss < config.delta) {
                gate_grads *= config.lambda / static_cast<double>(units);
            } else {
                gate_grads *= 0.0;
            }
            nn::sgd_step(model.gate, gate_grads, gate_velocity, epoch, config.train);
        }
        const GatedLosses losses = gated_ensemble_losses(model, train, config.lambda, config.delta);
        if (!std::isfinite(losses.total)) {
            throw NumericError("non-finite L_EFE at epoch " + std::to_string(epoch));
        }
        history.push_back(losses.total);
    }
    return history;
}

}  // namespace defe::efe
