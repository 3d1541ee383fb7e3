#include "defe/training.hpp"

#include "defe/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace defe::nn {

namespace {

std::string format_real(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.10g", value);
    return buffer;
}

std::vector<Eigen::Index> iota_indices(Eigen::Index n) {
    std::vector<Eigen::Index> out(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), Eigen::Index{0});
    return out;
}

LabeledSet gather(const LabeledSet& set, std::span<const Eigen::Index> columns) {
    const std::vector<Eigen::Index> idx(columns.begin(), columns.end());
    return LabeledSet{set.inputs(Eigen::all, idx), set.targets(Eigen::all, idx), set.weights(idx)};
}

Batch as_batch(LabeledSet set) {
    return Batch{std::move(set.inputs), Eigen::MatrixXd(std::move(set.targets)), std::move(set.weights)};
}

void require_finite(double loss, const std::string& where) {
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss during " + where);
    }
}

// One shuffled pass of minibatch SGD; returns the weight-averaged batch loss.
double run_epoch(NetworkParams& net, Gradients& velocity, const LabeledSet& train, std::size_t epoch,
                 const TrainConfig& config, Rng& rng) {
    std::vector<Eigen::Index> order = iota_indices(train.size());
    rng.shuffle(order);
    const std::span<const Eigen::Index> all(order);
    double weighted_loss_sum = 0.0;
    double weight_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t count = std::min(config.batch_size, order.size() - start);
        Batch batch = as_batch(gather(train, all.subspan(start, count)));
        auto [loss, grads] = loss_and_gradients(net, batch, LossKind::weighted_cross_entropy);
        require_finite(loss, "supervised training at epoch " + std::to_string(epoch));
        sgd_step(net, grads, velocity, epoch, config);
        const double w = batch.weights.sum();
        weighted_loss_sum += loss * w;
        weight_sum += w;
    }
    return weight_sum > 0.0 ? weighted_loss_sum / weight_sum : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("noise_rate must lie in [0, 1]");
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
    return config.lr0 * std::pow(config.lr_decay, static_cast<double>(epoch));
}

void sgd_step(NetworkParams& net, const Gradients& grads, Gradients& velocity, std::size_t epoch,
              const TrainConfig& config) {
    if (grads.layers.size() != net.layers.size() || velocity.layers.size() != net.layers.size()) {
        throw NumericError("gradient and velocity must match the network depth");
    }
    const double lr = learning_rate(config, epoch);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        auto& v = velocity.layers[l];
        const auto& g = grads.layers[l];
        if (g.weights.rows() != layer.weights.rows() || g.weights.cols() != layer.weights.cols() ||
            v.weights.rows() != layer.weights.rows() || v.weights.cols() != layer.weights.cols() ||
            g.bias.size() != layer.bias.size() || v.bias.size() != layer.bias.size()) {
            throw NumericError("gradient shape mismatch at layer " + std::to_string(l));
        }
        v.weights = config.momentum * v.weights - lr * g.weights;
        v.bias = config.momentum * v.bias - lr * g.bias;
        layer.weights += v.weights;
        layer.bias += v.bias;
    }
}

Eigen::MatrixXd corrupt(const Eigen::MatrixXd& x, double noise_rate, Rng& rng) {
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
        throw ConfigError("noise_rate must lie in [0, 1]");
    }
    Eigen::MatrixXd out = x;
    if (noise_rate == 0.0) return out;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (rng.uniform01() < noise_rate) out.data()[i] = 0.0;
    }
    return out;
}

Eigen::MatrixXd corrupt(const Eigen::MatrixXd& x, double noise_rate, std::uint64_t seed) {
    Rng rng(seed);
    return corrupt(x, noise_rate, rng);
}

void TrainLog::epoch(std::size_t index, double loss, std::optional<double> validation) {
    std::string line = "epoch " + std::to_string(index) + " loss " + format_real(loss);
    if (validation) line += " val " + format_real(*validation);
    lines_.push_back(std::move(line));
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::none: return "none";
        case StopReason::validation_rise: return "validation_rise";
        case StopReason::cost_plateau: return "cost_plateau";
        case StopReason::epoch_cap: return "epoch_cap";
    }
    return "unknown";
}

StopReason EarlyStopper::update(double train_cost, double validation_error) {
    ++seen_;
    improved_ = false;
    if (seen_ == 1 || validation_error < best_) {
        best_ = validation_error;
        best_epoch_ = seen_;
        improved_ = true;
    }
    if (last_cost_ && std::abs(train_cost - *last_cost_) < tol_.cost_eps) {
        ++stable_;
    } else {
        stable_ = 0;
    }
    last_cost_ = train_cost;
    if (validation_error > best_ + tol_.abs_rise) return StopReason::validation_rise;
    if (stable_ >= tol_.patience) return StopReason::cost_plateau;
    return StopReason::none;
}

double weighted_loss(const NetworkParams& net, const LabeledSet& set) {
    return loss_value(net, Batch{set.inputs, Eigen::MatrixXd(set.targets), set.weights},
                      LossKind::weighted_cross_entropy);
}

double weighted_error_rate(const NetworkParams& net, const LabeledSet& set) {
    const Eigen::MatrixXd scores = predict(net, set.inputs);
    double wrong = 0.0;
    double total = 0.0;
    for (Eigen::Index j = 0; j < set.size(); ++j) {
        const bool predicted_signal = scores(0, j) >= 0.5;
        const bool is_signal = set.targets(j) >= 0.5;
        if (predicted_signal != is_signal) wrong += set.weights(j);
        total += set.weights(j);
    }
    return total > 0.0 ? wrong / total : 0.0;
}

PretrainResult pretrain_stack(const Eigen::MatrixXd& data, std::span<const Eigen::Index> layer_sizes,
                              const TrainConfig& config, TrainLog* log) {
    config.validate();
    if (layer_sizes.empty()) throw ConfigError("pretraining needs at least one layer");
    if (data.cols() == 0 || data.rows() == 0) throw DataError("pretraining data is empty");

    PretrainResult result;
    result.encoder.input_dim = data.rows();
    Eigen::MatrixXd clean = data;
    for (std::size_t l = 0; l < layer_sizes.size(); ++l) {
        Rng rng(derive_seed(config.seed, l));
        const Eigen::Index in_dim = clean.rows();
        const std::array<Eigen::Index, 2> sizes{layer_sizes[l], in_dim};
        const std::array<Activation, 2> acts{Activation::sigmoid, l == 0 ? Activation::linear : Activation::sigmoid};
        NetworkParams autoencoder = init_network(in_dim, sizes, acts, rng);
        Gradients velocity = Gradients::zeros_like(autoencoder);
        const Eigen::VectorXd unit = Eigen::VectorXd::Ones(clean.cols());
        auto full_loss = [&] {
            return loss_value(autoencoder, Batch{clean, clean, unit}, LossKind::squared_reconstruction);
        };
        LayerTrace trace;
        trace.initial_loss = full_loss();
        std::vector<Eigen::Index> order = iota_indices(clean.cols());
        const std::string where = "pretraining of layer " + std::to_string(l);
        if (log) log->note("pretrain layer " + std::to_string(l) + " " + std::to_string(in_dim) + "->" +
                           std::to_string(layer_sizes[l]));
        for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
            rng.shuffle(order);
            double loss_sum = 0.0;
            std::size_t seen = 0;
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t count = std::min(config.batch_size, order.size() - start);
                const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                    order.begin() + static_cast<std::ptrdiff_t>(start + count));
                Eigen::MatrixXd target = clean(Eigen::all, idx);
                Batch batch{corrupt(target, config.noise_rate, rng), std::move(target),
                            Eigen::VectorXd::Ones(static_cast<Eigen::Index>(count))};
                auto [loss, grads] = loss_and_gradients(autoencoder, batch, LossKind::squared_reconstruction);
                if (!std::isfinite(loss)) {
                    throw NumericError("non-finite loss during " + where);
                }
                sgd_step(autoencoder, grads, velocity, epoch, config);
                loss_sum += loss * static_cast<double>(count);
                seen += count;
            }
            if (log) log->epoch(epoch, loss_sum / static_cast<double>(seen));
        }
        trace.final_loss = full_loss();
        if (!std::isfinite(trace.final_loss)) {
            throw NumericError("non-finite loss during " + where);
        }
        result.traces.push_back(trace);
        LayerParams encoder = std::move(autoencoder.layers.front());
        NetworkParams single{in_dim, {encoder}};
        clean = predict(single, clean);
        result.encoder.layers.push_back(std::move(encoder));
    }
    return result;
}

double train_epochs(NetworkParams& net, const LabeledSet& train, const TrainConfig& config, TrainLog* log) {
    config.validate();
    if (train.size() == 0) throw DataError("supervised training set is empty");
    Rng rng(config.seed);
    Gradients velocity = Gradients::zeros_like(net);
    double cost = 0.0;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        cost = run_epoch(net, velocity, train, epoch, config, rng);
        if (log) log->epoch(epoch, cost);
    }
    return cost;
}

FinetuneResult finetune(NetworkParams net, const LabeledSet& train, const LabeledSet& validation,
                        const TrainConfig& config, const EarlyStopTolerances& tolerances, ValidationMetric metric,
                        TrainLog* log) {
    config.validate();
    if (validation.size() == 0) throw DataError("fine-tuning needs a nonempty validation split");
    if (train.size() == 0) throw DataError("fine-tuning needs a nonempty training split");
    auto evaluate = [&](const NetworkParams& candidate) {
        return metric == ValidationMetric::loss ? weighted_loss(candidate, validation)
                                                : weighted_error_rate(candidate, validation);
    };
    Rng rng(config.seed);
    Gradients velocity = Gradients::zeros_like(net);
    EarlyStopper stopper(tolerances);
    FinetuneResult result;
    result.net = net;
    result.reason = StopReason::epoch_cap;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double cost = run_epoch(net, velocity, train, epoch, config, rng);
        const double val = evaluate(net);
        require_finite(val, "validation at epoch " + std::to_string(epoch));
        if (log) log->epoch(epoch, cost, val);
        const StopReason reason = stopper.update(cost, val);
        result.epochs_run = epoch + 1;
        if (stopper.improved()) {
            result.net = net;
        }
        if (reason != StopReason::none) {
            result.reason = reason;
            break;
        }
    }
    result.best_epoch = stopper.best_epoch();
    result.best_validation = stopper.best_error();
    if (log) {
        log->note("stop " + to_string(result.reason) + " after " + std::to_string(result.epochs_run) +
                  " epochs, best epoch " + std::to_string(result.best_epoch));
    }
    return result;
}

}  // namespace defe::nn
