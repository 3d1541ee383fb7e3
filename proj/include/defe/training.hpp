#pragma once

#include "defe/nn.hpp"
#include "defe/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace defe::nn {

struct TrainConfig {
    std::size_t batch_size = 100;
    double momentum = 0.5;
    double lr0 = 0.1;
    double lr_decay = 0.997;
    std::size_t max_epochs = 10;
    std::uint64_t seed = 1;
    double noise_rate = 0.1;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// lr0 * lr_decay^epoch; decay is applied per epoch, not per batch.
double learning_rate(const TrainConfig& config, std::size_t epoch);

/// v <- momentum v - lr(epoch) g ; theta <- theta + v.
void sgd_step(NetworkParams& net, const Gradients& grads, Gradients& velocity, std::size_t epoch,
              const TrainConfig& config);

/// Masking noise: each entry is zeroed independently with probability `noise_rate`.
Eigen::MatrixXd corrupt(const Eigen::MatrixXd& x, double noise_rate, Rng& rng);
Eigen::MatrixXd corrupt(const Eigen::MatrixXd& x, double noise_rate, std::uint64_t seed);

/// Plain-text training log; each epoch line reads `epoch <i> loss <v> val <v>`.
class TrainLog {
public:
    void note(std::string line) { lines_.push_back(std::move(line)); }
    void epoch(std::size_t index, double loss, std::optional<double> validation = std::nullopt);
    const std::vector<std::string>& lines() const { return lines_; }

private:
    std::vector<std::string> lines_;
};

struct EarlyStopTolerances {
    double abs_rise = 0.002;
    double cost_eps = 0.0001;
    std::size_t patience = 10;
};

enum class StopReason : std::uint8_t { none, validation_rise, cost_plateau, epoch_cap };

std::string to_string(StopReason reason);

/// Tracks the two stopping rules used during supervised fine-tuning:
/// validation error more than `abs_rise` above the best seen, or the training
/// cost changing by less than `cost_eps` on `patience` consecutive epochs.
class EarlyStopper {
public:
    explicit EarlyStopper(EarlyStopTolerances tolerances = {}) : tol_(tolerances) {}

    /// Feed one finished epoch; returns the reason to stop, if any.
    StopReason update(double train_cost, double validation_error);

    double best_error() const { return best_; }
    std::size_t best_epoch() const { return best_epoch_; }
    std::size_t epochs_seen() const { return seen_; }
    std::size_t stable_epochs() const { return stable_; }
    /// True if the epoch just fed set a new best.
    bool improved() const { return improved_; }

private:
    EarlyStopTolerances tol_;
    double best_ = 0.0;
    std::size_t best_epoch_ = 0;
    std::size_t seen_ = 0;
    std::size_t stable_ = 0;
    std::optional<double> last_cost_;
    bool improved_ = false;
};

/// A supervised set: examples are columns, targets are 1 x n in {0, 1}.
struct LabeledSet {
    Eigen::MatrixXd inputs;
    Eigen::RowVectorXd targets;
    Eigen::VectorXd weights;

    Eigen::Index size() const { return inputs.cols(); }
};

struct LayerTrace {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct PretrainResult {
    NetworkParams encoder;
    std::vector<LayerTrace> traces;
};

/// Greedy layerwise denoising-autoencoder pretraining over `data` (features x
/// examples). Each layer trains a sigmoid encoder with an untied decoder
/// (linear when reconstructing the raw input, sigmoid above) against the
/// clean input; decoders are discarded. `config.max_epochs` is per layer.
PretrainResult pretrain_stack(const Eigen::MatrixXd& data, std::span<const Eigen::Index> layer_sizes,
                              const TrainConfig& config, TrainLog* log = nullptr);

/// Runs `config.max_epochs` epochs of minibatch SGD with momentum on
/// weighted cross-entropy, without early stopping. Returns the final cost.
double train_epochs(NetworkParams& net, const LabeledSet& train, const TrainConfig& config,
                    TrainLog* log = nullptr);

enum class ValidationMetric : std::uint8_t { loss, error_rate };

struct FinetuneResult {
    NetworkParams net;
    StopReason reason = StopReason::none;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_validation = 0.0;
};

/// Supervised SGD with early stopping; returns the best-validation parameters.
/// `config.max_epochs` is the epoch cap.
FinetuneResult finetune(NetworkParams net, const LabeledSet& train, const LabeledSet& validation,
                        const TrainConfig& config, const EarlyStopTolerances& tolerances,
                        ValidationMetric metric = ValidationMetric::loss, TrainLog* log = nullptr);

/// Weighted cross-entropy and weighted misclassification rate at 0.5.
double weighted_loss(const NetworkParams& net, const LabeledSet& set);
double weighted_error_rate(const NetworkParams& net, const LabeledSet& set);

}  // namespace defe::nn
