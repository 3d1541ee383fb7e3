#pragma once

#include "defe/partition.hpp"
#include "defe/training.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace defe {

/// Every tunable of a training run. Defaults follow the published setup
/// where one exists; the remaining defaults are documented in README.md.
struct RunConfig {
    std::uint64_t seed = 1;

    // weights and splits
    bool normalize_weights = true;
    double n_s_expected = 100.0;
    double n_b_expected = 1000.0;
    double validation_fraction = 0.2;

    // discriminative partition
    std::size_t partition_depth = 1;
    double alpha = 0.05;
    std::vector<Eigen::Index> controller_hidden{30};
    std::size_t controller_epochs = 5;
    double controller_threshold = 0.5;
    partition::Weighting controller_weighting = partition::Weighting::class_balanced;
    double balance_floor = 0.2;

    // feature learners
    partition::FeatureInputs feature_inputs = partition::FeatureInputs::all;
    std::size_t feature_sets = 3;
    Eigen::Index learner_k = 50;
    std::vector<Eigen::Index> schedule_s1{250, 200, 150, 100, 50};
    std::vector<Eigen::Index> schedule_s2{200, 200, 150, 100, 50};
    std::vector<Eigen::Index> schedule_s3{300, 250, 200, 200, 50};
    std::size_t pretrain_epochs = 5;
    double noise_rate = 0.1;
    std::size_t learner_finetune_epochs = 10;
    partition::Weighting learner_weighting = partition::Weighting::class_balanced;

    // shared SGD settings
    std::size_t batch_size = 100;
    double momentum = 0.5;
    double lr0 = 0.1;
    double lr_decay = 0.997;

    // extreme features and final classifier
    bool pca_enabled = true;
    Eigen::Index pca_k = 300;
    std::vector<Eigen::Index> final_hidden{200, 100, 50};
    std::size_t final_max_epochs = 150;
    partition::Weighting final_weighting = partition::Weighting::event;
    nn::ValidationMetric validation_metric = nn::ValidationMetric::loss;
    double early_stop_rise = 0.002;
    double early_stop_cost_eps = 0.0001;
    std::size_t early_stop_patience = 10;

    // evaluation and tooling
    double b_regular = 10.0;
    std::size_t parallelism = 1;
    std::size_t histogram_bins = 50;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;

    /// Layer schedule of feature set `index` (0-based).
    const std::vector<Eigen::Index>& schedule(std::size_t index) const;
    nn::TrainConfig train_config(std::size_t max_epochs, std::uint64_t seed) const;
    nn::EarlyStopTolerances tolerances() const;
    partition::ControllerConfig controller_config() const;
    partition::FeaturePartition features(const data::FeatureSchema& schema) const;
    std::size_t learner_count() const;
    /// Width of the concatenated extreme feature vector.
    Eigen::Index extreme_dim() const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown or repeated keys
/// are rejected and every value is type-checked, then the whole config is
/// validated.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Canonical `key = value` dump, one line per key in a fixed order; parsing
/// it back reproduces the config exactly.
void write_config(std::ostream& out, const RunConfig& config);

}  // namespace defe
