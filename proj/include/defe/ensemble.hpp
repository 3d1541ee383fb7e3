#pragma once

#include "defe/config.hpp"
#include "defe/data_model.hpp"
#include "defe/nn.hpp"
#include "defe/partition.hpp"
#include "defe/pca.hpp"
#include "defe/training.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace defe::ensemble {

/// One SDAE feature learner bound to a sample-feature subspace.
struct FeatureLearner {
    std::size_t subspace = 0;
    std::string name;
    std::vector<std::size_t> features;  // schema indices consumed, in order
    nn::NetworkParams encoder;          // top layer width K
    std::optional<nn::LayerParams> head;
    std::uint64_t seed = 0;

    Eigen::Index width() const { return encoder.output_dim(); }
};

struct LearnerTrainingConfig {
    /// Layer schedule per feature set; indexed by SubspaceSpec::feature_set.
    std::vector<std::vector<Eigen::Index>> schedules;
    Eigen::Index k = 50;
    /// Per-layer pretraining; max_epochs is epochs per layer.
    nn::TrainConfig pretrain;
    /// Supervised pass of encoder plus 1-unit head, fixed epoch count.
    nn::TrainConfig finetune;
    partition::Weighting weighting = partition::Weighting::event;
    std::uint64_t seed = 1;
    std::size_t parallelism = 1;
};

struct LearnerReport {
    std::string name;
    std::size_t events = 0;
    std::size_t signal = 0;
    std::vector<nn::LayerTrace> pretrain;
    double finetune_cost = 0.0;
    std::vector<std::string> log;
};

/// Trains one learner per subspace against `train` (already normalized).
/// Results come back in subspace order whatever the parallelism.
std::vector<FeatureLearner> train_feature_learners(const std::vector<partition::SubspaceSpec>& subspaces,
                                                   const data::Dataset& train, const LearnerTrainingConfig& config,
                                                   std::vector<LearnerReport>* reports = nullptr);

/// Top-layer activations of every learner for every column of `normalized`
/// (features x events), concatenated in learner order.
Eigen::MatrixXd extract_extreme_features(std::span<const FeatureLearner> learners, const Eigen::MatrixXd& normalized);

/// Head score of one learner for each column of `normalized`.
Eigen::RowVectorXd head_scores(const FeatureLearner& learner, const Eigen::MatrixXd& normalized);

/// Membership in the union of the learners' selection regions (score >= 0.5).
bool extreme_region_member(std::span<const FeatureLearner> learners, const Eigen::VectorXd& normalized);
std::vector<bool> extreme_region_members(std::span<const FeatureLearner> learners, const Eigen::MatrixXd& normalized);

struct FinalClassifierConfig {
    std::vector<Eigen::Index> hidden{200, 100, 50};
    nn::TrainConfig train;
    nn::EarlyStopTolerances tolerances;
    nn::ValidationMetric metric = nn::ValidationMetric::loss;
};

/// Sigmoid net input -> hidden -> 1 with a zero-initialized output layer,
/// trained with early stopping on `validation`.
nn::FinetuneResult train_final_classifier(const nn::LabeledSet& train, const nn::LabeledSet& validation,
                                          const FinalClassifierConfig& config, nn::TrainLog* log = nullptr);

/// Subspace summary stored in the model bundle; index lists are not kept.
struct SubspaceSummary {
    std::string name;
    std::size_t sample_set = 0;
    std::size_t feature_set = 0;
    std::size_t events = 0;
    std::size_t feature_count = 0;
};

struct DEFEModel {
    RunConfig config;
    data::FeatureSchema schema = data::FeatureSchema::higgs_challenge();
    data::NormalizationStats normalization;
    std::vector<nn::NetworkParams> controllers;
    std::vector<partition::PartitionRecord> partition;
    std::vector<SubspaceSummary> subspaces;
    std::vector<FeatureLearner> learners;
    std::optional<pca::PCAProjection> pca;
    nn::NetworkParams classifier;

    /// Throws when the invariants tying the parts together do not hold.
    void validate() const;
};

struct ExtractedFeatures {
    Eigen::MatrixXd extreme;    // learner_count*K x events
    Eigen::MatrixXd projected;  // pca_k x events (equal to extreme when PCA is off)
};

/// Normalizes raw (unnormalized) events and runs them up to the classifier input.
ExtractedFeatures extract(const DEFEModel& model, const data::Dataset& raw);
ExtractedFeatures extract(const DEFEModel& model, const Eigen::MatrixXd& raw_features);

/// Scores raw events; missing-value sentinels are allowed.
double predict(const DEFEModel& model, std::span<const double> raw_features);
std::vector<double> predict(const DEFEModel& model, const data::Dataset& raw);

/// Diagnostics from a training run that are not part of the model.
struct TrainingArtifacts {
    std::vector<std::string> log;
    data::Dataset fit;         // normalized training split
    data::Dataset validation;  // normalized validation split
    partition::RecursivePartition sample_partition;
    std::vector<partition::SubspaceSpec> subspaces;
    nn::FinetuneResult classifier_result;
};

struct TrainedModel {
    DEFEModel model;
    TrainingArtifacts artifacts;
};

/// Full greedy pipeline on a raw labeled dataset:
/// weights -> split -> normalization -> partition -> learners -> PCA -> classifier.
TrainedModel train_defe(const data::Dataset& raw, const RunConfig& config);

/// Feedforward comparison model on the 30 raw inputs.
struct BaselineModel {
    data::NormalizationStats normalization;
    nn::NetworkParams net;
};

/// Same weights, split, normalization and SGD settings as train_defe, with
/// hidden widths `hidden` and `max_epochs` as the early-stopping cap.
BaselineModel train_baseline(const data::Dataset& raw, const RunConfig& config, std::vector<Eigen::Index> hidden,
                             std::size_t max_epochs);
std::vector<double> predict(const BaselineModel& model, const data::Dataset& raw);

/// Mean absolute Pearson correlation between top-layer features of
/// different learners and within each learner, over `normalized` events.
struct DiversityReport {
    double between_learners = 0.0;
    double within_learner = 0.0;
};
DiversityReport diversity(std::span<const FeatureLearner> learners, const Eigen::MatrixXd& normalized);

}  // namespace defe::ensemble
