#pragma once

#include "defe/data_model.hpp"
#include "defe/nn.hpp"
#include "defe/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace defe::partition {

/// How supervised losses weigh events.
enum class Weighting : std::uint8_t {
    event,           // the dataset's event weights
    class_balanced,  // each class carries half of the total weight
    unit,            // every event weighs 1
};

std::string to_string(Weighting weighting);
Weighting weighting_from_string(const std::string& text);

/// Supervised view of a (normalized) dataset restricted to `features`.
nn::LabeledSet labeled_set(const data::Dataset& dataset, std::span<const std::size_t> features,
                           Weighting weighting);
nn::LabeledSet labeled_set(const data::Dataset& dataset, Weighting weighting);

struct ControllerConfig {
    std::vector<Eigen::Index> hidden{30};
    nn::TrainConfig train{.max_epochs = 5};
    Weighting weighting = Weighting::class_balanced;
    double threshold = 0.5;
};

/// A deliberately under-trained classifier: a few epochs of SGD from a seeded
/// initialization, no early stopping.
nn::NetworkParams train_controller(const data::Dataset& train, const ControllerConfig& config);

/// Index sets over positions 0..n-1 of one dataset, each sorted ascending.
///   hit        correctly classified (T)
///   anomalous  misclassified (F)
///   selection  scored >= threshold (G hat)
///   rejection  scored below threshold (H hat)
struct DiscriminativePartition {
    std::vector<std::size_t> hit;
    std::vector<std::size_t> anomalous;
    std::vector<std::size_t> selection;
    std::vector<std::size_t> rejection;
};

DiscriminativePartition discriminative_partition(const data::Dataset& dataset, const nn::NetworkParams& controller,
                                                 double threshold = 0.5);
/// Same rule from precomputed scores and labels.
DiscriminativePartition partition_from_scores(std::span<const double> scores, std::span<const data::Label> labels,
                                              double threshold = 0.5);

/// Swaps floor(alpha * min(|A|, |B|)) uniformly chosen members between the
/// hit/anomalous pair and, independently, the selection/rejection pair.
DiscriminativePartition random_interchange(const DiscriminativePartition& partition, double alpha,
                                           std::uint64_t seed);

struct FeatureSet {
    std::string name;
    std::vector<std::size_t> indices;
};

using FeaturePartition = std::vector<FeatureSet>;

enum class FeatureInputs : std::uint8_t { all, low_level_only };

/// S1 = PRI_* momentum features, S2 = DER_* derived features, S3 = all.
/// With `low_level_only` each of the three sets is the PRI_* block, which
/// keeps the learner count and layer schedules unchanged.
FeaturePartition feature_partition(const data::FeatureSchema& schema, FeatureInputs inputs = FeatureInputs::all);

/// Named sample set: positions into the partitioned dataset.
struct SampleSet {
    std::string name;
    std::vector<std::size_t> indices;
};

struct SubspaceSpec {
    std::size_t sample_set = 0;
    std::size_t feature_set = 0;
    std::string name;
    /// Event positions after balance enforcement; duplicates are allowed.
    std::vector<std::size_t> events;
    std::vector<std::size_t> features;
};

/// Crosses every sample set with every feature set in (sample, feature) order
/// and raises each subspace's minority-class fraction to `balance_floor` by
/// seeded duplication of minority events.
std::vector<SubspaceSpec> build_subspaces(const std::vector<SampleSet>& sample_sets,
                                          const FeaturePartition& features, std::span<const data::Label> labels,
                                          double balance_floor, std::uint64_t seed);

/// Cardinalities of one partition step, kept for the model manifest.
struct PartitionRecord {
    std::string parent;
    std::size_t parent_size = 0;
    std::size_t hit = 0;
    std::size_t anomalous = 0;
    std::size_t selection = 0;
    std::size_t rejection = 0;
    std::size_t swapped_hit_anomalous = 0;
    std::size_t swapped_selection_rejection = 0;
    std::uint64_t controller_seed = 0;
    std::uint64_t interchange_seed = 0;
};

struct RecursivePartition {
    std::vector<SampleSet> sets;  // 4^depth leaves, parent-major order T, F, G, H
    std::vector<nn::NetworkParams> controllers;
    std::vector<PartitionRecord> records;
};

/// Depth 1 yields {T, F, G, H}; depth 2 trains a fresh controller inside each
/// depth-1 set and partitions it again. Interchange runs after each depth's
/// partition. Depth must be 1 or 2.
RecursivePartition recursive_partition(const data::Dataset& dataset, std::size_t depth,
                                       const ControllerConfig& controller, double alpha, std::uint64_t seed);

}  // namespace defe::partition
