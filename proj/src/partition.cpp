#include "defe/partition.hpp"

#include "defe/errors.hpp"
#include "defe/rng.hpp"

#include <algorithm>
#include <cmath>

namespace defe::partition {

namespace {

constexpr const char* kSetNames[4] = {"T", "F", "G", "H"};

std::vector<std::size_t> all_features(const data::FeatureSchema& schema) {
    std::vector<std::size_t> out(schema.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

std::size_t interchange_count(double alpha, std::size_t a, std::size_t b) {
    // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(std::min(a, b)) + 1e-9));
}

std::size_t swap_between(std::vector<std::size_t>& a, std::vector<std::size_t>& b, double alpha, Rng& rng) {
    const std::size_t k = interchange_count(alpha, a.size(), b.size());
    if (k == 0) return 0;
    const auto pick_a = rng.sample_without_replacement(a.size(), k);
    const auto pick_b = rng.sample_without_replacement(b.size(), k);
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(a[pick_a[i]], b[pick_b[i]]);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return k;
}

}  // namespace

std::string to_string(Weighting weighting) {
    switch (weighting) {
        case Weighting::event: return "event";
        case Weighting::class_balanced: return "class_balanced";
        case Weighting::unit: return "unit";
    }
    return "unknown";
}

Weighting weighting_from_string(const std::string& text) {
    if (text == "event") return Weighting::event;
    if (text == "class_balanced") return Weighting::class_balanced;
    if (text == "unit") return Weighting::unit;
    throw ConfigError("unknown weighting '" + text + "' (expected event, class_balanced or unit)");
}

nn::LabeledSet labeled_set(const data::Dataset& dataset, std::span<const std::size_t> features, Weighting weighting) {
    dataset.require_labels("supervised training");
    const auto n = static_cast<Eigen::Index>(dataset.size());
    nn::LabeledSet set;
    set.inputs.resize(static_cast<Eigen::Index>(features.size()), n);
    set.targets.resize(n);
    set.weights.resize(n);
    const double n_signal = static_cast<double>(dataset.count(data::Label::signal));
    const double n_background = static_cast<double>(dataset.count(data::Label::background));
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& e = dataset.events()[static_cast<std::size_t>(j)];
        for (std::size_t f = 0; f < features.size(); ++f) {
            set.inputs(static_cast<Eigen::Index>(f), j) = e.features[features[f]];
        }
        const bool signal = e.label == data::Label::signal;
        set.targets(j) = signal ? 1.0 : 0.0;
        switch (weighting) {
            case Weighting::event: set.weights(j) = e.weight; break;
            case Weighting::class_balanced:
                set.weights(j) = 0.5 * static_cast<double>(n) / (signal ? n_signal : n_background);
                break;
            case Weighting::unit: set.weights(j) = 1.0; break;
        }
    }
    return set;
}

nn::LabeledSet labeled_set(const data::Dataset& dataset, Weighting weighting) {
    const auto features = all_features(dataset.schema());
    return labeled_set(dataset, features, weighting);
}

nn::NetworkParams train_controller(const data::Dataset& train, const ControllerConfig& config) {
    train.require_labels("controller training");
    if (train.count(data::Label::signal) == 0 || train.count(data::Label::background) == 0) {
        throw DataError("controller training needs both signal and background events");
    }
    std::vector<Eigen::Index> sizes = config.hidden;
    sizes.push_back(1);
    const std::vector<nn::Activation> acts(sizes.size(), nn::Activation::sigmoid);
    Rng init_rng(derive_seed(config.train.seed, 0xC0));
    nn::NetworkParams net = nn::init_network(static_cast<Eigen::Index>(train.schema().size()), sizes, acts, init_rng);
    nn::train_epochs(net, labeled_set(train, config.weighting), config.train);
    return net;
}

DiscriminativePartition partition_from_scores(std::span<const double> scores, std::span<const data::Label> labels,
                                              double threshold) {
    if (scores.size() != labels.size()) {
        throw DataError("scores and labels differ in length");
    }
    DiscriminativePartition p;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool selected = scores[i] >= threshold;
        (selected ? p.selection : p.rejection).push_back(i);
        const bool correct = selected == (labels[i] == data::Label::signal);
        (correct ? p.hit : p.anomalous).push_back(i);
    }
    return p;
}

DiscriminativePartition discriminative_partition(const data::Dataset& dataset, const nn::NetworkParams& controller,
                                                 double threshold) {
    dataset.require_labels("discriminative partition");
    if (controller.output_dim() != 1) {
        throw ConfigError("controller must have a single output unit");
    }
    const Eigen::MatrixXd scores = nn::predict(controller, dataset.feature_matrix());
    const std::vector<double> flat(scores.data(), scores.data() + scores.size());
    const auto labels = dataset.labels();
    return partition_from_scores(flat, labels, threshold);
}

DiscriminativePartition random_interchange(const DiscriminativePartition& partition, double alpha,
                                           std::uint64_t seed) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("interchange rate alpha must lie in [0, 1]");
    }
    DiscriminativePartition out = partition;
    Rng rng(seed);
    swap_between(out.hit, out.anomalous, alpha, rng);
    swap_between(out.selection, out.rejection, alpha, rng);
    return out;
}

FeaturePartition feature_partition(const data::FeatureSchema& schema, FeatureInputs inputs) {
    const auto momentum = schema.indices_in(data::FeatureGroup::momentum);
    if (inputs == FeatureInputs::low_level_only) {
        return {{"S1", momentum}, {"S2", momentum}, {"S3", momentum}};
    }
    return {{"S1", momentum}, {"S2", schema.indices_in(data::FeatureGroup::derived)}, {"S3", all_features(schema)}};
}

std::vector<SubspaceSpec> build_subspaces(const std::vector<SampleSet>& sample_sets, const FeaturePartition& features,
                                          std::span<const data::Label> labels, double balance_floor,
                                          std::uint64_t seed) {
    if (!(balance_floor >= 0.0 && balance_floor <= 0.5)) {
        throw ConfigError("balance floor must lie in [0, 0.5]");
    }
    for (const auto& fs : features) {
        if (fs.indices.empty()) throw ConfigError("feature set " + fs.name + " is empty");
    }
    std::vector<SubspaceSpec> out;
    for (std::size_t s = 0; s < sample_sets.size(); ++s) {
        const SampleSet& set = sample_sets[s];
        if (set.indices.empty()) {
            throw DataError("sample set " + set.name + " is empty");
        }
        std::vector<std::size_t> signal;
        std::vector<std::size_t> background;
        for (const std::size_t i : set.indices) {
            if (i >= labels.size()) throw DataError("sample set " + set.name + " indexes past the dataset");
            (labels[i] == data::Label::signal ? signal : background).push_back(i);
        }
        std::vector<std::size_t> events = set.indices;
        const auto& minority = signal.size() <= background.size() ? signal : background;
        const std::size_t majority = std::max(signal.size(), background.size());
        if (!minority.empty()) {
            auto fraction = [&](std::size_t m) { return static_cast<double>(m) / static_cast<double>(m + majority); };
            std::size_t target = minority.size();
            if (fraction(target) < balance_floor) {
                target = static_cast<std::size_t>(
                    std::ceil(balance_floor * static_cast<double>(majority) / (1.0 - balance_floor)));
                while (fraction(target) < balance_floor) ++target;
            }
            Rng rng(derive_seed(seed, s));
            for (std::size_t d = minority.size(); d < target; ++d) {
                events.push_back(minority[rng.index(minority.size())]);
            }
        }
        for (std::size_t f = 0; f < features.size(); ++f) {
            out.push_back(SubspaceSpec{s, f, set.name + "x" + features[f].name, events, features[f].indices});
        }
    }
    return out;
}

RecursivePartition recursive_partition(const data::Dataset& dataset, std::size_t depth,
                                       const ControllerConfig& controller, double alpha, std::uint64_t seed) {
    if (depth < 1 || depth > 2) {
        throw ConfigError("partition depth must be 1 or 2, got " + std::to_string(depth));
    }
    RecursivePartition result;
    std::vector<SampleSet> frontier{{"X", {}}};
    frontier.front().indices.resize(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) frontier.front().indices[i] = i;

    std::uint64_t node = 0;
    for (std::size_t level = 0; level < depth; ++level) {
        std::vector<SampleSet> next;
        for (const SampleSet& parent : frontier) {
            const data::Dataset local = dataset.subset(parent.indices);
            if (local.count(data::Label::signal) == 0 || local.count(data::Label::background) == 0) {
                throw DataError("sample set " + parent.name + " holds a single class and cannot be partitioned");
            }
            ControllerConfig cfg = controller;
            cfg.train.seed = derive_seed(seed, 2 * node);
            const std::uint64_t swap_seed = derive_seed(seed, 2 * node + 1);
            ++node;
            nn::NetworkParams net = train_controller(local, cfg);
            const DiscriminativePartition raw = discriminative_partition(local, net, cfg.threshold);
            const DiscriminativePartition swapped = random_interchange(raw, alpha, swap_seed);

            PartitionRecord record;
            record.parent = parent.name;
            record.parent_size = parent.indices.size();
            record.hit = swapped.hit.size();
            record.anomalous = swapped.anomalous.size();
            record.selection = swapped.selection.size();
            record.rejection = swapped.rejection.size();
            record.swapped_hit_anomalous = interchange_count(alpha, raw.hit.size(), raw.anomalous.size());
            record.swapped_selection_rejection = interchange_count(alpha, raw.selection.size(), raw.rejection.size());
            record.controller_seed = cfg.train.seed;
            record.interchange_seed = swap_seed;
            result.records.push_back(record);
            result.controllers.push_back(std::move(net));

            const std::vector<std::size_t>* blocks[4] = {&swapped.hit, &swapped.anomalous, &swapped.selection,
                                                         &swapped.rejection};
            for (std::size_t b = 0; b < 4; ++b) {
                SampleSet child;
                child.name = parent.name == "X" ? kSetNames[b] : parent.name + "." + kSetNames[b];
                child.indices.reserve(blocks[b]->size());
                for (const std::size_t local_pos : *blocks[b]) child.indices.push_back(parent.indices[local_pos]);
                std::sort(child.indices.begin(), child.indices.end());
                next.push_back(std::move(child));
            }
        }
        frontier = std::move(next);
    }
    result.sets = std::move(frontier);
    return result;
}

}  // namespace defe::partition
