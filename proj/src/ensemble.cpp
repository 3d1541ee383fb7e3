#include "defe/ensemble.hpp"

#include "defe/errors.hpp"
#include "defe/rng.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace defe::ensemble {

namespace {

std::vector<Eigen::Index> to_eigen_indices(std::span<const std::size_t> values) {
    return {values.begin(), values.end()};
}

std::vector<nn::Activation> sigmoid_layers(std::size_t n) {
    return std::vector<nn::Activation>(n, nn::Activation::sigmoid);
}

FeatureLearner train_one_learner(std::size_t h, const partition::SubspaceSpec& spec, const data::Dataset& train,
                                 const LearnerTrainingConfig& config, LearnerReport* report) {
    const std::string name = spec.name.empty() ? "subspace " + std::to_string(h) : spec.name;
    if (spec.feature_set >= config.schedules.size()) {
        throw ConfigError("no layer schedule for feature set " + std::to_string(spec.feature_set + 1) +
                          " (subspace " + name + ")");
    }
    const auto& schedule = config.schedules[spec.feature_set];
    if (schedule.empty() || schedule.back() != config.k) {
        throw ConfigError("layer schedule of subspace " + name + " must end in K = " + std::to_string(config.k));
    }
    if (spec.features.empty() || spec.events.empty()) {
        throw DataError("subspace " + name + " has no events or no features");
    }
    for (const std::size_t f : spec.features) {
        if (f >= train.schema().size()) {
            throw ConfigError("subspace " + name + " references feature " + std::to_string(f) +
                              " outside the schema");
        }
    }

    FeatureLearner learner;
    learner.subspace = h;
    learner.name = name;
    learner.features = spec.features;
    learner.seed = derive_seed(config.seed, 100 + h);

    const data::Dataset local = train.subset(spec.events);
    const nn::LabeledSet set = partition::labeled_set(local, spec.features, config.weighting);

    nn::TrainLog log;
    nn::TrainConfig pretrain = config.pretrain;
    pretrain.seed = derive_seed(learner.seed, 1);
    nn::PretrainResult stack;
    try {
        stack = nn::pretrain_stack(set.inputs, schedule, pretrain, &log);
    } catch (const NumericError& e) {
        throw NumericError("subspace " + name + ": " + e.what());
    }

    Rng head_rng(derive_seed(learner.seed, 2));
    const std::array<Eigen::Index, 1> head_size{1};
    const std::array<nn::Activation, 1> head_act{nn::Activation::sigmoid};
    nn::NetworkParams head = nn::init_network(config.k, head_size, head_act, head_rng);

    nn::NetworkParams full = stack.encoder;
    full.layers.push_back(head.layers.front());
    nn::TrainConfig finetune = config.finetune;
    finetune.seed = derive_seed(learner.seed, 3);
    log.note("finetune " + std::to_string(finetune.max_epochs) + " epochs");
    double cost = 0.0;
    try {
        cost = nn::train_epochs(full, set, finetune, &log);
    } catch (const NumericError& e) {
        throw NumericError("subspace " + name + ": " + e.what());
    }
    learner.head = full.layers.back();
    full.layers.pop_back();
    learner.encoder = std::move(full);

    if (report) {
        report->name = name;
        report->events = spec.events.size();
        report->signal = local.count(data::Label::signal);
        report->pretrain = stack.traces;
        report->finetune_cost = cost;
        report->log = log.lines();
    }
    return learner;
}

}  // namespace

std::vector<FeatureLearner> train_feature_learners(const std::vector<partition::SubspaceSpec>& subspaces,
                                                   const data::Dataset& train, const LearnerTrainingConfig& config,
                                                   std::vector<LearnerReport>* reports) {
    if (subspaces.empty()) throw ConfigError("no subspaces to train feature learners on");
    config.pretrain.validate();
    config.finetune.validate();
    std::vector<std::optional<FeatureLearner>> slots(subspaces.size());
    std::vector<LearnerReport> local_reports(subspaces.size());
    std::vector<std::exception_ptr> errors(subspaces.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t h = next++; h < subspaces.size(); h = next++) {
            try {
                slots[h] = train_one_learner(h, subspaces[h], train, config, &local_reports[h]);
            } catch (...) {
                errors[h] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(config.parallelism, 1), subspaces.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& error : errors) {
        if (error) std::rethrow_exception(error);
    }
    std::vector<FeatureLearner> learners;
    learners.reserve(slots.size());
    for (auto& slot : slots) learners.push_back(std::move(*slot));
    if (reports) *reports = std::move(local_reports);
    return learners;
}

Eigen::MatrixXd extract_extreme_features(std::span<const FeatureLearner> learners, const Eigen::MatrixXd& normalized) {
    Eigen::Index rows = 0;
    for (const auto& learner : learners) rows += learner.width();
    Eigen::MatrixXd out(rows, normalized.cols());
    Eigen::Index at = 0;
    for (const auto& learner : learners) {
        const auto idx = to_eigen_indices(learner.features);
        for (const auto f : idx) {
            if (f >= normalized.rows()) {
                throw DataError("learner " + learner.name + " needs feature " + std::to_string(f) +
                                " but the input has " + std::to_string(normalized.rows()));
            }
        }
        out.middleRows(at, learner.width()) = nn::predict(learner.encoder, normalized(idx, Eigen::all));
        at += learner.width();
    }
    return out;
}

Eigen::RowVectorXd head_scores(const FeatureLearner& learner, const Eigen::MatrixXd& normalized) {
    if (!learner.head) {
        throw ConfigError("learner " + learner.name + " has no supervised head");
    }
    const auto idx = to_eigen_indices(learner.features);
    const Eigen::MatrixXd top = nn::predict(learner.encoder, normalized(idx, Eigen::all));
    const nn::NetworkParams head{learner.width(), {*learner.head}};
    return nn::predict(head, top).row(0);
}

std::vector<bool> extreme_region_members(std::span<const FeatureLearner> learners, const Eigen::MatrixXd& normalized) {
    std::vector<bool> member(static_cast<std::size_t>(normalized.cols()), false);
    for (const auto& learner : learners) {
        const Eigen::RowVectorXd scores = head_scores(learner, normalized);
        for (Eigen::Index j = 0; j < scores.size(); ++j) {
            if (scores(j) >= 0.5) member[static_cast<std::size_t>(j)] = true;
        }
    }
    return member;
}

bool extreme_region_member(std::span<const FeatureLearner> learners, const Eigen::VectorXd& normalized) {
    return extreme_region_members(learners, Eigen::MatrixXd(normalized)).front();
}

nn::FinetuneResult train_final_classifier(const nn::LabeledSet& train, const nn::LabeledSet& validation,
                                          const FinalClassifierConfig& config, nn::TrainLog* log) {
    if (train.inputs.rows() != validation.inputs.rows()) {
        throw DataError("training and validation features differ in dimension");
    }
    std::vector<Eigen::Index> sizes = config.hidden;
    sizes.push_back(1);
    Rng rng(derive_seed(config.train.seed, 0xF1));
    nn::NetworkParams net = nn::init_network(train.inputs.rows(), sizes, sigmoid_layers(sizes.size()), rng,
                                             nn::InitOptions{.zero_output_layer = true});
    return nn::finetune(std::move(net), train, validation, config.train, config.tolerances, config.metric, log);
}

void DEFEModel::validate() const {
    config.validate();
    if (learners.size() != config.learner_count()) {
        throw DataError("model holds " + std::to_string(learners.size()) + " learners, configuration implies " +
                        std::to_string(config.learner_count()));
    }
    for (const auto& learner : learners) {
        learner.encoder.validate();
        if (learner.width() != config.learner_k) {
            throw DataError("learner " + learner.name + " top width differs from K");
        }
    }
    const Eigen::Index expected = pca ? pca->output_dim() : config.extreme_dim();
    if (pca && pca->input_dim() != config.extreme_dim()) {
        throw DataError("PCA input dimension does not match the extreme feature width");
    }
    if (classifier.input_dim != expected || classifier.output_dim() != 1) {
        throw DataError("final classifier shape does not match its input features");
    }
    classifier.validate();
    const std::size_t d = schema.size();
    if (normalization.mean.size() != d || normalization.median.size() != d || normalization.stddev.size() != d) {
        throw DataError("normalization statistics do not match the schema");
    }
}

ExtractedFeatures extract(const DEFEModel& model, const Eigen::MatrixXd& raw_features) {
    if (raw_features.rows() != static_cast<Eigen::Index>(model.schema.size())) {
        throw DataError("expected " + std::to_string(model.schema.size()) + " features per event, got " +
                        std::to_string(raw_features.rows()));
    }
    Eigen::MatrixXd normalized(raw_features.rows(), raw_features.cols());
    for (Eigen::Index j = 0; j < raw_features.cols(); ++j) {
        const Eigen::VectorXd column = raw_features.col(j);
        const auto row = data::normalize_row(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())),
                                             model.normalization);
        normalized.col(j) = Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
    }
    ExtractedFeatures out;
    out.extreme = extract_extreme_features(model.learners, normalized);
    out.projected = model.pca ? pca::apply_pca(*model.pca, out.extreme) : out.extreme;
    return out;
}

ExtractedFeatures extract(const DEFEModel& model, const data::Dataset& raw) {
    if (!(raw.schema() == model.schema)) {
        throw DataError("dataset schema does not match the model schema");
    }
    return extract(model, raw.feature_matrix());
}

double predict(const DEFEModel& model, std::span<const double> raw_features) {
    const Eigen::MatrixXd column =
        Eigen::Map<const Eigen::VectorXd>(raw_features.data(), static_cast<Eigen::Index>(raw_features.size()));
    return nn::predict(model.classifier, extract(model, column).projected)(0, 0);
}

std::vector<double> predict(const DEFEModel& model, const data::Dataset& raw) {
    const Eigen::MatrixXd scores = nn::predict(model.classifier, extract(model, raw).projected);
    return {scores.data(), scores.data() + scores.size()};
}

TrainedModel train_defe(const data::Dataset& raw, const RunConfig& config) {
    config.validate();
    raw.require_labels("training");
    std::vector<std::string> log;
    const data::Dataset weighted =
        config.normalize_weights ? data::normalize_weights(raw, config.n_s_expected, config.n_b_expected) : raw;
    auto [fit_raw, val_raw] = data::split(weighted, 1.0 - config.validation_fraction, derive_seed(config.seed, 1));
    if (fit_raw.empty() || val_raw.empty()) {
        throw DataError("training data too small for the validation split");
    }

    TrainedModel result;
    DEFEModel& model = result.model;
    TrainingArtifacts& art = result.artifacts;
    model.config = config;
    model.schema = raw.schema();
    model.normalization = data::fit_normalization(fit_raw);
    art.fit = data::apply_normalization(fit_raw, model.normalization);
    art.validation = data::apply_normalization(val_raw, model.normalization);
    log.push_back("split fit " + std::to_string(art.fit.size()) + " validation " + std::to_string(art.validation.size()));

    partition::ControllerConfig controller = config.controller_config();
    art.sample_partition =
        partition::recursive_partition(art.fit, config.partition_depth, controller, config.alpha, derive_seed(config.seed, 2));
    model.controllers = art.sample_partition.controllers;
    model.partition = art.sample_partition.records;
    for (const auto& r : model.partition) {
        log.push_back("partition " + r.parent + " size " + std::to_string(r.parent_size) + " T " + std::to_string(r.hit) +
                      " F " + std::to_string(r.anomalous) + " G " + std::to_string(r.selection) + " H " +
                      std::to_string(r.rejection));
    }

    const partition::FeaturePartition features = config.features(model.schema);
    const auto labels = art.fit.labels();
    art.subspaces =
        partition::build_subspaces(art.sample_partition.sets, features, labels, config.balance_floor, derive_seed(config.seed, 3));
    for (const auto& s : art.subspaces) {
        model.subspaces.push_back({s.name, s.sample_set, s.feature_set, s.events.size(), s.features.size()});
    }

    LearnerTrainingConfig learner_config;
    for (std::size_t f = 0; f < features.size(); ++f) {
        learner_config.schedules.push_back(config.feature_sets == 1 ? config.schedule_s3 : config.schedule(f));
    }
    learner_config.k = config.learner_k;
    learner_config.pretrain = config.train_config(config.pretrain_epochs, config.seed);
    learner_config.finetune = config.train_config(config.learner_finetune_epochs, config.seed);
    learner_config.weighting = config.learner_weighting;
    learner_config.seed = derive_seed(config.seed, 4);
    learner_config.parallelism = config.parallelism;
    std::vector<LearnerReport> reports;
    model.learners = train_feature_learners(art.subspaces, art.fit, learner_config, &reports);
    for (const auto& r : reports) {
        log.push_back("learner " + r.name + " events " + std::to_string(r.events) + " signal " + std::to_string(r.signal));
        for (const auto& line : r.log) log.push_back(line);
    }

    const Eigen::MatrixXd fit_x = art.fit.feature_matrix();
    const Eigen::MatrixXd val_x = art.validation.feature_matrix();
    Eigen::MatrixXd fit_features = extract_extreme_features(model.learners, fit_x);
    Eigen::MatrixXd val_features = extract_extreme_features(model.learners, val_x);
    if (config.pca_enabled) {
        model.pca = pca::fit_pca(fit_features, config.pca_k);
        fit_features = pca::apply_pca(*model.pca, fit_features);
        val_features = pca::apply_pca(*model.pca, val_features);
        log.push_back("pca " + std::to_string(model.pca->input_dim()) + " -> " + std::to_string(model.pca->output_dim()));
    }

    auto labeled = [&](const data::Dataset& d, Eigen::MatrixXd inputs) {
        nn::LabeledSet set = partition::labeled_set(d, config.final_weighting);
        set.inputs = std::move(inputs);
        return set;
    };
    FinalClassifierConfig final_config;
    final_config.hidden = config.final_hidden;
    final_config.train = config.train_config(config.final_max_epochs, derive_seed(config.seed, 5));
    final_config.tolerances = config.tolerances();
    final_config.metric = config.validation_metric;
    nn::TrainLog classifier_log;
    classifier_log.note("classifier");
    art.classifier_result = train_final_classifier(labeled(art.fit, std::move(fit_features)),
                                                   labeled(art.validation, std::move(val_features)), final_config,
                                                   &classifier_log);
    model.classifier = art.classifier_result.net;
    for (const auto& line : classifier_log.lines()) log.push_back(line);
    art.log = std::move(log);
    model.validate();
    return result;
}

BaselineModel train_baseline(const data::Dataset& raw, const RunConfig& config, std::vector<Eigen::Index> hidden,
                             std::size_t max_epochs) {
    config.validate();
    raw.require_labels("baseline training");
    const data::Dataset weighted =
        config.normalize_weights ? data::normalize_weights(raw, config.n_s_expected, config.n_b_expected) : raw;
    auto [fit_raw, val_raw] = data::split(weighted, 1.0 - config.validation_fraction, derive_seed(config.seed, 1));
    BaselineModel model;
    model.normalization = data::fit_normalization(fit_raw);
    const data::Dataset fit = data::apply_normalization(fit_raw, model.normalization);
    const data::Dataset val = data::apply_normalization(val_raw, model.normalization);
    FinalClassifierConfig net_config;
    net_config.hidden = std::move(hidden);
    net_config.train = config.train_config(max_epochs, derive_seed(config.seed, 6));
    net_config.tolerances = config.tolerances();
    net_config.metric = config.validation_metric;
    model.net = train_final_classifier(partition::labeled_set(fit, config.final_weighting),
                                       partition::labeled_set(val, config.final_weighting), net_config)
                    .net;
    return model;
}

std::vector<double> predict(const BaselineModel& model, const data::Dataset& raw) {
    const data::Dataset normalized = data::apply_normalization(raw, model.normalization);
    const Eigen::MatrixXd scores = nn::predict(model.net, normalized.feature_matrix());
    return {scores.data(), scores.data() + scores.size()};
}

DiversityReport diversity(std::span<const FeatureLearner> learners, const Eigen::MatrixXd& normalized) {
    const Eigen::MatrixXd features = extract_extreme_features(learners, normalized);
    const Eigen::MatrixXd centered = features.colwise() - features.rowwise().mean();
    const Eigen::VectorXd norms = centered.rowwise().norm();
    const Eigen::MatrixXd gram = centered * centered.transpose();
    std::vector<std::size_t> owner;
    for (std::size_t m = 0; m < learners.size(); ++m) {
        for (Eigen::Index k = 0; k < learners[m].width(); ++k) owner.push_back(m);
    }
    double between = 0.0;
    double within = 0.0;
    std::size_t n_between = 0;
    std::size_t n_within = 0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
        if (!(norms(i) > 0.0)) continue;
        for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
            if (!(norms(j) > 0.0)) continue;
            const double r = std::abs(gram(i, j) / (norms(i) * norms(j)));
            if (owner[static_cast<std::size_t>(i)] == owner[static_cast<std::size_t>(j)]) {
                within += r;
                ++n_within;
            } else {
                between += r;
                ++n_between;
            }
        }
    }
    return {n_between ? between / static_cast<double>(n_between) : 0.0,
            n_within ? within / static_cast<double>(n_within) : 0.0};
}

}  // namespace defe::ensemble
