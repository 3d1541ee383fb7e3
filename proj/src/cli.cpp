#include "defe/cli.hpp"

#include "defe/config.hpp"
#include "defe/ensemble.hpp"
#include "defe/errors.hpp"
#include "defe/histograms.hpp"
#include "defe/metrics.hpp"
#include "defe/model_io.hpp"
#include "defe/rng.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>

namespace defe::cli {

namespace fs = std::filesystem;

namespace {

RunConfig resolve_config(const CommonOptions& options, const RunConfig& fallback = {}) {
    RunConfig config = options.config ? load_config(*options.config) : fallback;
    if (options.seed) config.seed = *options.seed;
    config.validate();
    return config;
}

std::ofstream open_file(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void write_table(const fs::path& path, const data::Dataset& events, const Eigen::MatrixXd& values,
                 const std::string& prefix) {
    auto out = open_file(path);
    out << "EventId";
    for (Eigen::Index i = 0; i < values.rows(); ++i) out << '\t' << prefix << i;
    out << '\n';
    char cell[32];
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
        out << events.events()[static_cast<std::size_t>(j)].id;
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            std::snprintf(cell, sizeof cell, "\t%.17g", values(i, j));
            out << cell;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path.string());
}

data::Dataset read_data(const std::string& path, const data::FeatureSchema& schema, bool labels) {
    return data::parse_events_file(path, schema, data::ParseOptions{.require_labels = labels}).dataset;
}

}  // namespace

void cmd_train(const TrainOptions& options, std::ostream& log) {
    RunConfig config = resolve_config(options);
    if (options.parallelism) {
        config.parallelism = *options.parallelism;
        config.validate();
    }
    const data::Dataset raw = read_data(options.data, data::FeatureSchema::higgs_challenge(), true);
    const ensemble::TrainedModel trained = ensemble::train_defe(raw, config);
    std::vector<std::string> lines = trained.artifacts.log;
    const auto& result = trained.artifacts.classifier_result;
    lines.push_back("stop " + nn::to_string(result.reason) + " epochs " + std::to_string(result.epochs_run) +
                    " best_epoch " + std::to_string(result.best_epoch));
    io::save_model(trained.model, options.out, &lines);
    log << "trained " << trained.model.learners.size() << " learners on " << raw.size() << " events; extreme "
        << trained.model.config.extreme_dim() << " -> classifier input " << trained.model.classifier.input_dim
        << "; stop " << nn::to_string(result.reason) << " after " << result.epochs_run << " epochs\n";
    log << "bundle " << options.out << '\n';
}

void cmd_evaluate(const ModelOptions& options, std::ostream& log) {
    const ensemble::DEFEModel model = io::load_model(options.model);
    const RunConfig config = resolve_config(options, model.config);
    data::Dataset test = read_data(options.data, model.schema, true);
    if (config.normalize_weights) test = data::normalize_weights(test, config.n_s_expected, config.n_b_expected);
    const std::vector<double> scores = ensemble::predict(model, test);
    const auto labels = test.labels();
    const Eigen::VectorXd w = test.weights();
    const std::span<const double> weights(w.data(), static_cast<std::size_t>(w.size()));
    const metrics::MetricsReport report =
        metrics::evaluate(scores, labels, weights, config.b_regular, config.n_s_expected, config.n_b_expected);
    const metrics::RocCurve roc = metrics::roc_curve(scores, labels, weights);
    io::write_directory_atomically(options.out, [&](const fs::path& dir) {
        auto text = open_file(dir / "report.txt");
        metrics::write_report_text(text, report);
        auto json = open_file(dir / "report.json");
        metrics::write_report_json(json, report);
        auto roc_out = open_file(dir / "roc.tsv");
        metrics::write_roc_tsv(roc_out, roc);
        auto score_out = open_file(dir / "scores.tsv");
        score_out << "EventId\tscore\n";
        char cell[32];
        for (std::size_t i = 0; i < scores.size(); ++i) {
            std::snprintf(cell, sizeof cell, "\t%.17g\n", scores[i]);
            score_out << test.events()[i].id << cell;
        }
    });
    log << "auc " << report.auc << " ams " << report.ams.value << " z " << report.significance.z << '\n';
}

void cmd_extract(const ModelOptions& options, std::ostream& log) {
    const ensemble::DEFEModel model = io::load_model(options.model);
    resolve_config(options, model.config);
    const data::Dataset events = read_data(options.data, model.schema, false);
    const ensemble::ExtractedFeatures features = ensemble::extract(model, events);
    io::write_directory_atomically(options.out, [&](const fs::path& dir) {
        write_table(dir / "extreme.tsv", events, features.extreme, "x");
        write_table(dir / "projected.tsv", events, features.projected, "p");
    });
    log << "extracted " << features.extreme.rows() << " and " << features.projected.rows() << " columns for "
        << events.size() << " events\n";
}

void cmd_histograms(const HistogramOptions& options, std::ostream& log) {
    const ensemble::DEFEModel model = io::load_model(options.model);
    const RunConfig config = resolve_config(options, model.config);
    const data::Dataset events = read_data(options.data, model.schema, true);
    const Eigen::MatrixXd features = ensemble::extract(model, events).extreme;
    const auto chosen = hist::sample_features(static_cast<std::size_t>(features.rows()), options.sample_fraction,
                                              derive_seed(config.seed, 0x4157));
    const std::size_t bins = options.bins.value_or(config.histogram_bins);
    const auto labels = events.labels();
    const Eigen::VectorXd w = events.weights();
    const std::span<const double> weights(w.data(), static_cast<std::size_t>(w.size()));
    io::write_directory_atomically(options.out, [&](const fs::path& dir) {
        for (const std::size_t f : chosen) {
            const Eigen::RowVectorXd row = features.row(static_cast<Eigen::Index>(f));
            const auto h = hist::histogram(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                           labels, weights, bins);
            char name[32];
            std::snprintf(name, sizeof name, "feature_%03zu.tsv", f);
            auto out = open_file(dir / name);
            hist::write_histogram_tsv(out, h);
        }
    });
    log << "wrote " << chosen.size() << " histograms\n";
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deep extreme feature extraction for signal/background classification", "defe"};
    app.require_subcommand(1);

    TrainOptions train;
    ModelOptions evaluate;
    ModelOptions extract;
    HistogramOptions histograms;

    auto common = [](CLI::App* sub, CommonOptions& o, const std::string& out_help) {
        sub->add_option("--config", o.config, "key = value configuration file");
        sub->add_option("--seed", o.seed, "override the configured seed");
        sub->add_option("--data", o.data, "challenge-format CSV")->required();
        sub->add_option("--out", o.out, out_help)->required();
    };
    auto* train_cmd = app.add_subcommand("train", "train a model bundle");
    common(train_cmd, train, "bundle directory to write");
    train_cmd->add_option("--parallelism", train.parallelism, "feature learners trained concurrently");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score a labeled file and write metrics");
    common(evaluate_cmd, evaluate, "report directory");
    evaluate_cmd->add_option("--model", evaluate.model, "bundle directory")->required();

    auto* extract_cmd = app.add_subcommand("extract", "write extreme and projected feature tables");
    common(extract_cmd, extract, "output directory");
    extract_cmd->add_option("--model", extract.model, "bundle directory")->required();

    auto* hist_cmd = app.add_subcommand("histograms", "per-feature class histograms of the extreme features");
    common(hist_cmd, histograms, "output directory");
    hist_cmd->add_option("--model", histograms.model, "bundle directory")->required();
    hist_cmd->add_option("--sample-fraction", histograms.sample_fraction, "fraction of features to export")
        ->check(CLI::Range(0.0, 1.0));
    hist_cmd->add_option("--bins", histograms.bins, "bins per histogram");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*train_cmd) cmd_train(train, out);
        if (*evaluate_cmd) cmd_evaluate(evaluate, out);
        if (*extract_cmd) cmd_extract(extract, out);
        if (*hist_cmd) cmd_histograms(histograms, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return numeric_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
    return ok;
}

}  // namespace defe::cli
