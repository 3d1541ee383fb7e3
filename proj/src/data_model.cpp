#include "defe/data_model.hpp"

#include "defe/errors.hpp"
#include "defe/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace defe::data {

namespace {

const std::vector<std::string>& challenge_names() {
    static const std::vector<std::string> names = {
        "DER_mass_MMC",
        "DER_mass_transverse_met_lep",
        "DER_mass_vis",
        "DER_pt_h",
        "DER_deltaeta_jet_jet",
        "DER_mass_jet_jet",
        "DER_prodeta_jet_jet",
        "DER_deltar_tau_lep",
        "DER_pt_tot",
        "DER_sum_pt",
        "DER_pt_ratio_lep_tau",
        "DER_met_phi_centrality",
        "DER_lep_eta_centrality",
        "PRI_tau_pt",
        "PRI_tau_eta",
        "PRI_tau_phi",
        "PRI_lep_pt",
        "PRI_lep_eta",
        "PRI_lep_phi",
        "PRI_met",
        "PRI_met_phi",
        "PRI_met_sumet",
        "PRI_jet_num",
        "PRI_jet_leading_pt",
        "PRI_jet_leading_eta",
        "PRI_jet_leading_phi",
        "PRI_jet_subleading_pt",
        "PRI_jet_subleading_eta",
        "PRI_jet_subleading_phi",
        "PRI_jet_all_pt",
    };
    return names;
}

bool starts_with(const std::string& text, std::string_view prefix) {
    return text.size() >= prefix.size() && std::string_view(text).substr(0, prefix.size()) == prefix;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& field : fields) {
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
            field.remove_suffix(1);
        }
    }
    return fields;
}

bool parse_real(std::string_view text, double& value) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto result = std::from_chars(text.data(), end, value);
    return result.ec == std::errc() && result.ptr == end && !text.empty();
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------------------
// FeatureSchema

FeatureSchema FeatureSchema::higgs_challenge() { return FeatureSchema(challenge_names()); }

FeatureSchema::FeatureSchema(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() != kFeatureCount) {
        throw DataError("feature schema must list exactly 30 features, got " +
                        std::to_string(names_.size()));
    }
    std::size_t derived = 0;
    std::size_t primitive = 0;
    for (const auto& name : names_) {
        if (starts_with(name, "DER_")) {
            groups_.push_back(FeatureGroup::derived);
            ++derived;
        } else if (starts_with(name, "PRI_")) {
            groups_.push_back(FeatureGroup::momentum);
            ++primitive;
        } else {
            throw DataError("feature '" + name + "' is neither DER_ nor PRI_");
        }
    }
    if (derived != kDerivedCount || primitive != kPrimitiveCount) {
        throw DataError("feature schema needs 13 DER_ and 17 PRI_ features, got " +
                        std::to_string(derived) + " and " + std::to_string(primitive));
    }
    std::vector<std::string> sorted = names_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw DataError("feature schema contains duplicate names");
    }
}

std::vector<std::size_t> FeatureSchema::indices_in(FeatureGroup group) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        if (groups_[i] == group) out.push_back(i);
    }
    return out;
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        throw DataError("feature '" + name + "' is not in the schema");
    }
    return static_cast<std::size_t>(it - names_.begin());
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(FeatureSchema schema, std::vector<Event> events, bool labeled)
    : schema_(std::move(schema)), events_(std::move(events)), labeled_(labeled) {
    for (const auto& event : events_) {
        if (event.features.size() != schema_.size()) {
            throw DataError("event " + std::to_string(event.id) + " has " +
                            std::to_string(event.features.size()) + " features, schema has " +
                            std::to_string(schema_.size()));
        }
        if (!(event.weight > 0.0) || !std::isfinite(event.weight)) {
            throw DataError("event " + std::to_string(event.id) + " has non-positive weight");
        }
        (event.label == Label::signal ? n_s_expected_ : n_b_expected_) += event.weight;
    }
}

std::size_t Dataset::count(Label label) const {
    return static_cast<std::size_t>(std::count_if(
        events_.begin(), events_.end(), [label](const Event& e) { return e.label == label; }));
}

Eigen::MatrixXd Dataset::feature_matrix() const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(schema_.size()), static_cast<Eigen::Index>(size()));
    for (std::size_t j = 0; j < events_.size(); ++j) {
        for (std::size_t f = 0; f < schema_.size(); ++f) {
            out(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(j)) = events_[j].features[f];
        }
    }
    return out;
}

Eigen::VectorXd Dataset::targets() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t j = 0; j < events_.size(); ++j) {
        out(static_cast<Eigen::Index>(j)) = events_[j].label == Label::signal ? 1.0 : 0.0;
    }
    return out;
}

Eigen::VectorXd Dataset::weights() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t j = 0; j < events_.size(); ++j) {
        out(static_cast<Eigen::Index>(j)) = events_[j].weight;
    }
    return out;
}

std::vector<Label> Dataset::labels() const {
    std::vector<Label> out;
    out.reserve(events_.size());
    for (const auto& e : events_) out.push_back(e.label);
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> positions) const {
    std::vector<Event> picked;
    picked.reserve(positions.size());
    for (const std::size_t p : positions) {
        if (p >= events_.size()) {
            throw DataError("subset position " + std::to_string(p) + " out of range");
        }
        picked.push_back(events_[p]);
    }
    return Dataset(schema_, std::move(picked), labeled_);
}

void Dataset::require_labels(const std::string& context) const {
    if (!labeled_) {
        throw DataError(context + " requires labeled data (Label and Weight columns)");
    }
}

// ---------------------------------------------------------------------------
// CSV

ParsedEvents parse_events(std::istream& in, const FeatureSchema& schema, const ParseOptions& options) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("CSV input is empty: header row expected");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
        line.erase(0, 3);  // UTF-8 BOM
    }
    const auto header = split_fields(line);
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!position.emplace(std::string(header[i]), i).second) {
            throw DataError("duplicate column '" + std::string(header[i]) + "' in header");
        }
    }
    auto locate = [&](const std::string& column) -> std::optional<std::size_t> {
        const auto it = position.find(column);
        if (it == position.end()) return std::nullopt;
        return it->second;
    };
    auto require = [&](const std::string& column) {
        const auto found = locate(column);
        if (!found) throw DataError("missing required column '" + column + "'");
        return *found;
    };

    std::vector<ColumnBinding> bindings;
    const std::size_t id_col = require("EventId");
    bindings.push_back({"EventId", id_col, "id"});
    std::vector<std::size_t> feature_cols;
    for (std::size_t f = 0; f < schema.size(); ++f) {
        feature_cols.push_back(require(schema.names()[f]));
        bindings.push_back({schema.names()[f], feature_cols.back(), "feature " + std::to_string(f)});
    }
    std::optional<std::size_t> weight_col = locate("Weight");
    std::optional<std::size_t> label_col = locate("Label");
    if (options.require_labels) {
        weight_col = require("Weight");
        label_col = require("Label");
    }
    const bool labeled = weight_col.has_value() && label_col.has_value();
    if (labeled) {
        bindings.push_back({"Weight", *weight_col, "weight"});
        bindings.push_back({"Label", *label_col, "label"});
    }
    std::vector<std::string> ignored;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const bool bound = std::any_of(bindings.begin(), bindings.end(),
                                       [i](const ColumnBinding& b) { return b.file_position == i; });
        if (!bound) ignored.emplace_back(header[i]);
    }

    std::vector<Event> events;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        }
        Event event;
        double id_value = 0.0;
        if (!parse_real(fields[id_col], id_value)) {
            throw DataError("row " + std::to_string(row) + ": EventId '" + std::string(fields[id_col]) +
                            "' is not numeric");
        }
        event.id = static_cast<std::int64_t>(id_value);
        event.features.resize(schema.size());
        for (std::size_t f = 0; f < schema.size(); ++f) {
            if (!parse_real(fields[feature_cols[f]], event.features[f]) || std::isnan(event.features[f])) {
                throw DataError("row " + std::to_string(row) + ": column " + schema.names()[f] + " value '" +
                                std::string(fields[feature_cols[f]]) + "' is not numeric");
            }
        }
        if (labeled) {
            if (!parse_real(fields[*weight_col], event.weight) || !(event.weight > 0.0)) {
                throw DataError("row " + std::to_string(row) + ": Weight '" +
                                std::string(fields[*weight_col]) + "' is not a positive number");
            }
            const auto label = fields[*label_col];
            if (label == "s") {
                event.label = Label::signal;
            } else if (label == "b") {
                event.label = Label::background;
            } else {
                throw DataError("row " + std::to_string(row) + ": Label '" + std::string(label) +
                                "' is not one of {s, b}");
            }
        }
        events.push_back(std::move(event));
    }
    return ParsedEvents{Dataset(schema, std::move(events), labeled), std::move(bindings), std::move(ignored)};
}

ParsedEvents parse_events_file(const std::string& path, const FeatureSchema& schema,
                               const ParseOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    return parse_events(in, schema, options);
}

std::string format_column_report(const ParsedEvents& parsed) {
    std::ostringstream out;
    out << "columns mapped: " << parsed.bindings.size() << "\n";
    for (const auto& b : parsed.bindings) {
        out << "  " << b.column << " <- file column " << b.file_position << " (" << b.role << ")\n";
    }
    out << "columns ignored: " << parsed.ignored_columns.size() << "\n";
    for (const auto& name : parsed.ignored_columns) {
        out << "  " << name << "\n";
    }
    out << "events: " << parsed.dataset.size() << " labeled: " << (parsed.dataset.labeled() ? "yes" : "no")
        << "\n";
    return out.str();
}

void write_events(std::ostream& out, const Dataset& dataset) {
    out << "EventId";
    for (const auto& name : dataset.schema().names()) out << ',' << name;
    if (dataset.labeled()) out << ",Weight,Label";
    out << '\n';
    out << std::setprecision(17);
    for (const auto& e : dataset.events()) {
        out << e.id;
        for (const double v : e.features) out << ',' << v;
        if (dataset.labeled()) {
            out << ',' << e.weight << ',' << (e.label == Label::signal ? 's' : 'b');
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Weights and normalization

Dataset normalize_weights(const Dataset& dataset, double n_s_expected, double n_b_expected) {
    dataset.require_labels("normalize_weights");
    if (!(n_s_expected > 0.0) || !(n_b_expected > 0.0)) {
        throw ConfigError("expected signal and background counts must be positive");
    }
    const std::size_t n_signal = dataset.count(Label::signal);
    const std::size_t n_background = dataset.count(Label::background);
    if (n_signal == 0 || n_background == 0) {
        throw DataError("weight normalization needs at least one signal and one background event");
    }
    const double w_signal = n_s_expected / static_cast<double>(n_signal);
    const double w_background = n_b_expected / static_cast<double>(n_background);
    std::vector<Event> events = dataset.events();
    for (auto& e : events) {
        e.weight = e.label == Label::signal ? w_signal : w_background;
    }
    Dataset out(dataset.schema(), std::move(events), true);
    out.n_s_expected_ = n_s_expected;
    out.n_b_expected_ = n_b_expected;
    return out;
}

NormalizationStats fit_normalization(const Dataset& train) {
    if (train.empty()) {
        throw DataError("cannot fit normalization on an empty dataset");
    }
    const std::size_t d = train.schema().size();
    NormalizationStats stats;
    stats.median.resize(d);
    stats.mean.resize(d);
    stats.stddev.resize(d);
    std::vector<double> column;
    column.reserve(train.size());
    for (std::size_t f = 0; f < d; ++f) {
        column.clear();
        for (const auto& e : train.events()) {
            if (!is_missing(e.features[f])) column.push_back(e.features[f]);
        }
        if (column.empty()) {
            throw DataError("feature '" + train.schema().names()[f] + "' has no non-missing values");
        }
        const double median = median_of(column);
        double sum = 0.0;
        for (const auto& e : train.events()) {
            sum += is_missing(e.features[f]) ? median : e.features[f];
        }
        const double n = static_cast<double>(train.size());
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& e : train.events()) {
            const double x = (is_missing(e.features[f]) ? median : e.features[f]) - mean;
            ss += x * x;
        }
        double stddev = std::sqrt(ss / n);
        if (!(stddev > 1e-12 * std::max(1.0, std::abs(mean)))) {
            stddev = 1.0;  // constant column
        }
        stats.median[f] = median;
        stats.mean[f] = mean;
        stats.stddev[f] = stddev;
    }
    return stats;
}

std::vector<double> normalize_row(std::span<const double> raw, const NormalizationStats& stats) {
    if (raw.size() != stats.mean.size()) {
        throw DataError("expected " + std::to_string(stats.mean.size()) + " features, got " +
                        std::to_string(raw.size()));
    }
    std::vector<double> out(raw.size());
    for (std::size_t f = 0; f < raw.size(); ++f) {
        const double x = is_missing(raw[f]) ? stats.median[f] : raw[f];
        out[f] = (x - stats.mean[f]) / stats.stddev[f];
    }
    return out;
}

Dataset apply_normalization(const Dataset& dataset, const NormalizationStats& stats) {
    if (stats.mean.size() != dataset.schema().size() || stats.median.size() != stats.mean.size() ||
        stats.stddev.size() != stats.mean.size()) {
        throw DataError("normalization statistics do not match the dataset schema");
    }
    std::vector<Event> events = dataset.events();
    for (auto& e : events) {
        e.features = normalize_row(e.features, stats);
    }
    Dataset out(dataset.schema(), std::move(events), dataset.labeled());
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train fraction must lie in (0, 1)");
    }
    if (dataset.empty()) {
        throw DataError("cannot split an empty dataset");
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_first = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(dataset.size())));
    const std::span<const std::size_t> all(order);
    return {dataset.subset(all.first(n_first)), dataset.subset(all.subspan(n_first))};
}

}  // namespace defe::data
