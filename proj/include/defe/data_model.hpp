#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace defe::data {

/// Cells holding exactly this value are treated as undefined.
inline constexpr double kMissingSentinel = -999.0;

inline bool is_missing(double value) { return value == kMissingSentinel; }

enum class Label : std::uint8_t { background = 0, signal = 1 };

enum class FeatureGroup : std::uint8_t { momentum, derived };

/// The 30 challenge columns: 13 `DER_*` (derived) then 17 `PRI_*` (momentum).
class FeatureSchema {
public:
    static constexpr std::size_t kFeatureCount = 30;
    static constexpr std::size_t kDerivedCount = 13;
    static constexpr std::size_t kPrimitiveCount = 17;

    /// Canonical column order of the public challenge files.
    static FeatureSchema higgs_challenge();

    /// Validates the DER/PRI composition; groups follow the name prefix.
    explicit FeatureSchema(std::vector<std::string> names);

    const std::vector<std::string>& names() const { return names_; }
    const std::vector<FeatureGroup>& groups() const { return groups_; }
    std::size_t size() const { return names_.size(); }
    std::vector<std::size_t> indices_in(FeatureGroup group) const;
    /// Throws DataError when the name is not part of the schema.
    std::size_t index_of(const std::string& name) const;

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

private:
    std::vector<std::string> names_;
    std::vector<FeatureGroup> groups_;
};

struct Event {
    std::int64_t id = 0;
    std::vector<double> features;
    Label label = Label::background;
    double weight = 1.0;
};

/// Immutable once built; every transform returns a new Dataset.
class Dataset {
public:
    Dataset() : Dataset(FeatureSchema::higgs_challenge(), {}) {}
    Dataset(FeatureSchema schema, std::vector<Event> events, bool labeled = true);

    const FeatureSchema& schema() const { return schema_; }
    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    bool labeled() const { return labeled_; }

    double n_s_expected() const { return n_s_expected_; }
    double n_b_expected() const { return n_b_expected_; }

    std::size_t count(Label label) const;

    /// Features as a (feature × event) matrix; examples are columns.
    Eigen::MatrixXd feature_matrix() const;
    Eigen::VectorXd targets() const;
    Eigen::VectorXd weights() const;
    std::vector<Label> labels() const;

    /// Events at the given positions (duplicates allowed), same schema.
    Dataset subset(std::span<const std::size_t> positions) const;

    /// Throws DataError unless the dataset carries labels.
    void require_labels(const std::string& context) const;

private:
    friend Dataset normalize_weights(const Dataset&, double, double);

    FeatureSchema schema_;
    std::vector<Event> events_;
    bool labeled_ = true;
    double n_s_expected_ = 0.0;
    double n_b_expected_ = 0.0;
};

struct ParseOptions {
    /// When false, Weight and Label columns may be absent (unit weights).
    bool require_labels = true;
};

/// One header column bound to a schema role; used for the mapping report.
struct ColumnBinding {
    std::string column;
    std::size_t file_position = 0;
    std::string role;
};

struct ParsedEvents {
    Dataset dataset;
    std::vector<ColumnBinding> bindings;
    std::vector<std::string> ignored_columns;
};

/// Reads challenge-format CSV. Columns are matched by name, so file order may
/// differ from schema order; unknown extra columns are ignored and reported.
ParsedEvents parse_events(std::istream& in, const FeatureSchema& schema,
                          const ParseOptions& options = {});
ParsedEvents parse_events_file(const std::string& path, const FeatureSchema& schema,
                               const ParseOptions& options = {});

/// Text report listing how header columns were mapped.
std::string format_column_report(const ParsedEvents& parsed);

/// Writes the dataset back in challenge CSV layout with round-trip precision.
void write_events(std::ostream& out, const Dataset& dataset);

/// Uniform per-class weights so that signal sums to n_s and background to n_b.
Dataset normalize_weights(const Dataset& dataset, double n_s_expected, double n_b_expected);

struct NormalizationStats {
    std::vector<double> median;
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Medians over non-missing cells; moments after median imputation.
NormalizationStats fit_normalization(const Dataset& train);

/// Imputes then z-scores one raw feature row.
std::vector<double> normalize_row(std::span<const double> raw, const NormalizationStats& stats);

Dataset apply_normalization(const Dataset& dataset, const NormalizationStats& stats);

/// Seeded shuffle split; the first part receives round(fraction * size) events.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

}  // namespace defe::data
