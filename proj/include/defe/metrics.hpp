#pragma once

#include "defe/data_model.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace defe::metrics {

/// Approximate median significance:
///   sqrt(2 ((s + b + b_reg) ln(1 + s / (b + b_reg)) - s)).
/// Evaluated through log1p and a series near s = 0 so small signals keep full
/// relative precision. Throws NumericError when b + b_reg is not positive.
double ams(double s, double b, double b_regular);

/// Sum of weights over events that are signal and predicted signal.
double selected_signal_estimate(const data::Dataset& dataset, std::span<const bool> predicted_signal);
double selected_signal_estimate(std::span<const data::Label> labels, std::span<const double> weights,
                                std::span<const bool> predicted_signal);

struct RocPoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

/// Points ordered by decreasing threshold: (+inf, 0, 0) first, then one point
/// per distinct score (tied scores form a single step); the last is (1, 1).
struct RocCurve {
    std::vector<RocPoint> points;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const data::Label> labels,
                   std::span<const double> weights);

/// Trapezoid area under the curve.
double auc(const RocCurve& curve);

struct Significance {
    double z = 0.0;
    double threshold = 0.0;
    double expected_signal = 0.0;
    double expected_background = 0.0;
};

inline constexpr double kBackgroundFloor = 1e-6;

/// Maximizes sqrt(2((s+b) ln(1+s/b) - s)) over the curve thresholds with
/// s = s_exp TPR(t), b = max(b_exp FPR(t), floor).
Significance discovery_significance(std::span<const double> scores, std::span<const data::Label> labels,
                                    std::span<const double> weights, double s_exp = 100.0,
                                    double b_exp = 1000.0, double background_floor = kBackgroundFloor);

struct AmsAtThreshold {
    double threshold = 0.0;
    double value = 0.0;
    double selected_signal = 0.0;
    double selected_background = 0.0;
};

/// Best AMS over thresholds, with s and b the summed event weights selected.
AmsAtThreshold best_ams(std::span<const double> scores, std::span<const data::Label> labels,
                        std::span<const double> weights, double b_regular);

struct MetricsReport {
    double auc = 0.0;
    AmsAtThreshold ams;
    Significance significance;
    double n_hat_s = 0.0;
    double b_regular = 0.0;
    double s_expected = 0.0;
    double b_expected = 0.0;
};

MetricsReport evaluate(std::span<const double> scores, std::span<const data::Label> labels,
                       std::span<const double> weights, double b_regular = 10.0, double s_exp = 100.0,
                       double b_exp = 1000.0);

/// `threshold\ttpr\tfpr` rows under a header line.
void write_roc_tsv(std::ostream& out, const RocCurve& curve);
RocCurve read_roc_tsv(std::istream& in);
/// Throws DataError unless endpoints exist and rates are monotone in [0, 1].
void validate_roc(const RocCurve& curve);

/// Flat `key=value` lines.
void write_report_text(std::ostream& out, const MetricsReport& report);
/// Versioned JSON document.
void write_report_json(std::ostream& out, const MetricsReport& report);

}  // namespace defe::metrics
