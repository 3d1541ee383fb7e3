#include "defe/metrics.hpp"

#include "defe/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace defe::metrics {

namespace {

// (1 + x) ln(1 + x) - x, accurate for small x.
double ams_kernel(double x) {
    if (x >= 0.1) {
        return (1.0 + x) * std::log1p(x) - x;
    }
    // sum_{k>=2} (-1)^k x^k / (k (k - 1))
    double sum = 0.0;
    double power = x * x;
    for (int k = 2; k < 60; ++k) {
        const double term = power / (static_cast<double>(k) * static_cast<double>(k - 1));
        sum += (k % 2 == 0) ? term : -term;
        if (term <= 1e-18 * sum) break;
        power *= x;
    }
    return sum;
}

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
    if (a != b || a != c) {
        throw DataError("scores, labels and weights must have equal length");
    }
}

struct WeightedCounts {
    std::vector<double> thresholds;
    std::vector<double> signal;      // cumulative selected signal weight
    std::vector<double> background;  // cumulative selected background weight
    double total_signal = 0.0;
    double total_background = 0.0;
};

// Cumulative weights at each distinct score, scanning from the highest score.
WeightedCounts cumulate(std::span<const double> scores, std::span<const data::Label> labels,
                        std::span<const double> weights) {
    check_lengths(scores.size(), labels.size(), weights.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    WeightedCounts out;
    double s = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t e = order[i];
        if (std::isnan(scores[e])) throw NumericError("score is NaN");
        if (!(weights[e] >= 0.0)) throw DataError("event weights must be nonnegative");
        (labels[e] == data::Label::signal ? s : b) += weights[e];
        if (i + 1 == order.size() || scores[order[i + 1]] != scores[e]) {
            out.thresholds.push_back(scores[e]);
            out.signal.push_back(s);
            out.background.push_back(b);
        }
    }
    out.total_signal = s;
    out.total_background = b;
    if (!(s > 0.0) || !(b > 0.0)) {
        throw DataError("ROC analysis needs positive signal and background weight");
    }
    return out;
}

}  // namespace

double ams(double s, double b, double b_regular) {
    const double denom = b + b_regular;
    if (!(denom > 0.0)) {
        throw NumericError("AMS needs b + b_regular > 0");
    }
    if (!(s >= 0.0)) {
        throw NumericError("AMS needs s >= 0");
    }
    if (s == 0.0) return 0.0;
    return std::sqrt(2.0 * denom * ams_kernel(s / denom));
}

double selected_signal_estimate(std::span<const data::Label> labels, std::span<const double> weights,
                                std::span<const bool> predicted_signal) {
    check_lengths(labels.size(), weights.size(), predicted_signal.size());
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == data::Label::signal && predicted_signal[i]) total += weights[i];
    }
    return total;
}

double selected_signal_estimate(const data::Dataset& dataset, std::span<const bool> predicted_signal) {
    dataset.require_labels("selected signal estimate");
    const auto labels = dataset.labels();
    std::vector<double> weights;
    weights.reserve(dataset.size());
    for (const auto& e : dataset.events()) weights.push_back(e.weight);
    return selected_signal_estimate(labels, weights, predicted_signal);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const data::Label> labels,
                   std::span<const double> weights) {
    const WeightedCounts counts = cumulate(scores, labels, weights);
    RocCurve curve;
    curve.points.reserve(counts.thresholds.size() + 1);
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (std::size_t i = 0; i < counts.thresholds.size(); ++i) {
        curve.points.push_back({counts.thresholds[i], counts.signal[i] / counts.total_signal,
                                counts.background[i] / counts.total_background});
    }
    // Cumulative sums may land a few ulps away from one.
    curve.points.back().tpr = 1.0;
    curve.points.back().fpr = 1.0;
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (b.tpr + a.tpr) * 0.5;
    }
    return area;
}

Significance discovery_significance(std::span<const double> scores, std::span<const data::Label> labels,
                                    std::span<const double> weights, double s_exp, double b_exp,
                                    double background_floor) {
    if (!(background_floor > 0.0)) throw ConfigError("background floor must be positive");
    const RocCurve curve = roc_curve(scores, labels, weights);
    Significance best;
    best.threshold = curve.points.front().threshold;
    best.expected_background = background_floor;
    for (const auto& p : curve.points) {
        const double s = s_exp * p.tpr;
        const double b = std::max(b_exp * p.fpr, background_floor);
        const double z = ams(s, b, 0.0);
        if (z > best.z) {
            best = {z, p.threshold, s, b};
        }
    }
    return best;
}

AmsAtThreshold best_ams(std::span<const double> scores, std::span<const data::Label> labels,
                        std::span<const double> weights, double b_regular) {
    const WeightedCounts counts = cumulate(scores, labels, weights);
    AmsAtThreshold best;
    best.threshold = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < counts.thresholds.size(); ++i) {
        const double value = ams(counts.signal[i], counts.background[i], b_regular);
        if (value > best.value) {
            best = {counts.thresholds[i], value, counts.signal[i], counts.background[i]};
        }
    }
    return best;
}

MetricsReport evaluate(std::span<const double> scores, std::span<const data::Label> labels,
                       std::span<const double> weights, double b_regular, double s_exp, double b_exp) {
    MetricsReport report;
    report.auc = auc(roc_curve(scores, labels, weights));
    report.ams = best_ams(scores, labels, weights, b_regular);
    report.significance = discovery_significance(scores, labels, weights, s_exp, b_exp);
    report.n_hat_s = report.ams.selected_signal;
    report.b_regular = b_regular;
    report.s_expected = s_exp;
    report.b_expected = b_exp;
    return report;
}

void write_roc_tsv(std::ostream& out, const RocCurve& curve) {
    out << "threshold\ttpr\tfpr\n" << std::setprecision(17);
    for (const auto& p : curve.points) {
        out << p.threshold << '\t' << p.tpr << '\t' << p.fpr << '\n';
    }
}

RocCurve read_roc_tsv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "threshold\ttpr\tfpr") {
        throw DataError("ROC file must start with the header 'threshold\\ttpr\\tfpr'");
    }
    RocCurve curve;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cells[3];
        for (auto& cell : cells) {
            if (!std::getline(fields, cell, '\t')) {
                throw DataError("ROC row " + std::to_string(row) + " needs three fields");
            }
        }
        RocPoint p;
        double* slots[3] = {&p.threshold, &p.tpr, &p.fpr};
        for (int i = 0; i < 3; ++i) {
            char* end = nullptr;
            *slots[i] = std::strtod(cells[i].c_str(), &end);
            if (end == cells[i].c_str() || *end != '\0') {
                throw DataError("ROC row " + std::to_string(row) + " has a non-numeric field");
            }
        }
        curve.points.push_back(p);
    }
    return curve;
}

void validate_roc(const RocCurve& curve) {
    if (curve.points.size() < 2) throw DataError("ROC curve needs at least its two endpoints");
    const auto& first = curve.points.front();
    const auto& last = curve.points.back();
    if (first.tpr != 0.0 || first.fpr != 0.0 || last.tpr != 1.0 || last.fpr != 1.0) {
        throw DataError("ROC curve must run from (0,0) to (1,1)");
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        if (!(b.threshold < a.threshold) || b.tpr < a.tpr || b.fpr < a.fpr || b.tpr > 1.0 || b.fpr > 1.0) {
            throw DataError("ROC curve is not monotone at row " + std::to_string(i));
        }
    }
}

void write_report_text(std::ostream& out, const MetricsReport& report) {
    out << std::setprecision(17);
    out << "auc=" << report.auc << '\n';
    out << "ams=" << report.ams.value << '\n';
    out << "ams_threshold=" << report.ams.threshold << '\n';
    out << "ams_b_regular=" << report.b_regular << '\n';
    out << "discovery_significance_z=" << report.significance.z << '\n';
    out << "discovery_threshold=" << report.significance.threshold << '\n';
    out << "discovery_background_floor=" << kBackgroundFloor << '\n';
    out << "n_hat_s=" << report.n_hat_s << '\n';
}

void write_report_json(std::ostream& out, const MetricsReport& report) {
    nlohmann::ordered_json doc;
    doc["format"] = "defe-metrics";
    doc["version"] = 1;
    doc["auc"] = report.auc;
    doc["ams"] = {{"value", report.ams.value},
                  {"threshold", report.ams.threshold},
                  {"b_regular", report.b_regular},
                  {"selected_signal", report.ams.selected_signal},
                  {"selected_background", report.ams.selected_background}};
    doc["discovery_significance"] = {{"z", report.significance.z},
                                     {"threshold", report.significance.threshold},
                                     {"s_expected", report.s_expected},
                                     {"b_expected", report.b_expected},
                                     {"background_floor", kBackgroundFloor}};
    doc["n_hat_s"] = report.n_hat_s;
    out << doc.dump(2) << '\n';
}

}  // namespace defe::metrics
