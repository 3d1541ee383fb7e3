#pragma once

#include "defe/data_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace defe::hist {

/// Weighted relative frequencies of one feature for each class over equal
/// bins spanning the observed range. A constant feature fills bin 0 only.
struct FeatureHistogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> signal;
    std::vector<double> background;

    std::size_t bins() const { return signal.size(); }
};

/// Throws DataError when either class carries no weight.
FeatureHistogram histogram(std::span<const double> values, std::span<const data::Label> labels,
                           std::span<const double> weights, std::size_t bins = 50);

/// round(fraction * total) distinct feature indices, ascending; fraction 1 keeps all.
std::vector<std::size_t> sample_features(std::size_t total, double fraction, std::uint64_t seed);

/// `bin\tlo\thi\tsignal\tbackground` rows under a header line.
void write_histogram_tsv(std::ostream& out, const FeatureHistogram& h);

}  // namespace defe::hist
