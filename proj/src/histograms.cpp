#include "defe/histograms.hpp"

#include "defe/errors.hpp"
#include "defe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace defe::hist {

FeatureHistogram histogram(std::span<const double> values, std::span<const data::Label> labels,
                           std::span<const double> weights, std::size_t bins) {
    if (bins == 0) throw ConfigError("histogram needs at least one bin");
    if (values.size() != labels.size() || values.size() != weights.size()) {
        throw DataError("histogram inputs differ in length");
    }
    if (values.empty()) throw DataError("histogram of an empty sample");
    FeatureHistogram h;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo;
    h.hi = *hi;
    h.signal.assign(bins, 0.0);
    h.background.assign(bins, 0.0);
    const double width = h.hi - h.lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::size_t b = 0;
        if (width > 0.0) {
            const double pos = std::floor((values[i] - h.lo) / width * static_cast<double>(bins));
            b = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), bins - 1);
        }
        (labels[i] == data::Label::signal ? h.signal : h.background)[b] += weights[i];
    }
    for (auto* counts : {&h.signal, &h.background}) {
        double total = 0.0;
        for (const double c : *counts) total += c;
        if (!(total > 0.0)) throw DataError("histogram needs weighted events of both classes");
        for (double& c : *counts) c /= total;
    }
    return h;
}

std::vector<std::size_t> sample_features(std::size_t total, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("sample fraction must be in (0, 1]");
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
    if (k >= total) {
        std::vector<std::size_t> all(total);
        for (std::size_t i = 0; i < total; ++i) all[i] = i;
        return all;
    }
    Rng rng(seed);
    auto picked = rng.sample_without_replacement(total, k);
    std::sort(picked.begin(), picked.end());
    return picked;
}

void write_histogram_tsv(std::ostream& out, const FeatureHistogram& h) {
    out << "bin\tlo\thi\tsignal\tbackground\n";
    const double width = (h.hi - h.lo) / static_cast<double>(h.bins());
    char line[160];
    for (std::size_t b = 0; b < h.bins(); ++b) {
        const double lo = h.lo + width * static_cast<double>(b);
        const double hi = b + 1 == h.bins() ? h.hi : h.lo + width * static_cast<double>(b + 1);
        std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\n", b, lo, hi, h.signal[b], h.background[b]);
        out << line;
    }
}

}  // namespace defe::hist
