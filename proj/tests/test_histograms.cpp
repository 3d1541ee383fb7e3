#include "defe/errors.hpp"
#include "defe/histograms.hpp"
#include "defe/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

using namespace defe;
using namespace defe::hist;
using data::Label;

TEST_CASE("each class sums to one") {
    Rng rng(1);
    std::vector<double> v;
    std::vector<Label> l;
    std::vector<double> w;
    for (int i = 0; i < 1000; ++i) {
        v.push_back(rng.normal());
        l.push_back(rng.index(3) == 0 ? Label::signal : Label::background);
        w.push_back(rng.uniform(0.001, 5.0));
    }
    const auto h = histogram(v, l, w);
    CHECK(h.bins() == 50);
    CHECK(std::abs(std::accumulate(h.signal.begin(), h.signal.end(), 0.0) - 1.0) < 1e-9);
    CHECK(std::abs(std::accumulate(h.background.begin(), h.background.end(), 0.0) - 1.0) < 1e-9);
    CHECK(h.lo == *std::min_element(v.begin(), v.end()));
    CHECK(h.hi == *std::max_element(v.begin(), v.end()));
}

TEST_CASE("hand-binned example") {
    const std::vector<double> v{0.0, 1.0, 2.0, 3.0, 4.0};
    const std::vector<Label> l{Label::signal, Label::background, Label::signal, Label::background, Label::signal};
    const std::vector<double> w{1.0, 1.0, 2.0, 3.0, 1.0};
    const auto h = histogram(v, l, w, 4);
    // bins of width 1 over [0, 4]; the maximum lands in the last bin
    CHECK(h.signal == std::vector<double>{0.25, 0.0, 0.5, 0.25});
    CHECK(h.background == std::vector<double>{0.0, 0.25, 0.0, 0.75});
}

TEST_CASE("constant feature fills a single bin") {
    const std::vector<double> v(10, 0.5);
    std::vector<Label> l(10, Label::background);
    l[3] = Label::signal;
    const std::vector<double> w(10, 1.0);
    const auto h = histogram(v, l, w);
    CHECK(h.signal[0] == 1.0);
    CHECK(h.background[0] == 1.0);
    for (std::size_t b = 1; b < h.bins(); ++b) CHECK(h.signal[b] + h.background[b] == 0.0);
}

TEST_CASE("a class without weight is an error") {
    const std::vector<double> v{1.0, 2.0};
    const std::vector<Label> l{Label::background, Label::background};
    const std::vector<double> w{1.0, 1.0};
    CHECK_THROWS_AS(histogram(v, l, w), DataError);
}

TEST_CASE("feature sampling") {
    const auto fifth = sample_features(600, 0.2, 7);
    CHECK(fifth.size() == 120);
    CHECK(std::is_sorted(fifth.begin(), fifth.end()));
    CHECK(std::set<std::size_t>(fifth.begin(), fifth.end()).size() == 120);
    CHECK(fifth.back() < 600);
    CHECK(sample_features(600, 0.2, 7) == fifth);
    CHECK(sample_features(600, 1.0, 7).size() == 600);
    CHECK_THROWS_AS(sample_features(600, 0.0, 7), ConfigError);
    CHECK_THROWS_AS(sample_features(600, 1.5, 7), ConfigError);
}

TEST_CASE("TSV layout") {
    const std::vector<double> v{0.0, 1.0};
    const std::vector<Label> l{Label::signal, Label::background};
    const std::vector<double> w{1.0, 1.0};
    std::ostringstream out;
    write_histogram_tsv(out, histogram(v, l, w, 2));
    CHECK(out.str() == "bin\tlo\thi\tsignal\tbackground\n0\t0\t0.5\t1\t0\n1\t0.5\t1\t0\t1\n");
}
