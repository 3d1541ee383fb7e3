#include "defe/data_model.hpp"
#include "defe/errors.hpp"
#include "defe/rng.hpp"
#include "toy_events.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace defe;
using namespace defe::data;

namespace {

std::string header_line(const FeatureSchema& schema) {
    std::string h = "EventId";
    for (const auto& n : schema.names()) h += "," + n;
    return h + ",Weight,Label\n";
}

std::string row_line(std::int64_t id, const std::vector<double>& features, double weight, char label) {
    std::ostringstream os;
    os.precision(17);
    os << id;
    for (double v : features) os << ',' << v;
    os << ',' << weight << ',' << label << '\n';
    return os.str();
}

// Events with one varying feature column (index 0), the rest zero.
Dataset column_dataset(const std::vector<double>& column) {
    std::vector<Event> events;
    for (std::size_t i = 0; i < column.size(); ++i) {
        Event e;
        e.id = static_cast<std::int64_t>(i);
        e.features.assign(FeatureSchema::kFeatureCount, 0.0);
        e.features[0] = column[i];
        e.label = i % 2 ? Label::signal : Label::background;
        events.push_back(e);
    }
    return Dataset(FeatureSchema::higgs_challenge(), events);
}

Dataset class_dataset(std::size_t n_signal, std::size_t n_background) {
    std::vector<Event> events;
    for (std::size_t i = 0; i < n_signal + n_background; ++i) {
        Event e;
        e.id = static_cast<std::int64_t>(i);
        e.features.assign(FeatureSchema::kFeatureCount, 1.0);
        e.label = i < n_signal ? Label::signal : Label::background;
        e.weight = 0.25 + static_cast<double>(i);
        events.push_back(e);
    }
    return Dataset(FeatureSchema::higgs_challenge(), events);
}

}  // namespace

TEST_CASE("schema has 13 derived then 17 primitive features") {
    const auto schema = FeatureSchema::higgs_challenge();
    CHECK(schema.size() == 30);
    CHECK(schema.indices_in(FeatureGroup::derived).size() == 13);
    CHECK(schema.indices_in(FeatureGroup::momentum).size() == 17);
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const bool der = schema.names()[i].rfind("DER_", 0) == 0;
        CHECK((schema.groups()[i] == FeatureGroup::derived) == der);
    }
    CHECK_THROWS_AS(schema.index_of("PRI_nothing"), DataError);

    auto names = schema.names();
    names.pop_back();
    CHECK_THROWS_AS(FeatureSchema{names}, DataError);
}

TEST_CASE("parse one row with all features 1.0") {
    const auto schema = FeatureSchema::higgs_challenge();
    std::istringstream in(header_line(schema) + row_line(7, std::vector<double>(30, 1.0), 2.0, 's'));
    const auto parsed = parse_events(in, schema);
    REQUIRE(parsed.dataset.size() == 1);
    const auto& e = parsed.dataset.events()[0];
    CHECK(e.id == 7);
    CHECK(e.weight == 2.0);
    CHECK(e.label == Label::signal);
    CHECK(std::all_of(e.features.begin(), e.features.end(), [](double v) { return v == 1.0; }));
}

TEST_CASE("missing sentinel survives parsing and is flagged") {
    const auto schema = FeatureSchema::higgs_challenge();
    std::vector<double> f(30, 3.5);
    f[schema.index_of("DER_mass_MMC")] = -999.0;
    std::istringstream in(header_line(schema) + row_line(1, f, 1.0, 'b'));
    const auto d = parse_events(in, schema).dataset;
    CHECK(is_missing(d.events()[0].features[schema.index_of("DER_mass_MMC")]));
    CHECK_FALSE(is_missing(d.events()[0].features[1]));
}

TEST_CASE("columns are matched by name and extras are reported") {
    const auto schema = FeatureSchema::higgs_challenge();
    std::vector<std::string> cols{"Label", "Weight", "Extra"};
    auto rev = schema.names();
    std::reverse(rev.begin(), rev.end());
    cols.insert(cols.end(), rev.begin(), rev.end());
    cols.push_back("EventId");
    std::string text;
    for (std::size_t i = 0; i < cols.size(); ++i) text += (i ? "," : "") + cols[i];
    text += "\nb,1.5,xyz";
    for (std::size_t i = 0; i < 30; ++i) text += "," + std::to_string(29 - i);
    text += ",42\n";
    std::istringstream in(text);
    const auto parsed = parse_events(in, schema);
    const auto& e = parsed.dataset.events()[0];
    for (std::size_t i = 0; i < 30; ++i) CHECK(e.features[i] == static_cast<double>(i));
    CHECK(e.id == 42);
    CHECK(e.weight == 1.5);
    REQUIRE(parsed.ignored_columns.size() == 1);
    CHECK(parsed.ignored_columns[0] == "Extra");
    CHECK(format_column_report(parsed).find("Extra") != std::string::npos);
}

TEST_CASE("parse errors name the column or the row") {
    // rows count file lines, the header being row 1
    const auto schema = FeatureSchema::higgs_challenge();
    const auto good = row_line(1, std::vector<double>(30, 1.0), 1.0, 's');

    SUBCASE("missing column") {
        std::string h = header_line(schema);
        const auto pos = h.find(",PRI_met,");
        h.erase(pos, std::string(",PRI_met").size());
        std::istringstream in(h);
        try {
            parse_events(in, schema);
            FAIL("expected an error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("PRI_met") != std::string::npos);
        }
    }
    SUBCASE("non-numeric cell") {
        auto bad = row_line(2, std::vector<double>(30, 1.0), 1.0, 'b');
        bad.replace(bad.find(",1,"), 3, ",abc,");
        std::istringstream in(header_line(schema) + good + bad);
        try {
            parse_events(in, schema);
            FAIL("expected an error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        }
    }
    SUBCASE("bad label") {
        std::istringstream in(header_line(schema) + good + row_line(2, std::vector<double>(30, 1.0), 1.0, 'x'));
        try {
            parse_events(in, schema);
            FAIL("expected an error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        }
    }
    SUBCASE("empty input") {
        std::istringstream in("");
        CHECK_THROWS_AS(parse_events(in, schema), DataError);
    }
}

TEST_CASE("unlabeled files parse when labels are optional") {
    const auto schema = FeatureSchema::higgs_challenge();
    std::string h = "EventId";
    for (const auto& n : schema.names()) h += "," + n;
    std::string r = "5";
    for (int i = 0; i < 30; ++i) r += ",0.5";
    std::istringstream in(h + "\n" + r + "\n");
    const auto d = parse_events(in, schema, ParseOptions{.require_labels = false}).dataset;
    CHECK_FALSE(d.labeled());
    CHECK(d.events()[0].weight == 1.0);
    CHECK_THROWS_AS(d.require_labels("evaluate"), DataError);

    std::istringstream again(h + "\n" + r + "\n");
    CHECK_THROWS_AS(parse_events(again, schema), DataError);
}

TEST_CASE("write then parse reproduces every cell bit-exactly") {
    const auto d = toy::make_events(300, 11);
    std::stringstream buffer;
    write_events(buffer, d);
    const auto back = parse_events(buffer, d.schema()).dataset;
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& a = d.events()[i];
        const auto& b = back.events()[i];
        CHECK(a.id == b.id);
        CHECK(a.label == b.label);
        CHECK(a.weight == b.weight);
        CHECK(a.features == b.features);
    }
}

TEST_CASE("normalize_weights examples") {
    SUBCASE("4 signal, n_s = 2") {
        const auto d = normalize_weights(class_dataset(4, 3), 2.0, 9.0);
        for (const auto& e : d.events()) CHECK(e.weight == (e.label == Label::signal ? 0.5 : 3.0));
    }
    SUBCASE("10 + 10 with 100 / 1000") {
        const auto d = normalize_weights(class_dataset(10, 10), 100.0, 1000.0);
        double s = 0.0;
        for (const auto& e : d.events()) {
            CHECK(e.weight == (e.label == Label::signal ? 10.0 : 100.0));
            if (e.label == Label::signal) s += e.weight;
        }
        CHECK(std::abs(s - 100.0) <= 1e-9 * 100.0);
        CHECK(d.n_s_expected() == 100.0);
        CHECK(d.n_b_expected() == 1000.0);
    }
    SUBCASE("empty class") {
        CHECK_THROWS_AS(normalize_weights(class_dataset(0, 5), 1.0, 1.0), DataError);
    }
}

TEST_CASE("normalize_weights sums hold on random datasets") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t ns = 1 + rng.index(300);
        const std::size_t nb = 1 + rng.index(300);
        const double s_exp = rng.uniform(0.01, 1e4);
        const double b_exp = rng.uniform(0.01, 1e6);
        const auto d = normalize_weights(class_dataset(ns, nb), s_exp, b_exp);
        double s = 0.0, b = 0.0;
        for (const auto& e : d.events()) (e.label == Label::signal ? s : b) += e.weight;
        CHECK(std::abs(s - s_exp) <= 1e-9 * s_exp);
        CHECK(std::abs(b - b_exp) <= 1e-9 * b_exp);
    }
}

TEST_CASE("fit_normalization examples") {
    SUBCASE("constant column") {
        const auto st = fit_normalization(column_dataset({1, 1, 1}));
        CHECK(st.median[0] == 1.0);
        CHECK(st.mean[0] == 1.0);
        CHECK(st.stddev[0] == 1.0);
    }
    SUBCASE("1, 2, 3") {
        const auto st = fit_normalization(column_dataset({1, 2, 3}));
        CHECK(st.median[0] == 2.0);
        CHECK(st.mean[0] == 2.0);
        CHECK(st.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    }
    SUBCASE("missing cell imputed with the median") {
        const auto st = fit_normalization(column_dataset({1, kMissingSentinel, 3}));
        CHECK(st.median[0] == 2.0);
        CHECK(st.mean[0] == 2.0);
        CHECK(st.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    }
    SUBCASE("even count median averages the middle pair") {
        CHECK(fit_normalization(column_dataset({4, 1, 3, 2})).median[0] == 2.5);
    }
    SUBCASE("all missing") {
        CHECK_THROWS_AS(fit_normalization(column_dataset({kMissingSentinel, kMissingSentinel})), DataError);
    }
}

TEST_CASE("apply_normalization examples") {
    const auto d = column_dataset({1, kMissingSentinel, 3, 2, 6});
    const auto st = fit_normalization(d);
    const auto n = apply_normalization(d, st);
    CHECK(st.median[0] == 2.5);
    CHECK(n.events()[1].features[0] == doctest::Approx((st.median[0] - st.mean[0]) / st.stddev[0]));
    const auto at_mean = normalize_row(std::vector<double>(30, st.mean[0]), st);
    CHECK(at_mean[0] == 0.0);
    for (const auto& e : n.events()) CHECK(e.features[5] == 0.0);  // constant column
    NormalizationStats wrong = st;
    wrong.mean.pop_back();
    CHECK_THROWS_AS(apply_normalization(d, wrong), DataError);
}

TEST_CASE("normalized training split has zero mean and unit stddev") {
    const auto d = toy::make_events(500, 3);
    const auto st = fit_normalization(d);
    const Eigen::MatrixXd x = apply_normalization(d, st).feature_matrix();
    for (Eigen::Index f = 0; f < x.rows(); ++f) {
        const double mean = x.row(f).mean();
        const double var = (x.row(f).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-9);
        if (st.stddev[f] != 1.0 || var > 0.0) CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("split is a seeded partition") {
    const auto d = class_dataset(5, 5);
    const auto [a, b] = split(d, 0.8, 9);
    CHECK(a.size() == 8);
    CHECK(b.size() == 2);
    std::set<std::int64_t> ids;
    for (const auto& e : a.events()) ids.insert(e.id);
    for (const auto& e : b.events()) CHECK(ids.insert(e.id).second);
    CHECK(ids.size() == 10);

    const auto [a2, b2] = split(d, 0.8, 9);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.events()[i].id == a2.events()[i].id);

    CHECK_THROWS_AS(split(d, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(d, 1.0, 1), ConfigError);
}

TEST_CASE("split of 100k events at 0.5") {
    std::vector<Event> events(100000);
    for (std::size_t i = 0; i < events.size(); ++i) {
        events[i].id = static_cast<std::int64_t>(i);
        events[i].features.assign(30, 0.0);
    }
    const Dataset d(FeatureSchema::higgs_challenge(), std::move(events));
    const auto [a, b] = split(d, 0.5, 1);
    CHECK(a.size() == 50000);
    CHECK(b.size() == 50000);
}

TEST_CASE("events must carry 30 features and positive weights") {
    Event e;
    e.features.assign(29, 0.0);
    CHECK_THROWS_AS(Dataset(FeatureSchema::higgs_challenge(), {e}), DataError);
    e.features.assign(30, 0.0);
    e.weight = 0.0;
    CHECK_THROWS_AS(Dataset(FeatureSchema::higgs_challenge(), {e}), DataError);
}
