#include "defe/config.hpp"
#include "defe/errors.hpp"

#include <doctest.h>

#include <sstream>

using namespace defe;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

std::string dump(const RunConfig& c) {
    std::ostringstream out;
    write_config(out, c);
    return out.str();
}

}  // namespace

TEST_CASE("defaults follow the published setup") {
    const RunConfig c;
    CHECK(c.alpha == 0.05);
    CHECK(c.partition_depth == 1);
    CHECK(c.feature_sets == 3);
    CHECK(c.learner_k == 50);
    CHECK(c.pca_k == 300);
    CHECK(c.batch_size == 100);
    CHECK(c.momentum == 0.5);
    CHECK(c.lr0 == 0.1);
    CHECK(c.lr_decay == 0.997);
    CHECK(c.learner_finetune_epochs == 10);
    CHECK(c.controller_weighting == partition::Weighting::class_balanced);
    CHECK(c.learner_weighting == partition::Weighting::class_balanced);
    CHECK(c.final_weighting == partition::Weighting::event);
    CHECK(c.early_stop_rise == 0.002);
    CHECK(c.early_stop_cost_eps == 0.0001);
    CHECK(c.early_stop_patience == 10);
    CHECK(c.n_s_expected == 100.0);
    CHECK(c.n_b_expected == 1000.0);
    CHECK(c.b_regular == 10.0);
    CHECK(c.learner_count() == 12);
    CHECK(c.extreme_dim() == 600);
    CHECK(c.schedule(0) == std::vector<Eigen::Index>{250, 200, 150, 100, 50});
    CHECK(c.schedule(1) == std::vector<Eigen::Index>{200, 200, 150, 100, 50});
    CHECK(c.schedule(2) == std::vector<Eigen::Index>{300, 250, 200, 200, 50});
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("empty text gives the defaults") {
    CHECK(dump(parse("# nothing\n\n")) == dump(RunConfig{}));
}

TEST_CASE("values are parsed and typed") {
    const auto c = parse("alpha = 0.1\nseed=42  # trailing comment\nfinal_hidden = 20, 10\n"
                         "pca_enabled = false\nfinal_weighting = class_balanced\n");
    CHECK(c.alpha == 0.1);
    CHECK(c.seed == 42);
    CHECK(c.final_hidden == std::vector<Eigen::Index>{20, 10});
    CHECK_FALSE(c.pca_enabled);
    CHECK(c.final_weighting == partition::Weighting::class_balanced);
}

TEST_CASE("write then parse reproduces the config") {
    RunConfig c;
    c.seed = 123456789012345ULL;
    c.alpha = 0.1 / 3.0;
    c.schedule_s1 = {20, 10};
    c.schedule_s2 = {20, 10};
    c.schedule_s3 = {30, 10};
    c.learner_k = 10;
    c.pca_k = 40;
    c.feature_inputs = partition::FeatureInputs::low_level_only;
    c.validation_metric = nn::ValidationMetric::error_rate;
    const auto text = dump(c);
    CHECK(dump(parse(text)) == text);
    CHECK(parse(text).alpha == c.alpha);
}

TEST_CASE("bad configs are rejected") {
    CHECK_THROWS_AS(parse("no_such_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("alpha = 0.1\nalpha = 0.2\n"), ConfigError);
    CHECK_THROWS_AS(parse("alpha = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse("alpha = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse("batch_size = -3\n"), ConfigError);
    CHECK_THROWS_AS(parse("partition_depth = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse("pca_enabled = yes\n"), ConfigError);
    CHECK_THROWS_AS(parse("just a line\n"), ConfigError);
    CHECK_THROWS_AS(parse("learner_k = 40\n"), ConfigError);  // schedules end in 50
    CHECK_THROWS_AS(parse("pca_k = 601\n"), ConfigError);
    CHECK_THROWS_AS(parse("final_hidden = 10, 0\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/defe.cfg"), ConfigError);
}

TEST_CASE("error messages name the key") {
    try {
        parse("momentum = 1.0\n");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("momentum") != std::string::npos);
    }
}

TEST_CASE("derived settings") {
    RunConfig c;
    c.partition_depth = 2;
    c.pca_k = 300;
    CHECK(c.learner_count() == 48);
    CHECK(c.extreme_dim() == 2400);
    c.feature_sets = 1;
    CHECK(c.learner_count() == 16);
    const auto t = c.train_config(7, 99);
    CHECK(t.max_epochs == 7);
    CHECK(t.seed == 99);
    CHECK(t.momentum == 0.5);
    const auto tol = c.tolerances();
    CHECK(tol.abs_rise == 0.002);
    CHECK(tol.patience == 10);
}
