#include "defe/config.hpp"

#include "defe/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace defe {

namespace {

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = text.find_last_not_of(" \t\r");
    return text.substr(first, last - first + 1);
}

std::string format_double(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw ConfigError("config key '" + key + "' expects a real number, got '" + text + "'");
    }
    return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError("config key '" + key + "' expects a nonnegative integer, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError("config key '" + key + "' expects true or false, got '" + text + "'");
}

std::vector<Eigen::Index> parse_sizes(const std::string& key, const std::string& text) {
    std::vector<Eigen::Index> out;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        const auto v = parse_unsigned(key, trim(item));
        if (v == 0) throw ConfigError("config key '" + key + "' needs positive layer widths");
        out.push_back(static_cast<Eigen::Index>(v));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one layer width");
    return out;
}

std::string format_sizes(const std::vector<Eigen::Index>& sizes) {
    std::string out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(sizes[i]);
    }
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> parse;
    std::function<std::string(const RunConfig&)> format;
};

template <class T>
Field real_field(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
            [member](const RunConfig& c) { return format_double(c.*member); }};
}

template <class T>
Field count_field(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) {
                c.*member = static_cast<T>(parse_unsigned(k, v));
            },
            [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field bool_field(bool RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
            [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field sizes_field(std::vector<Eigen::Index> RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_sizes(k, v); },
            [member](const RunConfig& c) { return format_sizes(c.*member); }};
}

Field weighting_field(partition::Weighting RunConfig::*member) {
    return {[member](RunConfig& c, const std::string&, const std::string& v) {
                c.*member = partition::weighting_from_string(v);
            },
            [member](const RunConfig& c) { return partition::to_string(c.*member); }};
}

// Ordered: this is also the canonical dump order.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"seed", count_field(&RunConfig::seed)},
        {"normalize_weights", bool_field(&RunConfig::normalize_weights)},
        {"n_s_expected", real_field(&RunConfig::n_s_expected)},
        {"n_b_expected", real_field(&RunConfig::n_b_expected)},
        {"validation_fraction", real_field(&RunConfig::validation_fraction)},
        {"partition_depth", count_field(&RunConfig::partition_depth)},
        {"alpha", real_field(&RunConfig::alpha)},
        {"controller_hidden", sizes_field(&RunConfig::controller_hidden)},
        {"controller_epochs", count_field(&RunConfig::controller_epochs)},
        {"controller_threshold", real_field(&RunConfig::controller_threshold)},
        {"controller_weighting", weighting_field(&RunConfig::controller_weighting)},
        {"balance_floor", real_field(&RunConfig::balance_floor)},
        {"feature_inputs",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "all") {
                  c.feature_inputs = partition::FeatureInputs::all;
              } else if (v == "low_level_only") {
                  c.feature_inputs = partition::FeatureInputs::low_level_only;
              } else {
                  throw ConfigError("config key '" + k + "' expects all or low_level_only, got '" + v + "'");
              }
          },
          [](const RunConfig& c) {
              return std::string(c.feature_inputs == partition::FeatureInputs::all ? "all" : "low_level_only");
          }}},
        {"feature_sets", count_field(&RunConfig::feature_sets)},
        {"learner_k", count_field(&RunConfig::learner_k)},
        {"schedule_s1", sizes_field(&RunConfig::schedule_s1)},
        {"schedule_s2", sizes_field(&RunConfig::schedule_s2)},
        {"schedule_s3", sizes_field(&RunConfig::schedule_s3)},
        {"pretrain_epochs", count_field(&RunConfig::pretrain_epochs)},
        {"noise_rate", real_field(&RunConfig::noise_rate)},
        {"learner_finetune_epochs", count_field(&RunConfig::learner_finetune_epochs)},
        {"learner_weighting", weighting_field(&RunConfig::learner_weighting)},
        {"batch_size", count_field(&RunConfig::batch_size)},
        {"momentum", real_field(&RunConfig::momentum)},
        {"lr0", real_field(&RunConfig::lr0)},
        {"lr_decay", real_field(&RunConfig::lr_decay)},
        {"pca_enabled", bool_field(&RunConfig::pca_enabled)},
        {"pca_k", count_field(&RunConfig::pca_k)},
        {"final_hidden", sizes_field(&RunConfig::final_hidden)},
        {"final_max_epochs", count_field(&RunConfig::final_max_epochs)},
        {"final_weighting", weighting_field(&RunConfig::final_weighting)},
        {"validation_metric",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "loss") {
                  c.validation_metric = nn::ValidationMetric::loss;
              } else if (v == "error_rate") {
                  c.validation_metric = nn::ValidationMetric::error_rate;
              } else {
                  throw ConfigError("config key '" + k + "' expects loss or error_rate, got '" + v + "'");
              }
          },
          [](const RunConfig& c) {
              return std::string(c.validation_metric == nn::ValidationMetric::loss ? "loss" : "error_rate");
          }}},
        {"early_stop_rise", real_field(&RunConfig::early_stop_rise)},
        {"early_stop_cost_eps", real_field(&RunConfig::early_stop_cost_eps)},
        {"early_stop_patience", count_field(&RunConfig::early_stop_patience)},
        {"b_regular", real_field(&RunConfig::b_regular)},
        {"parallelism", count_field(&RunConfig::parallelism)},
        {"histogram_bins", count_field(&RunConfig::histogram_bins)},
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& message) { throw ConfigError(message); };
    if (!(n_s_expected > 0.0) || !(n_b_expected > 0.0)) fail("n_s_expected and n_b_expected must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in (0, 1)");
    if (partition_depth < 1 || partition_depth > 2) fail("partition_depth must be 1 or 2");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
    if (!(controller_threshold > 0.0 && controller_threshold < 1.0)) fail("controller_threshold must lie in (0, 1)");
    if (!(balance_floor >= 0.0 && balance_floor <= 0.5)) fail("balance_floor must lie in [0, 0.5]");
    if (feature_sets != 1 && feature_sets != 3) fail("feature_sets must be 1 or 3");
    if (learner_k < 1) fail("learner_k must be positive");
    for (std::size_t s = 0; s < 3; ++s) {
        const auto& sched = schedule(s);
        if (sched.empty() || sched.back() != learner_k) {
            fail("schedule_s" + std::to_string(s + 1) + " must end in learner_k = " + std::to_string(learner_k));
        }
    }
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("noise_rate must lie in [0, 1]");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (!(lr0 > 0.0)) fail("lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
    if (pca_enabled && (pca_k < 1 || pca_k > extreme_dim())) {
        fail("pca_k must lie in [1, " + std::to_string(extreme_dim()) + "]");
    }
    if (!(early_stop_rise >= 0.0) || !(early_stop_cost_eps >= 0.0)) fail("early-stop tolerances must be nonnegative");
    if (early_stop_patience < 1) fail("early_stop_patience must be at least 1");
    if (!(b_regular >= 0.0)) fail("b_regular must be nonnegative");
    if (parallelism < 1) fail("parallelism must be at least 1");
    if (histogram_bins < 1) fail("histogram_bins must be at least 1");
}

const std::vector<Eigen::Index>& RunConfig::schedule(std::size_t index) const {
    switch (index) {
        case 0: return schedule_s1;
        case 1: return schedule_s2;
        case 2: return schedule_s3;
        default: throw ConfigError("no layer schedule for feature set " + std::to_string(index + 1));
    }
}

nn::TrainConfig RunConfig::train_config(std::size_t max_epochs, std::uint64_t run_seed) const {
    return nn::TrainConfig{batch_size, momentum, lr0, lr_decay, max_epochs, run_seed, noise_rate};
}

nn::EarlyStopTolerances RunConfig::tolerances() const {
    return {early_stop_rise, early_stop_cost_eps, early_stop_patience};
}

partition::ControllerConfig RunConfig::controller_config() const {
    partition::ControllerConfig c;
    c.hidden = controller_hidden;
    c.train = train_config(controller_epochs, seed);
    c.weighting = controller_weighting;
    c.threshold = controller_threshold;
    return c;
}

partition::FeaturePartition RunConfig::features(const data::FeatureSchema& schema) const {
    partition::FeaturePartition all = partition::feature_partition(schema, feature_inputs);
    if (feature_sets == 1) {
        // A single set is the whole feature space, trained with the S3 schedule.
        return {all.back()};
    }
    return all;
}

std::size_t RunConfig::learner_count() const {
    std::size_t sample_sets = 1;
    for (std::size_t d = 0; d < partition_depth; ++d) sample_sets *= 4;
    return sample_sets * feature_sets;
}

Eigen::Index RunConfig::extreme_dim() const { return static_cast<Eigen::Index>(learner_count()) * learner_k; }

RunConfig parse_config(std::istream& in) {
    RunConfig config;
    std::set<std::string> seen;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + " is not of the form key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
        if (it == table.end()) {
            throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(number));
        }
        if (!seen.insert(key).second) {
            throw ConfigError("config key '" + key + "' given twice");
        }
        it->second.parse(config, key, value);
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

void write_config(std::ostream& out, const RunConfig& config) {
    for (const auto& [key, field] : fields()) {
        out << key << " = " << field.format(config) << '\n';
    }
}

}  // namespace defe
