#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace defe::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, data_error = 3, numeric_error = 4 };

struct CommonOptions {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string out;
};

struct TrainOptions : CommonOptions {
    std::optional<std::size_t> parallelism;
};

struct ModelOptions : CommonOptions {
    std::string model;
};

struct HistogramOptions : ModelOptions {
    double sample_fraction = 1.0;
    std::optional<std::size_t> bins;
};

/// Each command writes its output directory atomically and throws defe
/// errors on failure; `log` receives a short human-readable summary.
void cmd_train(const TrainOptions& options, std::ostream& log);
void cmd_evaluate(const ModelOptions& options, std::ostream& log);
void cmd_extract(const ModelOptions& options, std::ostream& log);
void cmd_histograms(const HistogramOptions& options, std::ostream& log);

/// Parses argv, dispatches, and maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace defe::cli
