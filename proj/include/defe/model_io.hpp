#pragma once

#include "defe/ensemble.hpp"
#include "defe/errors.hpp"
#include "defe/nn.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <system_error>
#include <vector>

namespace defe::io {

inline constexpr int kBundleVersion = 1;

/// Raw little-endian float64 arrays. Matrices are stored row-major.
void write_f64(const std::filesystem::path& path, const Eigen::MatrixXd& values);
void write_f64(const std::filesystem::path& path, const Eigen::VectorXd& values);
Eigen::MatrixXd read_f64(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols);
Eigen::VectorXd read_f64(const std::filesystem::path& path, Eigen::Index size);

/// Layer file: weights row-major followed by the bias.
void write_layer(const std::filesystem::path& path, const nn::LayerParams& layer);
nn::LayerParams read_layer(const std::filesystem::path& path, Eigen::Index out_dim, Eigen::Index in_dim,
                           nn::Activation activation);

/// Writes the bundle directory. Everything goes to a sibling temp directory
/// first and is renamed into place, replacing `dir` if it exists. `log` lines
/// are stored as train.log when given.
void save_model(const ensemble::DEFEModel& model, const std::filesystem::path& dir,
                const std::vector<std::string>* log = nullptr);

/// Reads and validates a bundle; throws DataError on any inconsistency.
ensemble::DEFEModel load_model(const std::filesystem::path& dir);

/// Writes `write_body(tmp)` into a fresh temp directory next to `dir`, then
/// renames it to `dir`. The temp directory is removed on failure.
template <class F>
void write_directory_atomically(const std::filesystem::path& dir, F&& write_body) {
    namespace fs = std::filesystem;
    const fs::path target = fs::absolute(dir).lexically_normal();
    const fs::path parent = target.parent_path();
    fs::create_directories(parent);
    fs::path tmp;
    for (int attempt = 0;; ++attempt) {
        tmp = parent / ("." + target.filename().string() + ".tmp" + std::to_string(attempt));
        std::error_code ec;
        if (fs::create_directory(tmp, ec)) break;
        if (ec || attempt > 1000) throw DataError("cannot create temporary directory next to " + target.string());
    }
    try {
        write_body(tmp);
        if (fs::exists(target)) fs::remove_all(target);
        fs::rename(tmp, target);
    } catch (...) {
        std::error_code ignored;
        fs::remove_all(tmp, ignored);
        throw;
    }
}

}  // namespace defe::io
