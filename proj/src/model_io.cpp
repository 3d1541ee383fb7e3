#include "defe/model_io.hpp"

#include "defe/config.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace defe::io {

namespace fs = std::filesystem;

namespace {

void put_le(std::ostream& out, double value) {
    auto bits = std::bit_cast<std::uint64_t>(value);
    char bytes[8];
    for (char& byte : bytes) {
        byte = static_cast<char>(bits & 0xFFu);
        bits >>= 8;
    }
    out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
    return std::bit_cast<double>(bits);
}

std::vector<double> read_all(const fs::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected * 8) {
        throw DataError(path.string() + ": expected " + std::to_string(expected * 8) + " bytes, found " +
                        std::to_string(bytes.size()));
    }
    std::vector<double> values(expected);
    for (std::size_t i = 0; i < expected; ++i) values[i] = get_le(bytes.data() + 8 * i);
    return values;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) throw DataError("write failed for " + path.string());
}

// Each network is a header line plus one line per layer.
void write_network(std::ostream& manifest, const fs::path& root, const std::string& id, const nn::NetworkParams& net) {
    manifest << "network " << id << ' ' << net.input_dim << ' ' << net.layers.size() << '\n';
    for (std::size_t j = 0; j < net.layers.size(); ++j) {
        const auto& layer = net.layers[j];
        const std::string file = id + ".layer" + std::to_string(j) + ".bin";
        write_layer(root / file, layer);
        manifest << "layer " << layer.out_dim() << ' ' << layer.in_dim() << ' ' << nn::to_string(layer.activation)
                 << ' ' << file << '\n';
    }
}

std::string join(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

class ManifestReader {
public:
    ManifestReader(std::istream& in, fs::path root) : root_(std::move(root)) {
        std::string line;
        while (std::getline(in, line)) lines_.push_back(line);
    }

    bool done() const { return at_ >= lines_.size(); }

    std::vector<std::string> next(const std::string& keyword, std::size_t fields) {
        auto out = next_any(keyword);
        if (out.size() != fields) fail("'" + keyword + "' takes " + std::to_string(fields) + " fields");
        return out;
    }

    std::vector<std::string> next_any(const std::string& keyword) {
        if (done()) fail("unexpected end, wanted '" + keyword + "'");
        std::istringstream tokens(lines_[at_++]);
        std::vector<std::string> out;
        for (std::string t; tokens >> t;) out.push_back(t);
        if (out.empty() || out.front() != keyword) fail("expected '" + keyword + "'");
        out.erase(out.begin());
        return out;
    }

    std::vector<std::string> take_block(const std::string& begin, const std::string& end) {
        next(begin, 0);
        std::vector<std::string> out;
        while (true) {
            if (done()) fail("missing '" + end + "'");
            if (lines_[at_] == end) {
                ++at_;
                return out;
            }
            out.push_back(lines_[at_++]);
        }
    }

    std::uint64_t u64(const std::string& text) {
        std::size_t used = 0;
        std::uint64_t value = 0;
        try {
            value = std::stoull(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != text.size() || text.empty() || text.front() == '-') fail("bad integer '" + text + "'");
        return value;
    }

    Eigen::Index index(const std::string& text) { return static_cast<Eigen::Index>(u64(text)); }

    std::vector<std::size_t> list(const std::string& text) {
        std::vector<std::size_t> out;
        std::istringstream parts(text);
        for (std::string part; std::getline(parts, part, ',');) out.push_back(u64(part));
        return out;
    }

    nn::NetworkParams network(const std::string& id) {
        const auto head = next("network", 3);
        if (head[0] != id) fail("expected network '" + id + "', found '" + head[0] + "'");
        nn::NetworkParams net;
        net.input_dim = index(head[1]);
        const auto count = u64(head[2]);
        Eigen::Index in = net.input_dim;
        for (std::uint64_t j = 0; j < count; ++j) {
            const auto f = next("layer", 4);
            const Eigen::Index out = index(f[0]);
            if (index(f[1]) != in) fail("layer shape mismatch in network '" + id + "'");
            nn::Activation activation;
            try {
                activation = nn::activation_from_string(f[2]);
            } catch (const Error&) {
                fail("unknown activation '" + f[2] + "'");
            }
            net.layers.push_back(read_layer(file(f[3]), out, in, activation));
            in = out;
        }
        try {
            net.validate();
        } catch (const Error& e) {
            fail("network '" + id + "': " + e.what());
        }
        return net;
    }

    fs::path file(const std::string& name) {
        if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
            fail("file reference '" + name + "' leaves the bundle");
        }
        return root_ / name;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError("bundle manifest line " + std::to_string(at_) + ": " + what);
    }

private:
    fs::path root_;
    std::vector<std::string> lines_;
    std::size_t at_ = 0;
};

}  // namespace

void write_f64(const fs::path& path, const Eigen::MatrixXd& values) {
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) put_le(out, values(i, j));
    }
    close_out(out, path);
}

void write_f64(const fs::path& path, const Eigen::VectorXd& values) {
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < values.size(); ++i) put_le(out, values(i));
    close_out(out, path);
}

Eigen::MatrixXd read_f64(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
    const auto flat = read_all(path, static_cast<std::size_t>(rows * cols));
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
    }
    return out;
}

Eigen::VectorXd read_f64(const fs::path& path, Eigen::Index size) {
    const auto flat = read_all(path, static_cast<std::size_t>(size));
    return Eigen::Map<const Eigen::VectorXd>(flat.data(), size);
}

void write_layer(const fs::path& path, const nn::LayerParams& layer) {
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) put_le(out, layer.weights(i, j));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_le(out, layer.bias(i));
    close_out(out, path);
}

nn::LayerParams read_layer(const fs::path& path, Eigen::Index out_dim, Eigen::Index in_dim, nn::Activation activation) {
    const auto flat = read_all(path, static_cast<std::size_t>(out_dim * (in_dim + 1)));
    nn::LayerParams layer;
    layer.activation = activation;
    layer.weights.resize(out_dim, in_dim);
    layer.bias.resize(out_dim);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < out_dim; ++i) {
        for (Eigen::Index j = 0; j < in_dim; ++j) layer.weights(i, j) = flat[k++];
    }
    for (Eigen::Index i = 0; i < out_dim; ++i) layer.bias(i) = flat[k++];
    return layer;
}

void save_model(const ensemble::DEFEModel& model, const fs::path& dir, const std::vector<std::string>* log) {
    model.validate();
    write_directory_atomically(dir, [&](const fs::path& root) {
        std::ostringstream m;
        m << "defe-model " << kBundleVersion << '\n';
        m << "config\n";
        write_config(m, model.config);
        m << "end config\n";

        m << "schema " << model.schema.size() << '\n';
        for (const auto& name : model.schema.names()) m << "feature " << name << '\n';

        const auto d = static_cast<Eigen::Index>(model.schema.size());
        Eigen::MatrixXd stats(3, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            const auto k = static_cast<std::size_t>(i);
            stats(0, i) = model.normalization.median[k];
            stats(1, i) = model.normalization.mean[k];
            stats(2, i) = model.normalization.stddev[k];
        }
        write_f64(root / "normalization.bin", stats);
        m << "normalization normalization.bin\n";

        m << "partition " << model.partition.size() << ' ' << model.controllers.size() << '\n';
        for (const auto& r : model.partition) {
            m << "record " << r.parent << ' ' << r.parent_size << ' ' << r.hit << ' ' << r.anomalous << ' '
              << r.selection << ' ' << r.rejection << ' ' << r.swapped_hit_anomalous << ' '
              << r.swapped_selection_rejection << ' ' << r.controller_seed << ' ' << r.interchange_seed << '\n';
        }
        for (std::size_t c = 0; c < model.controllers.size(); ++c) {
            write_network(m, root, "controller" + std::to_string(c), model.controllers[c]);
        }

        m << "subspaces " << model.subspaces.size() << '\n';
        for (const auto& s : model.subspaces) {
            m << "subspace " << s.name << ' ' << s.sample_set << ' ' << s.feature_set << ' ' << s.events << ' '
              << s.feature_count << '\n';
        }

        m << "learners " << model.learners.size() << '\n';
        for (std::size_t h = 0; h < model.learners.size(); ++h) {
            const auto& learner = model.learners[h];
            m << "learner " << learner.subspace << ' ' << learner.name << ' ' << learner.seed << ' '
              << join(learner.features) << ' ' << (learner.head ? 1 : 0) << '\n';
            const std::string id = "learner" + std::to_string(h);
            write_network(m, root, id, learner.encoder);
            if (learner.head) {
                const std::string file = id + ".head.bin";
                write_layer(root / file, *learner.head);
                m << "head " << learner.head->out_dim() << ' ' << learner.head->in_dim() << ' '
                  << nn::to_string(learner.head->activation) << ' ' << file << '\n';
            }
        }

        if (model.pca) {
            write_f64(root / "pca_mean.bin", model.pca->mean);
            write_f64(root / "pca_components.bin", model.pca->components);
            write_f64(root / "pca_variance.bin", model.pca->explained_variance);
            m << "pca " << model.pca->output_dim() << ' ' << model.pca->input_dim()
              << " pca_mean.bin pca_components.bin pca_variance.bin\n";
        } else {
            m << "pca none\n";
        }

        write_network(m, root, "classifier", model.classifier);
        m << "end\n";

        auto out = open_out(root / "manifest");
        out << m.str();
        close_out(out, root / "manifest");
        if (log) {
            auto log_out = open_out(root / "train.log");
            for (const auto& line : *log) log_out << line << '\n';
            close_out(log_out, root / "train.log");
        }
    });
}

ensemble::DEFEModel load_model(const fs::path& dir) {
    std::ifstream in(dir / "manifest", std::ios::binary);
    if (!in) throw DataError("no bundle manifest in " + dir.string());
    ManifestReader r(in, dir);
    const auto version = r.next("defe-model", 1);
    if (version[0] != std::to_string(kBundleVersion)) r.fail("unsupported bundle version " + version[0]);

    ensemble::DEFEModel model;
    {
        std::string text;
        for (const auto& line : r.take_block("config", "end config")) text += line + '\n';
        std::istringstream config_in(text);
        try {
            model.config = parse_config(config_in);
        } catch (const ConfigError& e) {
            r.fail(std::string("config: ") + e.what());
        }
    }

    const auto d = r.u64(r.next("schema", 1)[0]);
    std::vector<std::string> names;
    for (std::uint64_t i = 0; i < d; ++i) names.push_back(r.next("feature", 1)[0]);
    try {
        model.schema = data::FeatureSchema(names);
    } catch (const Error& e) {
        r.fail(std::string("schema: ") + e.what());
    }

    const Eigen::MatrixXd stats =
        read_f64(r.file(r.next("normalization", 1)[0]), 3, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < stats.cols(); ++i) {
        model.normalization.median.push_back(stats(0, i));
        model.normalization.mean.push_back(stats(1, i));
        model.normalization.stddev.push_back(stats(2, i));
    }

    const auto part = r.next("partition", 2);
    const auto records = r.u64(part[0]);
    const auto controllers = r.u64(part[1]);
    for (std::uint64_t i = 0; i < records; ++i) {
        const auto f = r.next("record", 10);
        partition::PartitionRecord rec;
        rec.parent = f[0];
        rec.parent_size = r.u64(f[1]);
        rec.hit = r.u64(f[2]);
        rec.anomalous = r.u64(f[3]);
        rec.selection = r.u64(f[4]);
        rec.rejection = r.u64(f[5]);
        rec.swapped_hit_anomalous = r.u64(f[6]);
        rec.swapped_selection_rejection = r.u64(f[7]);
        rec.controller_seed = r.u64(f[8]);
        rec.interchange_seed = r.u64(f[9]);
        model.partition.push_back(rec);
    }
    for (std::uint64_t c = 0; c < controllers; ++c) {
        model.controllers.push_back(r.network("controller" + std::to_string(c)));
    }

    const auto subspaces = r.u64(r.next("subspaces", 1)[0]);
    for (std::uint64_t i = 0; i < subspaces; ++i) {
        const auto f = r.next("subspace", 5);
        model.subspaces.push_back({f[0], r.u64(f[1]), r.u64(f[2]), r.u64(f[3]), r.u64(f[4])});
    }

    const auto learners = r.u64(r.next("learners", 1)[0]);
    for (std::uint64_t h = 0; h < learners; ++h) {
        const auto f = r.next("learner", 5);
        ensemble::FeatureLearner learner;
        learner.subspace = r.u64(f[0]);
        learner.name = f[1];
        learner.seed = r.u64(f[2]);
        learner.features = r.list(f[3]);
        for (const auto feature : learner.features) {
            if (feature >= d) r.fail("learner feature index out of range");
        }
        const std::string id = "learner" + std::to_string(h);
        learner.encoder = r.network(id);
        if (learner.encoder.input_dim != static_cast<Eigen::Index>(learner.features.size())) {
            r.fail("learner '" + learner.name + "' input width differs from its feature list");
        }
        if (f[4] == "1") {
            const auto hf = r.next("head", 4);
            if (r.index(hf[1]) != learner.width()) r.fail("head width mismatch");
            learner.head = read_layer(r.file(hf[3]), r.index(hf[0]), learner.width(), nn::activation_from_string(hf[2]));
        } else if (f[4] != "0") {
            r.fail("head flag must be 0 or 1");
        }
        model.learners.push_back(std::move(learner));
    }

    const auto pca_fields = r.next_any("pca");
    if (pca_fields.size() == 5) {
        pca::PCAProjection projection;
        const Eigen::Index k = r.index(pca_fields[0]);
        const Eigen::Index in_dim = r.index(pca_fields[1]);
        projection.mean = read_f64(r.file(pca_fields[2]), in_dim);
        projection.components = read_f64(r.file(pca_fields[3]), k, in_dim);
        projection.explained_variance = read_f64(r.file(pca_fields[4]), k);
        model.pca = std::move(projection);
    } else if (pca_fields.size() != 1 || pca_fields[0] != "none") {
        r.fail("'pca' takes 'none' or 5 fields");
    }

    model.classifier = r.network("classifier");
    r.next("end", 0);
    if (!r.done()) r.fail("trailing content");
    try {
        model.validate();
    } catch (const Error& e) {
        throw DataError("bundle " + dir.string() + ": " + e.what());
    }
    return model;
}

}  // namespace defe::io
