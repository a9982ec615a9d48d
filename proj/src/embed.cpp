#include "wlclean/embed.hpp"

#include "wlclean/errors.hpp"
#include "io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

namespace wlclean {

using nlohmann::json;

EmbeddingModel::EmbeddingModel(std::optional<Matrix> base, Matrix head, std::optional<PcaTransform> pca)
    : base_(std::move(base)), head_(std::move(head)), pca_(std::move(pca)) {
    if (head_.rows() < 1 || head_.cols() < 1) {
        throw ConfigError("embedding head must be non-empty");
    }
    if (base_ && base_->rows() != head_.cols()) {
        throw DimensionError("base output dimension " + std::to_string(base_->rows()) +
                             " does not match head input " + std::to_string(head_.cols()));
    }
    if (pca_ && pca_->input_dim() != head_dim()) {
        throw DimensionError("PCA input dimension " + std::to_string(pca_->input_dim()) +
                             " does not match head output " + std::to_string(head_dim()));
    }
}

EmbeddingModel EmbeddingModel::identity(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(dim);
    return EmbeddingModel(std::nullopt, Matrix::Identity(n, n));
}

std::size_t EmbeddingModel::input_dim() const noexcept {
    return base_ ? static_cast<std::size_t>(base_->cols()) : base_dim();
}

std::size_t EmbeddingModel::output_dim() const noexcept {
    return pca_ ? pca_->output_dim() : head_dim();
}

EmbeddingModel EmbeddingModel::with_head(Matrix head) const {
    return EmbeddingModel(base_, std::move(head), pca_);
}

EmbeddingModel EmbeddingModel::with_pca(std::optional<PcaTransform> pca) const {
    return EmbeddingModel(base_, head_, std::move(pca));
}

Vector EmbeddingModel::base_features(std::span<const double> features) const {
    if (features.size() != input_dim()) {
        throw DimensionError("record has " + std::to_string(features.size()) + " features, model expects " +
                             std::to_string(input_dim()));
    }
    const Eigen::Map<const Vector> x(features.data(), static_cast<Eigen::Index>(features.size()));
    if (base_) return *base_ * x;
    return x;
}

Vector EmbeddingModel::head_output(std::span<const double> features) const {
    return head_ * base_features(features);
}

Vector EmbeddingModel::pre_normalized(std::span<const double> features) const {
    Vector u = head_output(features);
    if (pca_) u = pca_apply(*pca_, u);
    return u;
}

Vector EmbeddingModel::embed(std::span<const double> features) const {
    const Vector u = pre_normalized(features);
    const double norm = u.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw DegenerateEmbedding();
    }
    return u / norm;
}

double distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw DimensionError("distance between vectors of dimension " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    return (a - b).norm();
}

Matrix embed_records(const EmbeddingModel& model, const WeakDataset& ds, std::span<const RecordId> ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(model.output_dim()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = model.embed(ds.at(ids[i])).transpose();
    }
    return out;
}

Matrix random_orthonormal_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows > cols) {
        throw ConfigError("cannot build " + std::to_string(rows) + " orthonormal rows in dimension " +
                          std::to_string(cols));
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix g(static_cast<Eigen::Index>(cols), static_cast<Eigen::Index>(rows));
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = gauss(rng);
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    return q.transpose();
}

Matrix initial_head(std::size_t out_dim, std::size_t in_dim, std::uint64_t seed) {
    if (out_dim == in_dim) {
        return Matrix::Identity(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
    }
    if (out_dim < in_dim) return random_orthonormal_rows(out_dim, in_dim, seed);
    return random_orthonormal_rows(in_dim, out_dim, seed).transpose();
}

namespace {

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        data.push_back(std::move(row));
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows) {
        throw DimensionError("matrix data does not match its shape header");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = data.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw DimensionError("matrix row " + std::to_string(i) + " does not match its shape header");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

json vector_to_json(const Vector& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector vector_from_json(const json& j) {
    auto values = j.get<std::vector<double>>();
    return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed JSON in '") + path.string() + "': " + e.what(), 1);
    }
}

void write_json(const json& j, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << j.dump(2) << '\n';
}

}  // namespace

void save_head(const Matrix& head, const std::filesystem::path& path) {
    write_json(matrix_to_json(head), path);
}

Matrix load_head(const std::filesystem::path& path) {
    try {
        return matrix_from_json(read_json(path));
    } catch (const json::exception& e) {
        throw ParseError(e.what(), 1);
    }
}

void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
    json j;
    j["base"] = model.base() ? matrix_to_json(*model.base()) : json(nullptr);
    j["head"] = matrix_to_json(model.head());
    if (const auto& pca = model.pca()) {
        j["pca"] = json{{"mean", vector_to_json(pca->mean)},
                        {"components", matrix_to_json(pca->components)},
                        {"explained_variance", vector_to_json(pca->explained_variance)}};
    } else {
        j["pca"] = nullptr;
    }
    write_json(j, path);
}

EmbeddingModel load_model(const std::filesystem::path& path) {
    const json j = read_json(path);
    try {
        // A bare matrix file is accepted as a head-only model.
        if (j.contains("rows")) return EmbeddingModel(std::nullopt, matrix_from_json(j));
        std::optional<Matrix> base;
        if (j.contains("base") && !j.at("base").is_null()) base = matrix_from_json(j.at("base"));
        std::optional<PcaTransform> pca;
        if (j.contains("pca") && !j.at("pca").is_null()) {
            const auto& p = j.at("pca");
            pca = PcaTransform{vector_from_json(p.at("mean")), matrix_from_json(p.at("components")),
                               vector_from_json(p.at("explained_variance"))};
        }
        return EmbeddingModel(std::move(base), matrix_from_json(j.at("head")), std::move(pca));
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad model file: ") + e.what(), 1);
    }
}

WeakDataset with_precomputed_embeddings(const WeakDataset& ds, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::unordered_map<RecordId, std::vector<double>> table;
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> dim;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto row = json::parse(line);
            auto id = row.at("record_id").get<RecordId>();
            auto emb = row.at("embedding").get<std::vector<double>>();
            if (!dim) dim = emb.size();
            if (emb.size() != *dim || emb.empty()) {
                throw DimensionError("line " + std::to_string(lineno) + ": embedding dimension mismatch");
            }
            if (!table.emplace(id, std::move(emb)).second) {
                throw IntegrityError("line " + std::to_string(lineno) + ": duplicate record_id " +
                                     std::to_string(id));
            }
        } catch (const json::exception& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (!dim) throw IntegrityError("no embeddings in '" + path.string() + "'");
    std::vector<FaceRecord> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records()) {
        auto it = table.find(r.record_id);
        if (it == table.end()) {
            throw IntegrityError("no precomputed embedding for record " + std::to_string(r.record_id));
        }
        FaceRecord copy = r;
        copy.features = it->second;
        out.push_back(std::move(copy));
    }
    return WeakDataset(std::move(out), *dim);
}

}  // namespace wlclean
