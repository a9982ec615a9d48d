#pragma once

#include "wlclean/dataset.hpp"
#include "wlclean/embed.hpp"
#include "wlclean/match_graph.hpp"
#include "wlclean/pca.hpp"
#include "wlclean/triplet.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace testutil {

namespace fs = std::filesystem;

class TempDir {
  public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = fs::temp_directory_path() / ("wlclean_test_" + std::to_string(rng()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

  private:
    fs::path path_;
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline wlclean::FaceRecord rec(wlclean::RecordId id, const std::string& label, std::vector<double> features,
                               std::optional<std::string> truth = std::nullopt) {
    return wlclean::FaceRecord{id, label, std::move(features), std::move(truth)};
}

// Plain weighted union-find, independent of the BFS in match_graph.cpp.
class UnionFind {
  public:
    explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

  private:
    std::vector<std::size_t> parent_;
    std::vector<int> rank_;
};

inline std::set<wlclean::RecordId> union_find_component(std::size_t n, const std::vector<wlclean::RecordId>& nodes,
                                                         const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                                         std::size_t root) {
    UnionFind uf(n);
    for (auto [a, b] : edges) uf.unite(a, b);
    std::set<wlclean::RecordId> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (uf.find(i) == uf.find(root)) out.insert(nodes[i]);
    }
    return out;
}

// Cyclic Jacobi eigenvalue iteration for a small symmetric matrix, stored
// row-major. Returns eigenvalues sorted descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = at(i, i);
    std::sort(out.rbegin(), out.rend());
    return out;
}

// Sample covariance (divisor m - 1) of row-major samples, row-major result.
inline std::vector<double> sample_covariance(const std::vector<std::vector<double>>& rows) {
    const std::size_t m = rows.size(), n = rows.front().size();
    std::vector<double> mean(n, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < n; ++j) mean[j] += r[j] / static_cast<double>(m);
    std::vector<double> cov(n * n, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                cov[i * n + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / static_cast<double>(m - 1);
    return cov;
}

// Dataset of `groups` identities, each a short chain in `dim` dimensions with
// widely separated starting points; no contamination, truth labels set.
inline wlclean::WeakDataset chain_dataset(std::size_t groups, std::size_t per_group, std::size_t dim,
                                          std::uint64_t seed, double step = 0.1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<wlclean::FaceRecord> recs;
    wlclean::RecordId id = 0;
    for (std::size_t k = 0; k < groups; ++k) {
        std::vector<double> x(dim);
        for (auto& v : x) v = 10.0 * g(rng);
        const std::string label = "p" + std::to_string(k);
        for (std::size_t i = 0; i < per_group; ++i) {
            for (auto& v : x) v += step * g(rng);
            recs.push_back(rec(id++, label, x, label));
        }
    }
    return wlclean::WeakDataset(std::move(recs), dim);
}

inline wlclean::Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    wlclean::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
    return m;
}

inline double triplet_diff(const wlclean::EmbeddingModel& m, const wlclean::WeakDataset& ds,
                           const wlclean::Triplet& t) {
    const wlclean::Vector a = m.embed(ds.at(t.anchor));
    const wlclean::Vector p = m.embed(ds.at(t.positive));
    const wlclean::Vector n = m.embed(ds.at(t.negative));
    return (a - p).squaredNorm() - (a - n).squaredNorm();
}

struct GradientCheck {
    double relative_error = 0.0;
    std::size_t active = 0;
    std::size_t floored = 0;
};

// One random (W, data, C) instance: analytic gradient against central
// differences of the loss with step h. The margin is placed between two
// observed diffs so both branches occur; instances with a diff within 1e-4 of
// the kink are rejected (nullopt) since the loss is not differentiable there.
inline std::optional<GradientCheck> gradient_check(std::mt19937_64& rng, double h = 1e-6) {
    using namespace wlclean;
    const std::size_t d = 2 + rng() % 5, e = 2 + rng() % 4;
    const bool with_base = rng() % 2, with_pca = rng() % 3 == 0;
    const std::size_t db = with_base ? 2 + rng() % 5 : d;
    const auto ds = chain_dataset(3, 4, d, rng(), 0.8);
    std::optional<Matrix> base;
    if (with_base) base = gaussian_matrix(static_cast<Eigen::Index>(db), static_cast<Eigen::Index>(d), rng);
    std::optional<PcaTransform> pca;
    if (with_pca) pca = pca_fit(gaussian_matrix(20, static_cast<Eigen::Index>(e), rng), std::max<std::size_t>(1, e - 1));
    const EmbeddingModel model(base, gaussian_matrix(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(db), rng),
                               pca);

    Rng tr(rng());
    const auto ts = gen_sparse(ds, 12, tr);
    std::vector<double> diffs;
    for (const auto& t : ts) diffs.push_back(triplet_diff(model, ds, t));
    auto sorted = diffs;
    std::sort(sorted.begin(), sorted.end());
    const double c = 0.5 * (sorted[5] + sorted[6]);
    GradientCheck out;
    for (double v : diffs) {
        if (std::abs(v - c) < 1e-4) return std::nullopt;
        (v > c ? out.active : out.floored) += 1;
    }

    const Matrix g = loss_gradient(model, ds, ts, c);
    Matrix fd(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            Matrix wp = model.head(), wm = model.head();
            wp(i, j) += h;
            wm(i, j) -= h;
            fd(i, j) = (triplet_loss(model.with_head(wp), ds, ts, c) - triplet_loss(model.with_head(wm), ds, ts, c)) /
                       (2 * h);
        }
    }
    out.relative_error = (g - fd).norm() / std::max({g.norm(), fd.norm(), 1e-12});
    return out;
}

}  // namespace testutil
