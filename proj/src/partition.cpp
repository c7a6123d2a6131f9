// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "hddm/error.hpp"
#include "hddm/io.hpp"
#include "hddm/rng.hpp"

namespace hddm {

void validate(const MixtureSpec& spec) {
    if (spec.weights.empty()) fail(ErrorKind::Spec, "mixture has no components");
    if (spec.means.size() != spec.weights.size() || spec.variances.size() != spec.weights.size())
        fail(ErrorKind::Spec, "mixture weights, means and variances differ in length");
    const size_t dim = spec.dim();
    if (dim == 0) fail(ErrorKind::Spec, "mixture dimension is zero");
    double total = 0.0;
    for (size_t k = 0; k < spec.components(); ++k) {
        if (!(spec.weights[k] >= 0.0)) fail(ErrorKind::Spec, "negative mixture weight");
        total += spec.weights[k];
        if (spec.means[k].size() != dim || spec.variances[k].size() != dim)
            fail(ErrorKind::Spec, "component " + std::to_string(k) + " has the wrong dimension");
        for (double v : spec.variances[k])
            if (!(v > 0.0) || !std::isfinite(v))
                fail(ErrorKind::Spec, "component " + std::to_string(k) + " covariance is not positive-definite");
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorKind::Spec, "mixture weights sum to " + format_double(total));
    if (!spec.conditions.empty()) {
        if (spec.conditions.size() != spec.components()) fail(ErrorKind::Spec, "one condition id per component required");
        for (int c : spec.conditions)
            if (c < 0) fail(ErrorKind::Spec, "negative condition id");
    }
}

int MixtureSpec::condition_count() const {
    int n = 0;
    for (size_t k = 0; k < components(); ++k) n = std::max(n, condition_of(k) + 1);
    return n;
}

MixtureSpec ring_mixture(int blobs, double radius, double variance, int dim, int styles, double style_offset) {
    if (blobs < 1 || dim < 2 || styles < 1) fail(ErrorKind::Spec, "ring mixture needs >= 1 blob, >= 1 style and dim >= 2");
    MixtureSpec spec;
    const int n = blobs * styles;
    for (int b = 0; b < blobs; ++b) {
        const double angle = 2.0 * std::numbers::pi * b / blobs;
        for (int s = 0; s < styles; ++s) {
            const double r = (blobs > 1 ? radius : 0.0) + style_offset * (s - 0.5 * (styles - 1));
            Vec mean(static_cast<size_t>(dim), 0.0);
            mean[0] = r * std::cos(angle);
            mean[1] = r * std::sin(angle);
            spec.weights.push_back(1.0 / n);
            spec.means.push_back(std::move(mean));
            spec.variances.emplace_back(static_cast<size_t>(dim), variance);
            if (styles > 1) spec.conditions.push_back(s);
        }
    }
    // Equal weights may not sum to exactly 1 in floating point.
    spec.weights.back() = 1.0 - std::accumulate(spec.weights.begin(), spec.weights.end() - 1, 0.0);
    return spec;
}

SyntheticDataset generate_mixture(const MixtureSpec& spec, size_t n, uint64_t seed) {
    validate(spec);
    SyntheticDataset data;
    data.dim = static_cast<int>(spec.dim());
    data.spec = spec;
    data.points.reserve(n * spec.dim());
    data.labels.reserve(n);
    const Rng root(seed);
    for (size_t i = 0; i < n; ++i) {
        Rng rng = root.split(static_cast<uint64_t>(i));
        const double u = rng.uniform();
        size_t k = 0;
        double cum = spec.weights[0];
        while (k + 1 < spec.components() && u >= cum) cum += spec.weights[++k];
        for (size_t j = 0; j < spec.dim(); ++j)
            data.points.push_back(spec.means[k][j] + std::sqrt(spec.variances[k][j]) * rng.normal());
        data.labels.push_back(static_cast<int>(k));
        if (!spec.conditions.empty()) data.conditions.push_back(spec.conditions[k]);
    }
    return data;
}

Metric parse_metric(std::string_view name) {
    if (name == "euclidean") return Metric::Euclidean;
    if (name == "cosine") return Metric::Cosine;
    fail(ErrorKind::Config, "unknown metric '" + std::string(name) + "' (expected euclidean or cosine)");
}

namespace {

double dist2(const double* a, const double* b, size_t dim) {
    double s = 0.0;
    for (size_t j = 0; j < dim; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
}

void normalize_rows(std::vector<double>& v, size_t dim) {
    for (size_t i = 0; i + dim <= v.size(); i += dim) {
        double n = 0.0;
        for (size_t j = 0; j < dim; ++j) n += v[i + j] * v[i + j];
        n = std::sqrt(n);
        if (n > 0.0)
            for (size_t j = 0; j < dim; ++j) v[i + j] /= n;
    }
}

// Seed-dependent uniform tied to a point's coordinates, not its position.
double point_uniform(const double* p, size_t dim, uint64_t seed, uint64_t round) {
    uint64_t h = hash_combine(seed, round);
    for (size_t j = 0; j < dim; ++j) h = hash_combine(h, std::bit_cast<uint64_t>(p[j]));
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

KMeansResult weighted_kmeans(ConstSpan input, int dim_i, ConstSpan weights, int k, Metric metric, uint64_t seed,
                             int max_iterations) {
    const size_t dim = static_cast<size_t>(dim_i);
    const size_t n = dim ? input.size() / dim : 0;
    if (weights.size() != n) fail(ErrorKind::Shape, "k-means weights do not match point count");
    if (k < 1 || static_cast<size_t>(k) > n)
        fail(ErrorKind::Spec, "k-means needs 1 <= k <= N (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
    const size_t K = static_cast<size_t>(k);

    // Canonical order: lexicographic by coordinates, then weight.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        for (size_t j = 0; j < dim; ++j)
            if (input[a * dim + j] != input[b * dim + j]) return input[a * dim + j] < input[b * dim + j];
        return weights[a] < weights[b];
    });
    std::vector<double> pts(n * dim), w(n);
    for (size_t i = 0; i < n; ++i) {
        std::copy_n(input.begin() + static_cast<std::ptrdiff_t>(order[i] * dim), dim, pts.begin() + static_cast<std::ptrdiff_t>(i * dim));
        w[i] = weights[order[i]];
    }
    if (metric == Metric::Cosine) normalize_rows(pts, dim);
    const double* P = pts.data();

    // k-means++ via exponential races: each round picks argmin -log(u_i) / (w_i D_i^2).
    std::vector<double> centroids(K * dim);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (size_t c = 0; c < K; ++c) {
        size_t pick = 0;
        double best_key = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < n; ++i) {
            const double mass = w[i] * (c == 0 ? 1.0 : best[i]);
            if (!(mass > 0.0)) continue;
            const double key = -std::log(point_uniform(P + i * dim, dim, seed, c)) / mass;
            if (key < best_key) {
                best_key = key;
                pick = i;
            }
        }
        std::copy_n(P + pick * dim, dim, centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
        for (size_t i = 0; i < n; ++i) best[i] = std::min(best[i], dist2(P + i * dim, P + pick * dim, dim));
    }

    KMeansResult result;
    std::vector<int> labels(n, -1), previous;
    std::vector<double> d2(n);
    for (int iter = 0; iter < max_iterations; ++iter) {
        double objective = 0.0;
        for (size_t i = 0; i < n; ++i) {
            int arg = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (size_t c = 0; c < K; ++c) {
                const double dd = dist2(P + i * dim, centroids.data() + c * dim, dim);
                if (dd < bd) {
                    bd = dd;
                    arg = static_cast<int>(c);
                }
            }
            labels[i] = arg;
            d2[i] = bd;
            objective += w[i] * bd;
        }
        result.objective.push_back(objective);
        result.iterations = iter + 1;
        if (labels == previous) break;
        previous = labels;

        std::vector<double> sums(K * dim, 0.0), mass(K, 0.0);
        for (size_t i = 0; i < n; ++i) {
            const size_t c = static_cast<size_t>(labels[i]);
            mass[c] += w[i];
            for (size_t j = 0; j < dim; ++j) sums[c * dim + j] += w[i] * P[i * dim + j];
        }
        std::vector<bool> taken(n, false);
        for (size_t c = 0; c < K; ++c) {
            if (mass[c] > 0.0) {
                for (size_t j = 0; j < dim; ++j) centroids[c * dim + j] = sums[c * dim + j] / mass[c];
                continue;
            }
            // Empty cluster: re-seed at the point farthest from its centroid.
            size_t far = 0;
            double far_d = -1.0;
            for (size_t i = 0; i < n; ++i)
                if (!taken[i] && w[i] * d2[i] > far_d) {
                    far_d = w[i] * d2[i];
                    far = i;
                }
            taken[far] = true;
            std::copy_n(P + far * dim, dim, centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
        }
        if (metric == Metric::Cosine) normalize_rows(centroids, dim);
    }

    result.labels.assign(n, 0);
    for (size_t i = 0; i < n; ++i) result.labels[order[i]] = labels[i];
    result.centroids = std::move(centroids);
    return result;
}

ClusterAssignment hierarchical_kmeans(const SyntheticDataset& data, int m_fine, int K, Metric metric, uint64_t seed) {
    const size_t n = data.size();
    if (K < 1 || m_fine < K || static_cast<size_t>(m_fine) > n)
        fail(ErrorKind::Spec, "hierarchical k-means needs 1 <= K <= M_fine <= N (K=" + std::to_string(K) +
                                  ", M_fine=" + std::to_string(m_fine) + ", N=" + std::to_string(n) + ")");
    const Rng root(seed);
    const std::vector<double> unit(n, 1.0);
    KMeansResult fine = weighted_kmeans(data.points, data.dim, unit, m_fine, metric, root.split("fine").key());

    std::vector<double> sizes(static_cast<size_t>(m_fine), 0.0);
    for (int l : fine.labels) sizes[static_cast<size_t>(l)] += 1.0;
    // Fine groups that ended empty carry no mass; give them a token weight so
    // the weighted stage still sees every centroid.
    for (double& s : sizes)
        if (s == 0.0) s = 1e-9;
    KMeansResult coarse = weighted_kmeans(fine.centroids, data.dim, sizes, K, metric, root.split("coarse").key());

    ClusterAssignment out;
    out.K = K;
    out.fine_assignment = fine.labels;
    out.fine_centroids = fine.centroids;
    out.fine_to_coarse = coarse.labels;
    out.centroids = coarse.centroids;
    out.fine_objective = fine.objective;
    out.coarse_objective = coarse.objective;
    out.assignment.resize(n);
    for (size_t i = 0; i < n; ++i)
        out.assignment[i] = coarse.labels[static_cast<size_t>(fine.labels[i])];
    return out;
}

SyntheticDataset shard(const SyntheticDataset& data, const ClusterAssignment& assignment, int k) {
    if (k < 0 || k >= assignment.K) fail(ErrorKind::Domain, "shard index " + std::to_string(k) + " outside [0, K)");
    SyntheticDataset out;
    out.dim = data.dim;
    out.spec = data.spec;
    for (size_t i = 0; i < data.size(); ++i) {
        if (assignment.assignment[i] != k) continue;
        const ConstSpan p = data.point(i);
        out.points.insert(out.points.end(), p.begin(), p.end());
        if (!data.labels.empty()) out.labels.push_back(data.labels[i]);
        if (!data.conditions.empty()) out.conditions.push_back(data.conditions[i]);
    }
    return out;
}

void write_assignment_csv(const SyntheticDataset& data, const ClusterAssignment& assignment,
                          const std::filesystem::path& path) {
    std::ostringstream out;
    for (int j = 0; j < data.dim; ++j) out << 'x' << j << ',';
    out << "true_component,condition,assignment\n";
    for (size_t i = 0; i < data.size(); ++i) {
        for (double v : data.point(i)) out << format_double(v) << ',';
        out << (data.labels.empty() ? -1 : data.labels[i]) << ',' << data.condition(i) << ','
            << assignment.assignment[i] << '\n';
    }
    atomic_write(path, out.str());
}

void write_centroids_csv(ConstSpan centroids, int dim, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "cluster";
    for (int j = 0; j < dim; ++j) out << ",x" << j;
    out << '\n';
    const size_t d = static_cast<size_t>(dim);
    for (size_t c = 0; c * d < centroids.size(); ++c) {
        out << c;
        for (size_t j = 0; j < d; ++j) out << ',' << format_double(centroids[c * d + j]);
        out << '\n';
    }
    atomic_write(path, out.str());
}

void write_points_csv(ConstSpan points, int dim, const std::vector<int>& labels, const std::filesystem::path& path) {
    std::ostringstream out;
    for (int j = 0; j < dim; ++j) out << (j ? "," : "") << 'x' << j;
    out << ",condition\n";
    const size_t d = static_cast<size_t>(dim);
    for (size_t i = 0; i * d < points.size(); ++i) {
        for (size_t j = 0; j < d; ++j) out << (j ? "," : "") << format_double(points[i * d + j]);
        out << ',' << (i < labels.size() ? labels[i] : -1) << '\n';
    }
    atomic_write(path, out.str());
}

LoadedAssignment read_assignment_csv(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        fail(ErrorKind::Io, "missing " + path.string() + " (run the cluster command first)");
    const CsvTable table = read_csv(path);
    const int label_col = table.column("true_component");
    const int cond_col = table.column("condition");
    const int assign_col = table.column("assignment");
    if (label_col < 0 || cond_col != label_col + 1 || assign_col != label_col + 2)
        fail(ErrorKind::Format, path.string() + ": expected x0..x{d-1},true_component,condition,assignment columns");
    LoadedAssignment out;
    out.data.dim = label_col;
    int max_k = -1;
    for (const auto& row : table.rows) {
        for (int j = 0; j < label_col; ++j) out.data.points.push_back(row[static_cast<size_t>(j)]);
        out.data.labels.push_back(static_cast<int>(row[static_cast<size_t>(label_col)]));
        out.data.conditions.push_back(static_cast<int>(row[static_cast<size_t>(cond_col)]));
        const int a = static_cast<int>(row[static_cast<size_t>(assign_col)]);
        if (a < 0) fail(ErrorKind::Format, path.string() + ": negative cluster id");
        out.assignment.assignment.push_back(a);
        max_k = std::max(max_k, a);
    }
    out.assignment.K = max_k + 1;
    return out;
}

}  // namespace hddm
