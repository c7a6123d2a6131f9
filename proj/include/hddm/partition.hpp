// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "hddm/types.hpp"

namespace hddm {

// Gaussian mixture with diagonal covariances.
struct MixtureSpec {
    std::vector<double> weights;
    std::vector<Vec> means;
    std::vector<Vec> variances;
    std::vector<int> conditions;  // condition id per component; empty = component id

    size_t components() const { return weights.size(); }
    size_t dim() const { return means.empty() ? 0 : means.front().size(); }
    int condition_of(size_t k) const { return conditions.empty() ? static_cast<int>(k) : conditions[k]; }
    int condition_count() const;
};

// Throws Spec error on mismatched shapes, non-positive variances, or weights
// that do not sum to one.
void validate(const MixtureSpec& spec);

// `blobs` blobs evenly spaced on a circle. With styles > 1 every blob splits
// radially into `styles` sub-blobs `style_offset` apart; sub-blob s carries
// condition s, so every condition appears in every blob. Component index is
// blob * styles + style.
MixtureSpec ring_mixture(int blobs, double radius, double variance, int dim = 2, int styles = 1,
                         double style_offset = 0.0);

struct SyntheticDataset {
    int dim = 0;
    std::vector<double> points;  // row-major N x dim
    std::vector<int> labels;      // true component per point, empty when unknown
    std::vector<int> conditions;  // conditioning label per point, empty = labels
    MixtureSpec spec;

    size_t size() const { return dim ? points.size() / static_cast<size_t>(dim) : 0; }
    ConstSpan point(size_t i) const {
        return ConstSpan(points).subspan(i * static_cast<size_t>(dim), static_cast<size_t>(dim));
    }
    int label(size_t i) const { return labels.empty() ? 0 : labels[i]; }
    int condition(size_t i) const { return conditions.empty() ? label(i) : conditions[i]; }
};

// Deterministic in `seed`; point i depends only on (seed, i).
SyntheticDataset generate_mixture(const MixtureSpec& spec, size_t n, uint64_t seed);

enum class Metric { Euclidean, Cosine };
Metric parse_metric(std::string_view name);

struct ClusterAssignment {
    int K = 0;
    std::vector<int> assignment;        // per point, in [0, K)
    std::vector<double> centroids;      // K x dim
    std::vector<int> fine_assignment;   // per point, in [0, M)
    std::vector<double> fine_centroids; // M x dim
    std::vector<int> fine_to_coarse;    // per fine group
    std::vector<double> fine_objective;   // per Lloyd iteration, stage 1
    std::vector<double> coarse_objective; // per Lloyd iteration, stage 2
};

// Result of one weighted Lloyd run.
struct KMeansResult {
    std::vector<int> labels;
    std::vector<double> centroids;
    std::vector<double> objective;
    int iterations = 0;
};

// Weighted k-means with order-independent k-means++ seeding: the outcome is a
// function of the multiset of (point, weight) pairs and the seed only.
KMeansResult weighted_kmeans(ConstSpan points, int dim, ConstSpan weights, int k, Metric metric, uint64_t seed,
                             int max_iterations = 200);

// Stage 1 clusters points into m_fine groups; stage 2 clusters the group
// centroids, weighted by group size, into K; points inherit the coarse label
// of their group.
ClusterAssignment hierarchical_kmeans(const SyntheticDataset& data, int m_fine, int K, Metric metric, uint64_t seed);

// Points with assignment k, in dataset order.
SyntheticDataset shard(const SyntheticDataset& data, const ClusterAssignment& assignment, int k);

// CSV: x0..x{dim-1}, true_component, condition, assignment
void write_assignment_csv(const SyntheticDataset& data, const ClusterAssignment& assignment,
                          const std::filesystem::path& path);
void write_centroids_csv(ConstSpan centroids, int dim, const std::filesystem::path& path);
void write_points_csv(ConstSpan points, int dim, const std::vector<int>& labels, const std::filesystem::path& path);

struct LoadedAssignment {
    SyntheticDataset data;
    ClusterAssignment assignment;
};
LoadedAssignment read_assignment_csv(const std::filesystem::path& path);

}  // namespace hddm
