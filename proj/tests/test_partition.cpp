// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "hddm/partition.hpp"
#include "hddm/rng.hpp"
#include "test_util.hpp"

using namespace hddm;
using hddm::test::max_abs_diff;

namespace {

MixtureSpec two_blobs() {
    MixtureSpec s;
    s.weights = {0.5, 0.5};
    s.means = {{-5.0, 0.0}, {5.0, 0.0}};
    s.variances = {{1.0, 1.0}, {1.0, 1.0}};
    return s;
}

// Labels equal up to a relabeling.
double agreement_up_to_permutation(const std::vector<int>& a, const std::vector<int>& b, int K) {
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        size_t same = 0;
        for (size_t i = 0; i < a.size(); ++i) same += perm[a[i]] == b[i];
        best = std::max(best, static_cast<double>(same) / a.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("generate_mixture examples") {
    MixtureSpec one;
    one.weights = {1.0};
    one.means = {{0.0, 0.0}};
    one.variances = {{1.0, 1.0}};
    const auto d = generate_mixture(one, 1000, 3);
    for (int j = 0; j < 2; ++j) {
        double mean = 0;
        for (size_t i = 0; i < d.size(); ++i) mean += d.point(i)[j];
        mean /= 1000;
        CHECK(std::abs(mean) < 4.0 / std::sqrt(1000.0));
    }

    // Binomial(8000, 1/8): sd = sqrt(8000 * 1/8 * 7/8) = 29.58, 3 sd = 88.7.
    const auto octagon = generate_mixture(ring_mixture(8, 5.0, 0.1), 8000, 4);
    std::vector<int> counts(8, 0);
    for (int l : octagon.labels) ++counts[l];
    for (int c : counts) CHECK(std::abs(c - 1000) <= 88.7);

    const auto empty = generate_mixture(one, 0, 1);
    CHECK(empty.size() == 0);
    CHECK(empty.dim == 2);
}

TEST_CASE("generate_mixture is deterministic and per-point") {
    const auto spec = ring_mixture(8, 5.0, 0.05, 2, 2, 1.0);
    const auto a = generate_mixture(spec, 500, 7);
    const auto b = generate_mixture(spec, 500, 7);
    const auto c = generate_mixture(spec, 300, 7);
    CHECK(a.points == b.points);
    CHECK(std::equal(c.points.begin(), c.points.end(), a.points.begin()));
    CHECK(generate_mixture(spec, 500, 8).points != a.points);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.condition(i) == spec.conditions[a.labels[i]]);
}

TEST_CASE("ring mixture with styles") {
    const auto s = ring_mixture(8, 5.0, 0.05, 3, 2, 1.0);
    CHECK(s.components() == 16);
    CHECK(s.dim() == 3);
    CHECK(s.condition_count() == 2);
    // Blob 2 sits at 90 degrees; styles at radius 4.5 and 5.5.
    CHECK(std::abs(s.means[4][1] - 4.5) < 1e-12);
    CHECK(std::abs(s.means[5][1] - 5.5) < 1e-12);
    CHECK(s.condition_of(4) == 0);
    CHECK(s.condition_of(5) == 1);
    CHECK(s.means[5][2] == 0.0);
    CHECK(std::abs(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) - 1.0) <= 1e-12);
}

TEST_CASE("invalid specs") {
    auto s = two_blobs();
    s.variances[1][0] = 0.0;
    CHECK_THROWS_KIND(generate_mixture(s, 10, 1), ErrorKind::Spec);
    s = two_blobs();
    s.weights = {0.5, 0.6};
    CHECK_THROWS_KIND(generate_mixture(s, 10, 1), ErrorKind::Spec);
    s = two_blobs();
    s.means[1] = {1.0};
    CHECK_THROWS_KIND(generate_mixture(s, 10, 1), ErrorKind::Spec);
}

TEST_CASE("hierarchical k-means recovers separated blobs") {
    const auto data = generate_mixture(two_blobs(), 600, 5);
    const auto a = hierarchical_kmeans(data, 16, 2, Metric::Euclidean, 9);
    // Oracle: nearest true mean.
    std::vector<int> oracle;
    for (size_t i = 0; i < data.size(); ++i) oracle.push_back(data.point(i)[0] > 0 ? 1 : 0);
    CHECK(agreement_up_to_permutation(a.assignment, oracle, 2) == 1.0);
    CHECK(agreement_up_to_permutation(a.assignment, data.labels, 2) == 1.0);
    // Shard sizes equal blob sizes.
    const auto s0 = shard(data, a, 0), s1 = shard(data, a, 1);
    const size_t ones = std::count(oracle.begin(), oracle.end(), 1);
    CHECK(std::set<size_t>{s0.size(), s1.size()} == std::set<size_t>{ones, data.size() - ones});
}

TEST_CASE("hierarchical k-means degenerate cases") {
    const auto data = generate_mixture(ring_mixture(8, 5.0, 0.05), 200, 1);
    const auto one = hierarchical_kmeans(data, 8, 1, Metric::Euclidean, 1);
    for (int l : one.assignment) CHECK(l == 0);

    const auto small = generate_mixture(two_blobs(), 12, 2);
    const auto each = hierarchical_kmeans(small, 12, 12, Metric::Euclidean, 3);
    CHECK(std::set<int>(each.assignment.begin(), each.assignment.end()).size() == 12);

    CHECK_THROWS_KIND(hierarchical_kmeans(small, 4, 8, Metric::Euclidean, 1), ErrorKind::Spec);
    CHECK_THROWS_KIND(hierarchical_kmeans(small, 13, 2, Metric::Euclidean, 1), ErrorKind::Spec);
}

TEST_CASE("property: partition law, monotone objective, determinism") {
    const auto data = generate_mixture(ring_mixture(8, 5.0, 0.05, 2, 2, 1.0), 1500, 11);
    for (int K : {1, 2, 5, 8})
        for (uint64_t seed : {0u, 1u, 2u}) {
            const auto a = hierarchical_kmeans(data, 32, K, Metric::Euclidean, seed);
            size_t total = 0;
            for (int k = 0; k < K; ++k) {
                const auto s = shard(data, a, k);
                CHECK(s.size() > 0);
                total += s.size();
            }
            CHECK(total == data.size());
            for (size_t i = 1; i < a.fine_objective.size(); ++i)
                CHECK(a.fine_objective[i] <= a.fine_objective[i - 1] * (1 + 1e-12));
            for (size_t i = 1; i < a.coarse_objective.size(); ++i)
                CHECK(a.coarse_objective[i] <= a.coarse_objective[i - 1] * (1 + 1e-12));
            const auto again = hierarchical_kmeans(data, 32, K, Metric::Euclidean, seed);
            CHECK(again.assignment == a.assignment);
            CHECK(again.centroids == a.centroids);
            // Every point sits with its nearest fine centroid.
            for (size_t i = 0; i < data.size(); i += 37) {
                const auto p = data.point(i);
                double best = 1e300;
                int arg = -1;
                for (int m = 0; m < 32; ++m) {
                    const double d2 = std::pow(p[0] - a.fine_centroids[2 * m], 2) + std::pow(p[1] - a.fine_centroids[2 * m + 1], 2);
                    if (d2 < best) best = d2, arg = m;
                }
                CHECK(a.fine_assignment[i] == arg);
            }
        }
}

TEST_CASE("property: permutation equivariance") {
    const auto data = generate_mixture(ring_mixture(8, 5.0, 0.05), 400, 3);
    std::vector<size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(5);
    for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    SyntheticDataset shuffled = data;
    for (size_t i = 0; i < perm.size(); ++i) {
        shuffled.points[2 * i] = data.points[2 * perm[i]];
        shuffled.points[2 * i + 1] = data.points[2 * perm[i] + 1];
        shuffled.labels[i] = data.labels[perm[i]];
    }
    const auto a = hierarchical_kmeans(data, 16, 8, Metric::Euclidean, 2);
    const auto b = hierarchical_kmeans(shuffled, 16, 8, Metric::Euclidean, 2);
    for (size_t i = 0; i < perm.size(); ++i) CHECK(b.assignment[i] == a.assignment[perm[i]]);
}

TEST_CASE("cosine metric groups by direction") {
    MixtureSpec s;
    s.weights = {0.5, 0.5};
    s.means = {{3.0, 0.0, 0.0}, {0.0, 3.0, 0.0}};
    s.variances = {{0.01, 0.01, 0.01}, {0.01, 0.01, 0.01}};
    auto data = generate_mixture(s, 200, 1);
    // Scale half the points radially; cosine clustering must ignore it.
    for (size_t i = 0; i < data.size(); i += 2)
        for (int j = 0; j < 3; ++j) data.points[3 * i + j] *= 4.0;
    const auto a = hierarchical_kmeans(data, 8, 2, Metric::Cosine, 3);
    CHECK(agreement_up_to_permutation(a.assignment, data.labels, 2) == 1.0);
    CHECK(parse_metric("cosine") == Metric::Cosine);
    CHECK_THROWS_KIND(parse_metric("manhattan"), ErrorKind::Config);
}

TEST_CASE("shards") {
    const auto data = generate_mixture(ring_mixture(4, 5.0, 0.05), 40, 1);
    ClusterAssignment forced;
    forced.K = 3;
    forced.assignment.assign(data.size(), 0);
    for (size_t i = 0; i < data.size(); i += 2) forced.assignment[i] = 1;
    CHECK(shard(data, forced, 2).size() == 0);
    const auto s1 = shard(data, forced, 1);
    REQUIRE(s1.size() == 20);
    for (size_t i = 0; i < 20; ++i) {
        CHECK(s1.point(i)[0] == data.point(2 * i)[0]);
        CHECK(s1.labels[i] == data.labels[2 * i]);
    }
    CHECK_THROWS_KIND(shard(data, forced, 3), ErrorKind::Domain);
}

TEST_CASE("assignment csv round trip") {
    const auto dir = test::scratch_dir("assign");
    const auto data = generate_mixture(ring_mixture(8, 5.0, 0.05, 2, 2, 1.0), 300, 2);
    const auto a = hierarchical_kmeans(data, 16, 8, Metric::Euclidean, 1);
    write_assignment_csv(data, a, dir / "a.csv");
    const auto loaded = read_assignment_csv(dir / "a.csv");
    CHECK(loaded.data.points == data.points);
    CHECK(loaded.data.labels == data.labels);
    CHECK(loaded.data.conditions == data.conditions);
    CHECK(loaded.assignment.assignment == a.assignment);
    CHECK(loaded.assignment.K == 8);
    CHECK_THROWS_KIND(read_assignment_csv(dir / "nope.csv"), ErrorKind::Io);
}
