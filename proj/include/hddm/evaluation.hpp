// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hddm/conversion.hpp"
#include "hddm/partition.hpp"
#include "hddm/sampler.hpp"
#include "hddm/training.hpp"

namespace hddm {

struct Moments {
    size_t dim = 0;
    Vec mean;
    Vec cov;  // row-major dim x dim
};

// Sample mean and unbiased covariance; needs at least dim + 1 points.
Moments sample_moments(ConstSpan points, size_t dim);

struct FrechetResult {
    double value = 0.0;
    bool regularized = false;  // a covariance was lifted by 1e-8 I
};

FrechetResult frechet_from_moments(const Moments& a, const Moments& b);
FrechetResult frechet_distance(ConstSpan a, ConstSpan b, size_t dim);

struct DiversityResult {
    double mean_pairwise = 0.0;
    std::optional<double> intra;  // mean of per-group mean pairwise distances
    int skipped_groups = 0;       // singleton groups
};

double mean_pairwise_distance(ConstSpan points, size_t dim);
DiversityResult diversity(ConstSpan points, size_t dim, const std::vector<int>* groups = nullptr);

// Ancestral epsilon sampler over the uniform grid t_i = i / steps, one draw
// per entry of `conds`. x0 estimates pass through the conversion safeguards.
Vec native_ddpm_baseline(const Expert& expert, int steps, uint64_t seed, const std::vector<std::optional<int>>& conds,
                         double cfg_scale = 1.0, const ConversionConfig& safeguards = {});

struct MetricReport {
    double frechet = 0.0;
    bool frechet_regularized = false;
    double diversity_mean_pairwise = 0.0;
    std::optional<double> intra_condition_diversity;
    std::vector<std::pair<double, double>> router_accuracy_curve;  // (t, accuracy)
    size_t sample_count = 0;
};

MetricReport evaluate_samples(ConstSpan samples, size_t dim, const std::vector<int>& groups, const Moments& reference);

// Top-1 accuracy of `router` against `labels` on points noised under
// `schedule` at each probe time.
std::vector<std::pair<double, double>> router_accuracy_curve(const Router& router, const SyntheticDataset& data,
                                                             const std::vector<int>& labels, const Schedule& schedule,
                                                             const std::vector<double>& times, size_t probes,
                                                             uint64_t seed);

// Mean KL(oracle posterior || router) over probes drawn from the mixture.
double router_kl_to_oracle(const Router& router, const MixtureOracle& oracle, const std::vector<double>& times,
                           size_t probes, uint64_t seed);

enum class Study { MonoVsDecentralized, StrategySweep, ThresholdSweep, MixSweep, WarmStart };

Study parse_study(std::string_view name);
const char* study_name(Study study) noexcept;

struct StudyConfig {
    MixtureSpec data_spec;
    size_t points = 4000;
    int K = 8;
    int m_fine = 64;
    Metric metric = Metric::Euclidean;
    std::vector<int> ddpm_ids{0, 3};
    Schedule eps_schedule = Schedule::cosine();
    TrainConfig expert;
    TrainConfig router;
    SamplerConfig sampler;
    // Every condition gets groups_per_condition groups of samples_per_group
    // draws; the whole set feeds the Frechet column, the groups the
    // intra-condition column.
    int samples_per_group = 10;
    int groups_per_condition = 20;
    std::vector<double> taus{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    int threshold_steps = 75;
    double threshold_cfg = 6.0;
    int warm_pretrain_steps = 1500;
    uint64_t seed = 0;
    // When set, experts and router are loaded from expert_{k}.hddm and
    // router.hddm here instead of being trained.
    std::optional<std::filesystem::path> checkpoint_dir;
};

struct StudyRow {
    std::string config;
    MetricReport metrics;
    double flop_proxy = 0.0;
    std::optional<double> steps_to_target;
    std::optional<double> final_val_loss;
};

struct StudyTable {
    Study study = Study::StrategySweep;
    uint64_t seed = 0;
    std::vector<StudyRow> rows;
};

StudyTable run_study(Study study, const StudyConfig& cfg);

extern const char* const kStudyCsvHeader;
std::string study_csv(const std::vector<StudyTable>& tables);
void write_study_csv(const std::vector<StudyTable>& tables, const std::filesystem::path& path);

// Trained pieces of one decentralized system; shared by studies and the CLI.
struct DecentralizedSystem {
    SyntheticDataset data;
    ClusterAssignment assignment;
    ObjectiveMix mix;
    std::vector<std::shared_ptr<const ExpertModel>> experts;
    std::shared_ptr<const ExpertModel> router;
    double flop_proxy = 0.0;
};

// Batch-size x steps x parameter count summed over trainers.
double flop_proxy(const TrainConfig& cfg, const ExpertModel& model);

ExpertSet network_experts(const std::vector<std::shared_ptr<const ExpertModel>>& models);

}  // namespace hddm
