// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hddm/conversion.hpp"
#include "hddm/evaluation.hpp"
#include "hddm/partition.hpp"
#include "hddm/sampler.hpp"
#include "hddm/training.hpp"

namespace hddm {

struct DatasetConfig {
    int blobs = 8;
    int styles = 2;  // conditions shared by all blobs
    double radius = 5.0;
    double style_offset = 1.0;
    double variance = 0.05;
    int dim = 2;
    size_t points = 4000;

    MixtureSpec spec() const { return ring_mixture(blobs, radius, variance, dim, styles, style_offset); }
    int conditions() const { return spec().condition_count(); }
};

struct EvaluateConfig {
    int samples_per_group = 10;
    int groups_per_condition = 20;
    std::vector<double> taus{0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    int threshold_steps = 75;
    double threshold_cfg = 6.0;
    int warm_pretrain_steps = 1500;
    int seeds = 1;  // studies run for seed, seed+1, ...
    bool use_checkpoints = false;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    int K = 8;
    int m_fine = 64;
    Metric metric = Metric::Euclidean;
    std::vector<int> ddpm_ids{0, 3};
    Schedule ddpm_schedule = Schedule::cosine();
    TrainConfig expert;
    TrainConfig router;
    SamplerConfig sampler;
    EvaluateConfig evaluate;
    std::filesystem::path out = "out";
    uint64_t seed = 0;

    ExperimentConfig();

    ObjectiveMix mix() const { return ObjectiveMix::with_ddpm(K, ddpm_ids, ddpm_schedule); }
    StudyConfig study(uint64_t study_seed) const;
};

void validate(const ExperimentConfig& cfg);

// Section/key=value text. Errors are Usage errors naming `source` and the line.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace hddm
