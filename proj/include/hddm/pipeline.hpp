// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hddm/config.hpp"

namespace hddm {

// File names inside the output directory.
std::filesystem::path assignment_path(const ExperimentConfig& cfg);
std::filesystem::path expert_path(const ExperimentConfig& cfg, int k);
std::filesystem::path router_path(const ExperimentConfig& cfg);

// Each command reads only its declared inputs, writes its outputs
// atomically, and returns a short human-readable report.
std::string run_cluster(const ExperimentConfig& cfg);
std::string run_train_expert(const ExperimentConfig& cfg, int k);
std::string run_train_router(const ExperimentConfig& cfg);
std::string run_sample(const ExperimentConfig& cfg);
std::string run_evaluate(const ExperimentConfig& cfg, Study study);
std::string run_convert_checkpoint(const std::filesystem::path& src, const std::filesystem::path& dst,
                                   Objective objective, const Schedule& schedule, uint64_t reinit_seed);

}  // namespace hddm
