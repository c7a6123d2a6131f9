// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "hddm/netcore.hpp"
#include "hddm/partition.hpp"
#include "hddm/schedule.hpp"

namespace hddm {

struct TrainConfig {
    int steps = 2000;
    int batch_size = 32;
    double lr = 1e-3;
    int warmup_steps = 20;
    double ema_decay = 0.9999;
    double cfg_drop_prob = 0.1;
    double clip_norm = 1.0;
    double weight_decay = 0.0;
    bool cosine_decay = false;  // anneal lr to zero after warmup
    Objective objective = Objective::Velocity;
    Schedule schedule = Schedule::linear();
    uint64_t seed = 0;
    int layers = 2;
    int width = 32;
    double holdout_fraction = 0.1;
    int eval_interval = 0;     // validation every n steps; 0 = only at the end
    int validation_draws = 4;  // noise draws per held-out point
};

void validate(const TrainConfig& cfg);

// Linear warmup then constant (or cosine-annealed) learning rate at `step`.
double learning_rate(const TrainConfig& cfg, int step);

struct CurveRow {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

struct ValidationPoint {
    int step = 0;  // optimizer steps taken when measured
    double loss = 0.0;
};

struct TrainResult {
    ExpertModel model;
    std::vector<CurveRow> curve;
    std::vector<ValidationPoint> validation;
};

void write_curve_csv(const std::vector<CurveRow>& curve, const std::filesystem::path& path);

// Trains one expert on its shard only. `cond_count` is the number of
// condition ids the shard labels may take. When `init` is given its
// parameters seed the run (warm start); otherwise the model is freshly
// initialized from the config seed.
TrainResult train_expert(const SyntheticDataset& shard, const TrainConfig& cfg, int cond_count,
                         const ExpertModel* init = nullptr);

// Mean validation loss of `model` over the held-out split of `shard`, with
// noise draws fixed by the config seed.
double validation_loss(const ExpertModel& model, const SyntheticDataset& shard, const TrainConfig& cfg);

// Per-expert objective and schedule tags.
struct ObjectiveMix {
    std::vector<Objective> objectives;
    std::vector<Schedule> schedules;

    size_t size() const noexcept { return objectives.size(); }
    std::vector<int> ddpm_ids() const;
    // Distinct schedules in first-use order; FM experts contribute the linear path.
    std::vector<Schedule> corruption_schedules() const;

    // K experts, those in `ddpm_ids` trained with epsilon-prediction under
    // `eps_schedule`, the rest with flow matching on the linear path.
    static ObjectiveMix with_ddpm(int K, const std::vector<int>& ddpm_ids, const Schedule& eps_schedule);
};

void validate(const ObjectiveMix& mix);

// Router: the expert trunk with a K-way classification head and no
// condition input. Trained with cross-entropy on (x_t, t) -> cluster id.
TrainResult train_router(const SyntheticDataset& data, const ClusterAssignment& assignment,
                         const ObjectiveMix& mix, const TrainConfig& cfg);

// Transfers the trunk of `source` into a model with the target objective and
// schedule. The head is redrawn from N(0, 0.02) and the condition table
// freshly initialized. `target_cond_count` < 0 keeps the source value.
ExpertModel convert_checkpoint(const ExpertModel& source, Objective target_objective, const Schedule& target_schedule,
                               uint64_t reinit_seed, int target_cond_count = -1);

// Same, into an explicitly given target architecture; trunk tensors must
// match in shape or a Conversion error lists the offenders.
ExpertModel convert_checkpoint_into(const ExpertModel& source, const Architecture& target, Objective target_objective,
                                    const Schedule& target_schedule, uint64_t reinit_seed);

// Worker count from HDDM_THREADS (default: hardware concurrency, at least 1).
int worker_count();

// Runs fn(i) for i in [0, n) over at most worker_count() threads. The first
// exception is rethrown after all workers finish.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace hddm
