// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "hddm/netcore.hpp"
#include "hddm/rng.hpp"
#include "hddm/schedule.hpp"
#include "hddm/types.hpp"

namespace hddm {

// One corrupted training example. Epsilon experts corrupt with their own
// schedule and regress eps; velocity experts use the linear path
// x_t = (1-t) x0 + t eps and regress eps - x0.
struct NoisySample {
    Vec x0;
    Vec eps;
    double t = 0.0;
    Vec x_t;
    Vec target;
};

NoisySample make_noisy(ConstSpan x0, double t, Objective objective, const Schedule& schedule, Rng& rng);
// Same construction with a caller-supplied noise draw.
NoisySample make_noisy_with(ConstSpan x0, ConstSpan eps, double t, Objective objective, const Schedule& schedule);

struct LossAndGrad {
    double loss = 0.0;
    Vec dloss_dpred;
};

// Mean-per-element squared error against sample.target.
LossAndGrad loss_and_grad_target(ConstSpan prediction, const NoisySample& sample);

// ODE velocity of the path x_t = alpha x0 + sigma eps: alpha' x0 + sigma' eps.
// For the linear schedule this is eps - x0, the flow-matching target.
Vec path_velocity(ConstSpan x0, ConstSpan eps, double t, const Schedule& schedule);

// The diffusion v-parameterization alpha eps - sigma x0 (VP schedules only).
// Not the sampling velocity above.
Vec v_parameterization_target(ConstSpan x0, ConstSpan eps, double t, const Schedule& schedule);

// Implicit per-timestep weights of the clean-sample error:
// w_eps = alpha^2 / sigma^2, w_v = 1 / sigma^2, ratio = w_v / w_eps = 1 / alpha^2.
struct WeightingProfile {
    std::vector<double> t;
    std::vector<double> w_eps;
    std::vector<double> w_v;
    std::vector<double> ratio;
};

WeightingProfile weighting_profile(const Schedule& schedule, const std::vector<double>& grid);
void write_weighting_csv(const WeightingProfile& profile, const std::filesystem::path& path);

// Per-sample error identities measured on random (x0, eps, prediction)
// triples: |eps_hat - eps|^2 / |x0_hat - x0|^2 against alpha^2/sigma^2 and,
// for VP schedules, |v_hat - v|^2 / |x0_hat - x0|^2 against 1/sigma^2.
struct WeightingCheck {
    double eps_ratio = 0.0;          // mean measured ratio
    double eps_expected = 0.0;
    double eps_max_rel_error = 0.0;  // max over samples of |measured/expected - 1|
    bool v_checked = false;          // false for non-VP schedules
    double v_ratio = 0.0;
    double v_expected = 0.0;
    double v_max_rel_error = 0.0;
};

WeightingCheck empirical_weighting_check(const Schedule& schedule, double t, int batch, int dim, Rng& rng);

}  // namespace hddm
