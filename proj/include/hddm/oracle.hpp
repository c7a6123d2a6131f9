// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hddm/partition.hpp"
#include "hddm/schedule.hpp"
#include "hddm/types.hpp"

namespace hddm {

// Closed-form ground truth for a diagonal Gaussian mixture pushed through the
// forward process x_t = alpha_t x0 + sigma_t eps. Per component,
// x_t | k ~ N(alpha mu_k, alpha^2 S_k + sigma^2 I), so posteriors and
// conditional expectations are exact.
class MixtureOracle {
public:
    // Zero variances are accepted and model point masses.
    MixtureOracle(MixtureSpec spec, Schedule schedule);

    size_t components() const noexcept { return spec_.components(); }
    size_t dim() const noexcept { return spec_.dim(); }
    const MixtureSpec& spec() const noexcept { return spec_; }
    const Schedule& schedule() const noexcept { return schedule_; }

    // p_t(k | x_t) for t in [0, 1]; at t = 1 returns the prior weights.
    Vec posterior(ConstSpan x_t, double t) const;
    Vec log_posterior(ConstSpan x_t, double t) const;

    // E[x0 | x_t, k] and E[eps | x_t, k] for t in [0, 1] wherever the marginal
    // variance alpha^2 s^2 + sigma^2 is positive.
    Vec expected_x0(int k, ConstSpan x_t, double t) const;
    Vec optimal_eps_component(int k, ConstSpan x_t, double t) const;

    // alpha' E[x0 | x_t, k] + sigma' E[eps | x_t, k]; for the linear schedule
    // this is E[eps - x0 | x_t, k].
    Vec optimal_velocity_component(int k, ConstSpan x_t, double t) const;

    // Marginal versions, computed from the marginal conditional expectations
    // E[x0 | x_t] = sum_k p_k E[x0 | x_t, k].
    Vec optimal_eps_marginal(ConstSpan x_t, double t) const;
    Vec optimal_velocity_marginal(ConstSpan x_t, double t) const;

    // Exact mean and covariance (row-major) of the clean-data mixture.
    Vec data_mean() const;
    Vec data_covariance() const;

private:
    void check_time(double t) const;
    void check_point(ConstSpan x_t) const;

    MixtureSpec spec_;
    Schedule schedule_;
};

}  // namespace hddm
