// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

#include "hddm/schedule.hpp"
#include "hddm/types.hpp"

namespace hddm {

enum class ScalingMode { Sigmoid, Piecewise, Off };

ScalingMode parse_scaling_mode(std::string_view name);
const char* scaling_mode_name(ScalingMode mode) noexcept;

struct ConversionConfig {
    double clamp_range = 20.0;   // 20 for latent-style data, 5 for pixel-style
    double alpha_floor = 0.01;
    ScalingMode scaling = ScalingMode::Piecewise;
    double derivative_h = kDerivativeStep;
    bool clamp_enabled = true;
    bool floor_enabled = true;
    // Velocity dampening targets curved schedules; linear-schedule experts
    // are left unscaled unless this is set.
    bool scale_linear_schedule = false;

    // All safeguards disabled: pure inversion and path differentiation.
    static ConversionConfig exact() {
        ConversionConfig c;
        c.clamp_enabled = false;
        c.floor_enabled = false;
        c.scaling = ScalingMode::Off;
        return c;
    }
};

void validate(const ConversionConfig& cfg);

// Counters for the conversion audit.
struct ConversionStats {
    uint64_t entries = 0;
    uint64_t clamp_hits = 0;
    uint64_t floor_hits = 0;
    double last_scale = 1.0;

    double clamp_rate() const { return entries ? static_cast<double>(clamp_hits) / entries : 0.0; }
};

// x0_hat = (x_t - sigma eps_hat) / max(alpha, floor), clamped to [-r, r].
Vec recover_x0(ConstSpan x_t, ConstSpan eps_pred, double t, const Schedule& schedule, const ConversionConfig& cfg,
               ConversionStats* stats = nullptr);

// v = alpha'(t) x0_hat + sigma'(t) eps_hat, times s(t).
Vec eps_to_velocity(ConstSpan x_t, ConstSpan eps_pred, double t, const Schedule& schedule,
                    const ConversionConfig& cfg, ConversionStats* stats = nullptr);

// Velocity dampening factor s(t) in (0, 1].
double adaptive_scale(double t, ScalingMode mode);

}  // namespace hddm
