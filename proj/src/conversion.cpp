// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/conversion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hddm/error.hpp"

namespace hddm {

ScalingMode parse_scaling_mode(std::string_view name) {
    if (name == "sigmoid") return ScalingMode::Sigmoid;
    if (name == "piecewise") return ScalingMode::Piecewise;
    if (name == "off") return ScalingMode::Off;
    fail(ErrorKind::Config, "unknown scaling mode '" + std::string(name) + "' (expected sigmoid, piecewise, off)");
}

const char* scaling_mode_name(ScalingMode mode) noexcept {
    switch (mode) {
        case ScalingMode::Sigmoid: return "sigmoid";
        case ScalingMode::Piecewise: return "piecewise";
        case ScalingMode::Off: return "off";
    }
    return "off";
}

void validate(const ConversionConfig& cfg) {
    if (!(cfg.clamp_range > 0.0)) fail(ErrorKind::Config, "clamp_range must be positive");
    if (!(cfg.alpha_floor > 0.0 && cfg.alpha_floor < 1.0)) fail(ErrorKind::Config, "alpha_floor must be in (0, 1)");
    if (!(cfg.derivative_h > 0.0)) fail(ErrorKind::Config, "derivative_h must be positive");
}

Vec recover_x0(ConstSpan x_t, ConstSpan eps_pred, double t, const Schedule& schedule, const ConversionConfig& cfg,
               ConversionStats* stats) {
    if (x_t.size() != eps_pred.size()) fail(ErrorKind::Shape, "x_t and eps prediction differ in size");
    if (!all_finite(x_t) || !all_finite(eps_pred)) fail(ErrorKind::Numeric, "non-finite conversion input");
    const AlphaSigma as = schedule.at(t);
    double alpha = as.alpha;
    if (cfg.floor_enabled && alpha < cfg.alpha_floor) {
        alpha = cfg.alpha_floor;
        if (stats) ++stats->floor_hits;
    }
    Vec x0(x_t.size());
    for (size_t i = 0; i < x0.size(); ++i) {
        double v = (x_t[i] - as.sigma * eps_pred[i]) / alpha;
        if (cfg.clamp_enabled && std::abs(v) > cfg.clamp_range) {
            v = std::clamp(v, -cfg.clamp_range, cfg.clamp_range);
            if (stats) ++stats->clamp_hits;
        }
        x0[i] = v;
    }
    if (stats) stats->entries += x0.size();
    return x0;
}

Vec eps_to_velocity(ConstSpan x_t, ConstSpan eps_pred, double t, const Schedule& schedule,
                    const ConversionConfig& cfg, ConversionStats* stats) {
    const Vec x0 = recover_x0(x_t, eps_pred, t, schedule, cfg, stats);
    const AlphaSigma d = schedule.derivatives(t, cfg.derivative_h);
    const bool scaled = schedule.kind() != ScheduleKind::Linear || cfg.scale_linear_schedule;
    const double s = scaled ? adaptive_scale(t, cfg.scaling) : 1.0;
    if (stats) stats->last_scale = s;
    Vec v(x0.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = s * (d.alpha * x0[i] + d.sigma * eps_pred[i]);
    return v;
}

double adaptive_scale(double t, ScalingMode mode) {
    switch (mode) {
        case ScalingMode::Off:
            return 1.0;
        case ScalingMode::Sigmoid:
            if (t <= 0.85) return 1.0;
            return std::min(1.0, 15.0 / (1.0 + std::exp(10.0 * (t - 0.85))));
        case ScalingMode::Piecewise:
            if (t > 0.85) return 0.88;
            if (t > 0.6) return 0.93;
            return 0.96;
    }
    return 1.0;
}

}  // namespace hddm
