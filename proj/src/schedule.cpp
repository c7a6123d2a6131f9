// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hddm/error.hpp"

namespace hddm {

namespace {

void check_time(double t) {
    if (!(t >= 0.0 && t <= 1.0))
        fail(ErrorKind::Domain, "schedule time " + std::to_string(t) + " outside [0, 1]");
}

}  // namespace

Schedule Schedule::linear() { return Schedule(ScheduleKind::Linear); }

Schedule Schedule::cosine() { return Schedule(ScheduleKind::Cosine); }

Schedule Schedule::tabulated(std::vector<double> knots, std::vector<double> alphas,
                             std::vector<double> sigmas) {
    if (knots.size() < 2 || knots.size() != alphas.size() || knots.size() != sigmas.size())
        fail(ErrorKind::Spec, "tabulated schedule needs >= 2 knots with matching alpha/sigma");
    if (knots.front() != 0.0 || knots.back() != 1.0)
        fail(ErrorKind::Spec, "tabulated schedule knots must span [0, 1]");
    if (std::abs(alphas.front() - 1.0) > 1e-12 || std::abs(sigmas.front()) > 1e-12)
        fail(ErrorKind::Spec, "tabulated schedule must start at alpha=1, sigma=0");
    for (size_t i = 1; i < knots.size(); ++i) {
        if (!(knots[i] > knots[i - 1]))
            fail(ErrorKind::Spec, "tabulated schedule knots must be strictly increasing");
        if (alphas[i] > alphas[i - 1] || sigmas[i] < sigmas[i - 1])
            fail(ErrorKind::Spec, "tabulated schedule must have alpha nonincreasing, sigma nondecreasing");
    }
    Schedule s(ScheduleKind::VpGeneric);
    s.knots_ = std::move(knots);
    s.alphas_ = std::move(alphas);
    s.sigmas_ = std::move(sigmas);
    return s;
}

std::string Schedule::name() const {
    switch (kind_) {
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::VpGeneric: return "vp-generic";
    }
    return "unknown";
}

AlphaSigma Schedule::eval(double t) const {
    switch (kind_) {
        case ScheduleKind::Linear:
            return {1.0 - t, t};
        case ScheduleKind::Cosine: {
            const double angle = 0.5 * std::numbers::pi * t;
            return {std::cos(angle), std::sin(angle)};
        }
        case ScheduleKind::VpGeneric: {
            auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
            size_t hi = static_cast<size_t>(it - knots_.begin());
            if (hi >= knots_.size()) return {alphas_.back(), sigmas_.back()};
            if (hi == 0) return {alphas_.front(), sigmas_.front()};
            const size_t lo = hi - 1;
            const double w = (t - knots_[lo]) / (knots_[hi] - knots_[lo]);
            return {alphas_[lo] + w * (alphas_[hi] - alphas_[lo]),
                    sigmas_[lo] + w * (sigmas_[hi] - sigmas_[lo])};
        }
    }
    return {1.0, 0.0};
}

AlphaSigma Schedule::at(double t) const {
    check_time(t);
    return eval(t);
}

AlphaSigma Schedule::derivatives(double t, double h) const {
    check_time(t);
    if (kind_ == ScheduleKind::Linear) return {-1.0, 1.0};
    if (t < h) {
        // Second-order one-sided forward difference.
        const AlphaSigma f0 = eval(t), f1 = eval(t + h), f2 = eval(t + 2 * h);
        return {(-3 * f0.alpha + 4 * f1.alpha - f2.alpha) / (2 * h),
                (-3 * f0.sigma + 4 * f1.sigma - f2.sigma) / (2 * h)};
    }
    if (t > 1.0 - h) {
        const AlphaSigma f0 = eval(t), f1 = eval(t - h), f2 = eval(t - 2 * h);
        return {(3 * f0.alpha - 4 * f1.alpha + f2.alpha) / (2 * h),
                (3 * f0.sigma - 4 * f1.sigma + f2.sigma) / (2 * h)};
    }
    const AlphaSigma up = eval(t + h), down = eval(t - h);
    return {(up.alpha - down.alpha) / (2 * h), (up.sigma - down.sigma) / (2 * h)};
}

AlphaSigma alpha_sigma(const Schedule& schedule, double t) { return schedule.at(t); }

AlphaSigma schedule_derivatives(const Schedule& schedule, double t, double h) {
    return schedule.derivatives(t, h);
}

int to_discrete_index(double t) {
    if (std::isnan(t)) fail(ErrorKind::Domain, "time index of NaN");
    const double scaled = std::round(static_cast<double>(kMaxTimeIndex) * t);
    return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(kMaxTimeIndex)));
}

Schedule parse_schedule(std::string_view name) {
    if (name == "linear") return Schedule::linear();
    if (name == "cosine") return Schedule::cosine();
    fail(ErrorKind::Config, "unknown schedule '" + std::string(name) + "' (expected linear or cosine)");
}

}  // namespace hddm
