// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hddm {

// Serialized as a one-byte tag in checkpoint headers.
enum class ScheduleKind : uint8_t { Linear = 0, Cosine = 1, VpGeneric = 2 };

struct AlphaSigma {
    double alpha;
    double sigma;
};

inline constexpr double kDerivativeStep = 1e-4;
inline constexpr int kMaxTimeIndex = 999;

// Forward-process coefficients x_t = alpha_t * x0 + sigma_t * eps over t in [0, 1].
// t = 0 is clean data, t = 1 is pure noise.
class Schedule {
public:
    static Schedule linear();
    static Schedule cosine();
    // Piecewise-linear table; knots must start at t=0 with (1, 0), end at t=1,
    // and keep alpha nonincreasing / sigma nondecreasing.
    static Schedule tabulated(std::vector<double> knots, std::vector<double> alphas,
                              std::vector<double> sigmas);

    ScheduleKind kind() const noexcept { return kind_; }
    std::string name() const;

    AlphaSigma at(double t) const;
    AlphaSigma derivatives(double t, double h = kDerivativeStep) const;

    const std::vector<double>& knots() const noexcept { return knots_; }
    const std::vector<double>& alphas() const noexcept { return alphas_; }
    const std::vector<double>& sigmas() const noexcept { return sigmas_; }

    friend bool operator==(const Schedule&, const Schedule&) = default;

private:
    explicit Schedule(ScheduleKind kind) : kind_(kind) {}

    AlphaSigma eval(double t) const;

    ScheduleKind kind_;
    std::vector<double> knots_;
    std::vector<double> alphas_;
    std::vector<double> sigmas_;
};

AlphaSigma alpha_sigma(const Schedule& schedule, double t);
AlphaSigma schedule_derivatives(const Schedule& schedule, double t, double h = kDerivativeStep);

// round(999 t), half away from zero, clamped to [0, 999].
int to_discrete_index(double t);

// "linear" / "cosine"; throws Config error for anything else.
Schedule parse_schedule(std::string_view name);

}  // namespace hddm
