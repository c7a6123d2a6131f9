// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace hddm {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

inline double squared_norm(ConstSpan v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double norm(ConstSpan v) { return std::sqrt(squared_norm(v)); }

inline bool all_finite(ConstSpan v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace hddm
