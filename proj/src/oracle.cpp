// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hddm/error.hpp"
#include "hddm/io.hpp"

namespace hddm {

namespace {

double marginal_variance(const AlphaSigma& as, double s2) {
    const double v = as.alpha * as.alpha * s2 + as.sigma * as.sigma;
    if (!(v > 0.0)) fail(ErrorKind::Domain, "point-mass component has zero marginal variance at t=0");
    return v;
}

}  // namespace

MixtureOracle::MixtureOracle(MixtureSpec spec, Schedule schedule)
    : spec_(std::move(spec)), schedule_(std::move(schedule)) {
    if (spec_.weights.empty()) fail(ErrorKind::Spec, "oracle mixture has no components");
    if (spec_.means.size() != spec_.weights.size() || spec_.variances.size() != spec_.weights.size())
        fail(ErrorKind::Spec, "oracle mixture shapes disagree");
    double total = 0.0;
    for (size_t k = 0; k < spec_.components(); ++k) {
        total += spec_.weights[k];
        if (spec_.means[k].size() != dim() || spec_.variances[k].size() != dim())
            fail(ErrorKind::Spec, "oracle component dimension mismatch");
        for (double v : spec_.variances[k])
            if (!(v >= 0.0)) fail(ErrorKind::Spec, "oracle variance must be nonnegative");
    }
    if (std::abs(total - 1.0) > 1e-12) fail(ErrorKind::Spec, "oracle weights sum to " + format_double(total));
}

void MixtureOracle::check_time(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorKind::Domain, "oracle time outside [0, 1]: " + format_double(t));
}

void MixtureOracle::check_point(ConstSpan x_t) const {
    if (x_t.size() != dim()) fail(ErrorKind::Shape, "oracle input has the wrong dimension");
}

Vec MixtureOracle::log_posterior(ConstSpan x_t, double t) const {
    check_point(x_t);
    const size_t K = components();
    Vec logp(K);
    if (t == 1.0) {
        for (size_t k = 0; k < K; ++k) logp[k] = std::log(spec_.weights[k]);
        return logp;
    }
    if (!(t >= 0.0 && t < 1.0)) fail(ErrorKind::Domain, "posterior time outside [0, 1]");
    const AlphaSigma as = schedule_.at(t);
    const double s2 = as.sigma * as.sigma, a2 = as.alpha * as.alpha;
    for (size_t k = 0; k < K; ++k) {
        double lp = std::log(spec_.weights[k]);
        for (size_t j = 0; j < dim(); ++j) {
            const double var = a2 * spec_.variances[k][j] + s2;
            if (!(var > 0.0)) fail(ErrorKind::Domain, "degenerate marginal variance at t=0 with point-mass data");
            const double r = x_t[j] - as.alpha * spec_.means[k][j];
            lp += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
        }
        logp[k] = lp;
    }
    const double mx = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (double l : logp) z += std::exp(l - mx);
    const double log_z = mx + std::log(z);
    for (double& l : logp) l -= log_z;
    return logp;
}

Vec MixtureOracle::posterior(ConstSpan x_t, double t) const {
    Vec p = log_posterior(x_t, t);
    for (double& v : p) v = std::exp(v);
    return p;
}

Vec MixtureOracle::expected_x0(int k, ConstSpan x_t, double t) const {
    check_time(t);
    check_point(x_t);
    const auto& mu = spec_.means.at(static_cast<size_t>(k));
    const auto& var = spec_.variances.at(static_cast<size_t>(k));
    const AlphaSigma as = schedule_.at(t);
    Vec out(dim());
    for (size_t j = 0; j < dim(); ++j) {
        const double v = marginal_variance(as, var[j]);
        out[j] = mu[j] + as.alpha * var[j] / v * (x_t[j] - as.alpha * mu[j]);
    }
    return out;
}

Vec MixtureOracle::optimal_eps_component(int k, ConstSpan x_t, double t) const {
    check_time(t);
    check_point(x_t);
    const auto& mu = spec_.means.at(static_cast<size_t>(k));
    const auto& var = spec_.variances.at(static_cast<size_t>(k));
    const AlphaSigma as = schedule_.at(t);
    Vec out(dim());
    for (size_t j = 0; j < dim(); ++j) {
        const double v = marginal_variance(as, var[j]);
        out[j] = as.sigma / v * (x_t[j] - as.alpha * mu[j]);
    }
    return out;
}

Vec MixtureOracle::optimal_velocity_component(int k, ConstSpan x_t, double t) const {
    const Vec x0 = expected_x0(k, x_t, t);
    const Vec eps = optimal_eps_component(k, x_t, t);
    const AlphaSigma d = schedule_.derivatives(t);
    Vec out(dim());
    for (size_t j = 0; j < dim(); ++j) out[j] = d.alpha * x0[j] + d.sigma * eps[j];
    return out;
}

Vec MixtureOracle::optimal_eps_marginal(ConstSpan x_t, double t) const {
    check_time(t);
    const Vec p = posterior(x_t, t);
    Vec out(dim(), 0.0);
    for (size_t k = 0; k < components(); ++k) {
        const Vec e = optimal_eps_component(static_cast<int>(k), x_t, t);
        for (size_t j = 0; j < dim(); ++j) out[j] += p[k] * e[j];
    }
    return out;
}

Vec MixtureOracle::optimal_velocity_marginal(ConstSpan x_t, double t) const {
    check_time(t);
    const Vec p = posterior(x_t, t);
    Vec x0(dim(), 0.0), eps(dim(), 0.0);
    for (size_t k = 0; k < components(); ++k) {
        const Vec xk = expected_x0(static_cast<int>(k), x_t, t);
        const Vec ek = optimal_eps_component(static_cast<int>(k), x_t, t);
        for (size_t j = 0; j < dim(); ++j) {
            x0[j] += p[k] * xk[j];
            eps[j] += p[k] * ek[j];
        }
    }
    const AlphaSigma d = schedule_.derivatives(t);
    Vec out(dim());
    for (size_t j = 0; j < dim(); ++j) out[j] = d.alpha * x0[j] + d.sigma * eps[j];
    return out;
}

Vec MixtureOracle::data_mean() const {
    Vec m(dim(), 0.0);
    for (size_t k = 0; k < components(); ++k)
        for (size_t j = 0; j < dim(); ++j) m[j] += spec_.weights[k] * spec_.means[k][j];
    return m;
}

Vec MixtureOracle::data_covariance() const {
    const size_t d = dim();
    const Vec m = data_mean();
    Vec cov(d * d, 0.0);
    for (size_t k = 0; k < components(); ++k)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) {
                const double second = (i == j ? spec_.variances[k][i] : 0.0) + spec_.means[k][i] * spec_.means[k][j];
                cov[i * d + j] += spec_.weights[k] * second;
            }
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j) cov[i * d + j] -= m[i] * m[j];
    return cov;
}

}  // namespace hddm
