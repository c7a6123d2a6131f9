// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/objectives.hpp"

#include <cmath>
#include <sstream>

#include "hddm/error.hpp"
#include "hddm/io.hpp"

namespace hddm {

namespace {

// Coefficients this small are zero up to rounding (cos(pi/2) is 6e-17).
constexpr double kVanishing = 1e-12;

}  // namespace

NoisySample make_noisy_with(ConstSpan x0, ConstSpan eps, double t, Objective objective, const Schedule& schedule) {
    if (x0.size() != eps.size()) fail(ErrorKind::Shape, "x0 and eps differ in size");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorKind::Domain, "noise level outside [0, 1]");
    NoisySample s;
    s.x0.assign(x0.begin(), x0.end());
    s.eps.assign(eps.begin(), eps.end());
    s.t = t;
    s.x_t.resize(x0.size());
    s.target.resize(x0.size());
    if (objective == Objective::Epsilon) {
        const AlphaSigma as = schedule.at(t);
        for (size_t i = 0; i < x0.size(); ++i) {
            s.x_t[i] = as.alpha * x0[i] + as.sigma * eps[i];
            s.target[i] = eps[i];
        }
    } else if (objective == Objective::Velocity) {
        for (size_t i = 0; i < x0.size(); ++i) {
            s.x_t[i] = (1.0 - t) * x0[i] + t * eps[i];
            s.target[i] = eps[i] - x0[i];
        }
    } else {
        fail(ErrorKind::Spec, "classifier objective has no regression target");
    }
    return s;
}

NoisySample make_noisy(ConstSpan x0, double t, Objective objective, const Schedule& schedule, Rng& rng) {
    Vec eps(x0.size());
    for (double& e : eps) e = rng.normal();
    return make_noisy_with(x0, eps, t, objective, schedule);
}

LossAndGrad loss_and_grad_target(ConstSpan prediction, const NoisySample& sample) {
    LossAndGrad out;
    out.dloss_dpred.resize(sample.target.size());
    out.loss = mse_loss(prediction, sample.target, out.dloss_dpred);
    return out;
}

Vec path_velocity(ConstSpan x0, ConstSpan eps, double t, const Schedule& schedule) {
    const AlphaSigma d = schedule.derivatives(t);
    Vec v(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) v[i] = d.alpha * x0[i] + d.sigma * eps[i];
    return v;
}

Vec v_parameterization_target(ConstSpan x0, ConstSpan eps, double t, const Schedule& schedule) {
    const AlphaSigma as = schedule.at(t);
    Vec v(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) v[i] = as.alpha * eps[i] - as.sigma * x0[i];
    return v;
}

WeightingProfile weighting_profile(const Schedule& schedule, const std::vector<double>& grid) {
    WeightingProfile p;
    for (double t : grid) {
        const AlphaSigma as = schedule.at(t);
        if (as.sigma <= kVanishing || as.alpha <= kVanishing)
            fail(ErrorKind::Domain, "weighting undefined at t=" + format_double(t) + " (alpha or sigma is zero)");
        const double a2 = as.alpha * as.alpha, s2 = as.sigma * as.sigma;
        p.t.push_back(t);
        p.w_eps.push_back(a2 / s2);
        p.w_v.push_back(1.0 / s2);
        p.ratio.push_back(1.0 / a2);
    }
    return p;
}

void write_weighting_csv(const WeightingProfile& profile, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "t,w_eps,w_v,ratio\n";
    for (size_t i = 0; i < profile.t.size(); ++i)
        out << format_double(profile.t[i]) << ',' << format_double(profile.w_eps[i]) << ','
            << format_double(profile.w_v[i]) << ',' << format_double(profile.ratio[i]) << '\n';
    atomic_write(path, out.str());
}

WeightingCheck empirical_weighting_check(const Schedule& schedule, double t, int batch, int dim, Rng& rng) {
    const AlphaSigma as = schedule.at(t);
    if (as.alpha <= kVanishing || as.sigma <= kVanishing) fail(ErrorKind::Domain, "weighting check needs an interior time");
    WeightingCheck check;
    check.eps_expected = as.alpha * as.alpha / (as.sigma * as.sigma);
    check.v_checked = std::abs(as.alpha * as.alpha + as.sigma * as.sigma - 1.0) < 1e-12;
    check.v_expected = 1.0 / (as.sigma * as.sigma);

    const size_t n = static_cast<size_t>(dim);
    Vec x0(n), eps(n), x_t(n), pred(n), x0_hat(n);
    for (int b = 0; b < batch; ++b) {
        for (size_t i = 0; i < n; ++i) {
            x0[i] = 2.0 * rng.normal();
            eps[i] = rng.normal();
            x_t[i] = as.alpha * x0[i] + as.sigma * eps[i];
        }
        // eps-form: arbitrary eps prediction, recover x0 by inverting the forward map.
        double num = 0.0, den = 0.0;
        for (size_t i = 0; i < n; ++i) {
            pred[i] = eps[i] + rng.normal();
            x0_hat[i] = (x_t[i] - as.sigma * pred[i]) / as.alpha;
            num += (pred[i] - eps[i]) * (pred[i] - eps[i]);
            den += (x0_hat[i] - x0[i]) * (x0_hat[i] - x0[i]);
        }
        const double eps_ratio = num / den;
        check.eps_ratio += eps_ratio / batch;
        check.eps_max_rel_error = std::max(check.eps_max_rel_error, std::abs(eps_ratio / check.eps_expected - 1.0));

        if (!check.v_checked) continue;
        num = den = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double v = as.alpha * eps[i] - as.sigma * x0[i];
            pred[i] = v + rng.normal();
            x0_hat[i] = as.alpha * x_t[i] - as.sigma * pred[i];
            num += (pred[i] - v) * (pred[i] - v);
            den += (x0_hat[i] - x0[i]) * (x0_hat[i] - x0[i]);
        }
        const double v_ratio = num / den;
        check.v_ratio += v_ratio / batch;
        check.v_max_rel_error = std::max(check.v_max_rel_error, std::abs(v_ratio / check.v_expected - 1.0));
    }
    return check;
}

}  // namespace hddm
