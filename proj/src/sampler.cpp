// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hddm/error.hpp"
#include "hddm/io.hpp"
#include "hddm/rng.hpp"
#include "hddm/training.hpp"

namespace hddm {

NetworkExpert::NetworkExpert(std::shared_ptr<const ExpertModel> model, bool use_ema)
    : model_(std::move(model)), use_ema_(use_ema) {
    if (!model_) fail(ErrorKind::Usage, "null expert model");
    if (model_->objective() == Objective::Classifier) fail(ErrorKind::Type, "a router checkpoint is not an expert");
}

Vec NetworkExpert::predict(ConstSpan x_t, double t, std::optional<int> cond) const {
    return forward(*model_, x_t, t, cond, use_ema_);
}

OracleExpert::OracleExpert(std::shared_ptr<const MixtureOracle> oracle, int component, Objective objective)
    : oracle_(std::move(oracle)), component_(component), objective_(objective) {
    if (objective_ == Objective::Classifier) fail(ErrorKind::Type, "oracle experts predict epsilon or velocity");
    if (component_ >= static_cast<int>(oracle_->components())) fail(ErrorKind::Spec, "oracle component out of range");
}

Vec OracleExpert::predict(ConstSpan x_t, double t, std::optional<int>) const {
    if (objective_ == Objective::Epsilon)
        return component_ < 0 ? oracle_->optimal_eps_marginal(x_t, t)
                              : oracle_->optimal_eps_component(component_, x_t, t);
    return component_ < 0 ? oracle_->optimal_velocity_marginal(x_t, t)
                          : oracle_->optimal_velocity_component(component_, x_t, t);
}

NetworkRouter::NetworkRouter(std::shared_ptr<const ExpertModel> model, bool use_ema, double logit_scale)
    : model_(std::move(model)), use_ema_(use_ema), logit_scale_(logit_scale) {
    if (!model_) fail(ErrorKind::Usage, "null router model");
    if (model_->objective() != Objective::Classifier) fail(ErrorKind::Type, "an expert checkpoint is not a router");
}

Vec NetworkRouter::logits(ConstSpan x_t, double t) const {
    Vec l = forward(*model_, x_t, t, std::nullopt, use_ema_);
    for (double& v : l) v *= logit_scale_;
    return l;
}

Vec OracleRouter::logits(ConstSpan x_t, double t) const {
    Vec l = oracle_->log_posterior(x_t, t);
    for (double& v : l) v *= logit_scale_;
    return l;
}

Vec softmax(ConstSpan logits) {
    if (logits.empty()) fail(ErrorKind::Shape, "softmax of an empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
    for (double& v : p) v /= z;
    return p;
}

Selection parse_selection(std::string_view text) {
    const std::string s(text);
    if (s == "top1") return Selection::top1();
    if (s == "full") return Selection::full();
    try {
        if (s.starts_with("top")) return Selection::top_k(std::stoi(s.substr(3)));
        if (s.starts_with("threshold:")) {
            std::string rest = s.substr(10);
            bool reversed = false;
            if (rest.ends_with(":reversed")) {
                reversed = true;
                rest.resize(rest.size() - 9);
            }
            return Selection::threshold(std::stod(rest), reversed);
        }
    } catch (const std::logic_error&) {
    }
    fail(ErrorKind::Config, "unknown selection '" + s + "' (top1, top<k>, full, threshold:<tau>[:reversed])");
}

std::string selection_name(const Selection& s) {
    switch (s.kind) {
        case Selection::Kind::Top1: return "top1";
        case Selection::Kind::TopK: return "top" + std::to_string(s.k);
        case Selection::Kind::Full: return "full";
        case Selection::Kind::Threshold:
            return "threshold:" + format_double(s.tau) + (s.reversed ? ":reversed" : "");
    }
    return "?";
}

void validate(const SamplerConfig& cfg, size_t experts) {
    if (cfg.steps < 1) fail(ErrorKind::Config, "sampler steps must be at least 1");
    if (!(cfg.cfg_scale >= 0.0)) fail(ErrorKind::Config, "cfg_scale must be nonnegative");
    if (cfg.batch < 1) fail(ErrorKind::Config, "sampler batch must be at least 1");
    if (cfg.selection.kind == Selection::Kind::TopK &&
        (cfg.selection.k < 1 || static_cast<size_t>(cfg.selection.k) > experts))
        fail(ErrorKind::Config, "top-k needs 1 <= k <= " + std::to_string(experts));
    if (cfg.selection.kind == Selection::Kind::Threshold && !(cfg.selection.tau >= 0.0 && cfg.selection.tau <= 1.0))
        fail(ErrorKind::Config, "threshold tau must lie in [0, 1]");
    validate(cfg.conversion);
}

Vec selection_weights(const Router& router, const ExpertSet& experts, ConstSpan x_t, double t, const Selection& sel) {
    const size_t K = experts.size();
    if (router.size() != K)
        fail(ErrorKind::Shape, "router covers " + std::to_string(router.size()) + " experts, " + std::to_string(K) +
                                   " given");
    const Vec p = softmax(router.logits(x_t, t));
    std::vector<char> keep(K, 0);
    switch (sel.kind) {
        case Selection::Kind::Full: std::fill(keep.begin(), keep.end(), 1); break;
        case Selection::Kind::Top1:
        case Selection::Kind::TopK: {
            const size_t k = sel.kind == Selection::Kind::Top1 ? 1 : static_cast<size_t>(sel.k);
            if (k < 1 || k > K) fail(ErrorKind::Selection, "top-k with k outside [1, K]");
            std::vector<size_t> order(K);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] > p[b]; });
            for (size_t i = 0; i < k; ++i) keep[order[i]] = 1;
            break;
        }
        case Selection::Kind::Threshold: {
            const bool high_noise = t > sel.tau;
            const Objective wanted = (high_noise != sel.reversed) ? Objective::Velocity : Objective::Epsilon;
            for (size_t k = 0; k < K; ++k) keep[k] = experts[k]->objective() == wanted;
            break;
        }
    }
    double total = 0.0;
    for (size_t k = 0; k < K; ++k)
        if (keep[k]) total += p[k];
    if (!(total > 0.0)) fail(ErrorKind::Selection, "all router weights are zero after masking at t=" + format_double(t));
    Vec w(K, 0.0);
    for (size_t k = 0; k < K; ++k)
        if (keep[k]) w[k] = p[k] / total;
    return w;
}

Vec fuse_with_weights(const ExpertSet& experts, ConstSpan weights, ConstSpan x_t, double t, std::optional<int> cond,
                      const ConversionConfig& conversion, ConversionStats* stats) {
    if (weights.size() != experts.size()) fail(ErrorKind::Shape, "one weight per expert required");
    Vec u(x_t.size(), 0.0);
    for (size_t k = 0; k < experts.size(); ++k) {
        if (weights[k] == 0.0) continue;
        const Expert& e = *experts[k];
        if (e.dim() != x_t.size()) fail(ErrorKind::Shape, "expert " + std::to_string(k) + " has another data dimension");
        Vec v = e.predict(x_t, t, cond);
        if (e.objective() == Objective::Epsilon) v = eps_to_velocity(x_t, v, t, e.schedule(), conversion, stats);
        for (size_t j = 0; j < u.size(); ++j) u[j] += weights[k] * v[j];
    }
    return u;
}

Vec cfg_combine(ConstSpan v_cond, ConstSpan v_uncond, double scale) {
    if (v_cond.size() != v_uncond.size()) fail(ErrorKind::Shape, "guidance inputs differ in size");
    Vec out(v_cond.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = v_uncond[i] + scale * (v_cond[i] - v_uncond[i]);
    return out;
}

namespace {

// Guidance after fusion; the unconditional pass reuses the router weights.
Vec guided_velocity(const ExpertSet& experts, ConstSpan w, ConstSpan x_t, double t, std::optional<int> cond,
                    const SamplerConfig& cfg, ConversionStats* stats) {
    Vec u = fuse_with_weights(experts, w, x_t, t, cond, cfg.conversion, stats);
    if (cond && cfg.cfg_scale != 1.0) {
        const Vec uu = fuse_with_weights(experts, w, x_t, t, std::nullopt, cfg.conversion, stats);
        u = cfg_combine(u, uu, cfg.cfg_scale);
    }
    return u;
}

}  // namespace

Vec fused_velocity(ConstSpan x_t, double t, const ExpertSet& experts, const Router& router, std::optional<int> cond,
                   const SamplerConfig& cfg, ConversionStats* stats) {
    if (experts.empty()) fail(ErrorKind::Usage, "at least one expert is required");
    const Vec w = selection_weights(router, experts, x_t, t, cfg.selection);
    return guided_velocity(experts, w, x_t, t, cond, cfg, stats);
}

Trajectory sample(const ExpertSet& experts, const Router& router, const SamplerConfig& cfg, std::optional<int> cond,
                  uint64_t index) {
    if (experts.empty()) fail(ErrorKind::Usage, "at least one expert is required");
    validate(cfg, experts.size());
    const size_t dim = experts.front()->dim();
    Trajectory tr;
    tr.dim = dim;
    tr.experts = experts.size();
    tr.cond = cond;
    tr.states.reserve((static_cast<size_t>(cfg.steps) + 1) * dim);
    Rng rng = Rng(cfg.seed).split("trajectory").split(index);
    Vec x(dim);
    for (double& v : x) v = rng.normal();
    tr.states.insert(tr.states.end(), x.begin(), x.end());

    const double dt = 1.0 / cfg.steps;
    for (int i = 0; i < cfg.steps; ++i) {
        const double t = 1.0 - static_cast<double>(i) / cfg.steps;
        ConversionStats stats;
        const Vec w = selection_weights(router, experts, x, t, cfg.selection);
        const Vec u = guided_velocity(experts, w, x, t, cond, cfg, &stats);
        for (size_t j = 0; j < dim; ++j) x[j] -= dt * u[j];
        if (!all_finite(x)) {
            std::ostringstream msg;
            msg << "non-finite sampler state at step " << i << " (t=" << format_double(t) << ", experts";
            for (size_t k = 0; k < w.size(); ++k)
                if (w[k] > 0.0) msg << " " << k << ":" << format_double(w[k]);
            msg << ", clamp rate " << format_double(stats.clamp_rate()) << ")";
            fail(ErrorKind::Numeric, msg.str());
        }
        tr.times.push_back(t);
        tr.weights.insert(tr.weights.end(), w.begin(), w.end());
        std::vector<int> used;
        for (size_t k = 0; k < w.size(); ++k)
            if (w[k] > 0.0) used.push_back(static_cast<int>(k));
        tr.used.push_back(std::move(used));
        tr.velocity_norms.push_back(norm(u));
        tr.clamp_rates.push_back(stats.clamp_rate());
        tr.states.insert(tr.states.end(), x.begin(), x.end());
    }
    return tr;
}

std::vector<Trajectory> sample_batch(const ExpertSet& experts, const Router& router, const SamplerConfig& cfg,
                                     const std::vector<std::optional<int>>& conds) {
    std::vector<Trajectory> out(conds.size());
    parallel_for(conds.size(), [&](size_t i) { out[i] = sample(experts, router, cfg, conds[i], i); });
    return out;
}

Vec terminal_points(const std::vector<Trajectory>& trajectories) {
    Vec pts;
    for (const Trajectory& tr : trajectories) {
        const ConstSpan x = tr.terminal();
        pts.insert(pts.end(), x.begin(), x.end());
    }
    return pts;
}

void write_trajectory_audit_csv(const std::vector<Trajectory>& trajectories, const SamplerConfig& cfg,
                                const std::filesystem::path& path) {
    std::ostringstream s;
    s << "trajectory,step,t,experts,weights,velocity_norm,clamp_rate,selection,guidance\n";
    const std::string sel = selection_name(cfg.selection);
    for (size_t n = 0; n < trajectories.size(); ++n) {
        const Trajectory& tr = trajectories[n];
        const std::string guidance = tr.cond && cfg.cfg_scale != 1.0 ? "post_fusion" : "none";
        for (size_t i = 0; i < tr.steps(); ++i) {
            std::string ids, ws;
            for (size_t j = 0; j < tr.used[i].size(); ++j) {
                const int k = tr.used[i][j];
                ids += (j ? ";" : "") + std::to_string(k);
                ws += (j ? ";" : "") + format_double(tr.step_weights(i)[static_cast<size_t>(k)]);
            }
            s << n << "," << i << "," << format_double(tr.times[i]) << "," << ids << "," << ws << ","
              << format_double(tr.velocity_norms[i]) << "," << format_double(tr.clamp_rates[i]) << "," << sel << ","
              << guidance << "\n";
        }
    }
    atomic_write(path, s.str());
}

void write_samples_csv(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
    if (trajectories.empty()) fail(ErrorKind::Usage, "no trajectories to write");
    std::vector<int> labels;
    for (const Trajectory& tr : trajectories) labels.push_back(tr.cond ? *tr.cond : -1);
    write_points_csv(terminal_points(trajectories), static_cast<int>(trajectories.front().dim), labels, path);
}

}  // namespace hddm
