// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hddm/conversion.hpp"
#include "hddm/netcore.hpp"
#include "hddm/oracle.hpp"
#include "hddm/schedule.hpp"
#include "hddm/types.hpp"

namespace hddm {

// Anything that predicts in an expert's native parameterization.
class Expert {
public:
    virtual ~Expert() = default;
    virtual Objective objective() const = 0;
    virtual const Schedule& schedule() const = 0;
    virtual size_t dim() const = 0;
    // Raw prediction: epsilon for Epsilon experts, velocity for Velocity experts.
    virtual Vec predict(ConstSpan x_t, double t, std::optional<int> cond) const = 0;
};

class NetworkExpert final : public Expert {
public:
    explicit NetworkExpert(std::shared_ptr<const ExpertModel> model, bool use_ema = true);
    Objective objective() const override { return model_->objective(); }
    const Schedule& schedule() const override { return model_->schedule(); }
    size_t dim() const override { return static_cast<size_t>(model_->arch().data_dim); }
    Vec predict(ConstSpan x_t, double t, std::optional<int> cond) const override;
    const ExpertModel& model() const { return *model_; }

private:
    std::shared_ptr<const ExpertModel> model_;
    bool use_ema_;
};

// Closed-form optimal predictor of one mixture component (or of the whole
// mixture when component < 0), ignoring the condition.
class OracleExpert final : public Expert {
public:
    OracleExpert(std::shared_ptr<const MixtureOracle> oracle, int component, Objective objective);
    Objective objective() const override { return objective_; }
    const Schedule& schedule() const override { return oracle_->schedule(); }
    size_t dim() const override { return oracle_->dim(); }
    Vec predict(ConstSpan x_t, double t, std::optional<int> cond) const override;

private:
    std::shared_ptr<const MixtureOracle> oracle_;
    int component_;
    Objective objective_;
};

// Always predicts zero; an Euler fixed point.
class ZeroExpert final : public Expert {
public:
    ZeroExpert(size_t dim, Objective objective = Objective::Velocity, Schedule schedule = Schedule::linear())
        : dim_(dim), objective_(objective), schedule_(std::move(schedule)) {}
    Objective objective() const override { return objective_; }
    const Schedule& schedule() const override { return schedule_; }
    size_t dim() const override { return dim_; }
    Vec predict(ConstSpan, double, std::optional<int>) const override { return Vec(dim_, 0.0); }

private:
    size_t dim_;
    Objective objective_;
    Schedule schedule_;
};

class Router {
public:
    virtual ~Router() = default;
    virtual size_t size() const = 0;
    virtual Vec logits(ConstSpan x_t, double t) const = 0;
};

class NetworkRouter final : public Router {
public:
    explicit NetworkRouter(std::shared_ptr<const ExpertModel> model, bool use_ema = true, double logit_scale = 1.0);
    size_t size() const override { return static_cast<size_t>(model_->arch().out_dim); }
    Vec logits(ConstSpan x_t, double t) const override;

private:
    std::shared_ptr<const ExpertModel> model_;
    bool use_ema_;
    double logit_scale_;
};

// Exact posterior p_t(k | x_t) as log-probabilities.
class OracleRouter final : public Router {
public:
    explicit OracleRouter(std::shared_ptr<const MixtureOracle> oracle, double logit_scale = 1.0)
        : oracle_(std::move(oracle)), logit_scale_(logit_scale) {}
    size_t size() const override { return oracle_->components(); }
    Vec logits(ConstSpan x_t, double t) const override;

private:
    std::shared_ptr<const MixtureOracle> oracle_;
    double logit_scale_;
};

// Fixed logits, independent of the input (uniform by default).
class ConstantRouter final : public Router {
public:
    explicit ConstantRouter(size_t k) : logits_(k, 0.0) {}
    explicit ConstantRouter(Vec logits) : logits_(std::move(logits)) {}
    size_t size() const override { return logits_.size(); }
    Vec logits(ConstSpan, double) const override { return logits_; }

private:
    Vec logits_;
};

Vec softmax(ConstSpan logits);

struct Selection {
    enum class Kind { Top1, TopK, Full, Threshold };
    Kind kind = Kind::Top1;
    int k = 1;              // TopK
    double tau = 0.5;       // Threshold, in native FM time
    bool reversed = false;  // Threshold: epsilon experts on high-noise steps instead

    static Selection top1() { return {}; }
    static Selection top_k(int k) { return {Kind::TopK, k, 0.5, false}; }
    static Selection full() { return {Kind::Full, 1, 0.5, false}; }
    static Selection threshold(double tau, bool reversed = false) { return {Kind::Threshold, 1, tau, reversed}; }
};

// "top1", "top<k>", "full", "threshold:<tau>", "threshold:<tau>:reversed".
Selection parse_selection(std::string_view text);
std::string selection_name(const Selection& s);

struct SamplerConfig {
    int steps = 50;
    double cfg_scale = 7.5;
    Selection selection;
    uint64_t seed = 0;
    int batch = 1;
    ConversionConfig conversion;
};

void validate(const SamplerConfig& cfg, size_t experts);

using ExpertSet = std::vector<std::shared_ptr<const Expert>>;

// Router probabilities after masking by the selection strategy, renormalized.
Vec selection_weights(const Router& router, const ExpertSet& experts, ConstSpan x_t, double t, const Selection& sel);

// Convex combination of the experts' velocities under fixed weights; epsilon
// experts are converted first. Experts with zero weight are not evaluated.
Vec fuse_with_weights(const ExpertSet& experts, ConstSpan weights, ConstSpan x_t, double t, std::optional<int> cond,
                      const ConversionConfig& conversion, ConversionStats* stats = nullptr);

Vec fused_velocity(ConstSpan x_t, double t, const ExpertSet& experts, const Router& router, std::optional<int> cond,
                   const SamplerConfig& cfg, ConversionStats* stats = nullptr);

Vec cfg_combine(ConstSpan v_cond, ConstSpan v_uncond, double scale);

struct Trajectory {
    size_t dim = 0;
    size_t experts = 0;
    std::optional<int> cond;
    Vec states;                         // (steps + 1) x dim
    Vec times;                          // time at the start of each step
    Vec weights;                        // steps x K
    std::vector<std::vector<int>> used; // experts with nonzero weight, per step
    Vec velocity_norms;                 // per step, guided velocity
    Vec clamp_rates;                    // per step

    size_t steps() const { return times.size(); }
    ConstSpan state(size_t i) const { return ConstSpan(states).subspan(i * dim, dim); }
    ConstSpan terminal() const { return state(steps()); }
    ConstSpan step_weights(size_t i) const { return ConstSpan(weights).subspan(i * experts, experts); }
};

// Euler integration from t = 1 to t = 0. The initial noise comes from the
// stream of (cfg.seed, index), so trajectories are independent of batching.
Trajectory sample(const ExpertSet& experts, const Router& router, const SamplerConfig& cfg, std::optional<int> cond,
                  uint64_t index = 0);

// One trajectory per entry of `conds`, trajectory i using stream index i.
std::vector<Trajectory> sample_batch(const ExpertSet& experts, const Router& router, const SamplerConfig& cfg,
                                     const std::vector<std::optional<int>>& conds);

Vec terminal_points(const std::vector<Trajectory>& trajectories);

void write_trajectory_audit_csv(const std::vector<Trajectory>& trajectories, const SamplerConfig& cfg,
                                const std::filesystem::path& path);
void write_samples_csv(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);

}  // namespace hddm
