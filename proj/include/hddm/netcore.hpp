// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hddm/schedule.hpp"
#include "hddm/types.hpp"

namespace hddm {

// Prediction target of a network. Classifier is used by the router.
enum class Objective : uint8_t { Epsilon = 0, Velocity = 1, Classifier = 2 };

const char* objective_name(Objective objective) noexcept;
Objective parse_objective(std::string_view name);

struct Architecture {
    int layers = 2;      // L, number of modulated residual blocks
    int width = 32;      // d, residual stream width
    int data_dim = 2;    // input dimension
    int cond_count = 0;  // condition ids 0..cond_count-1; row cond_count is the null embedding
    int out_dim = 2;     // data_dim for experts, K for the router

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Slots of the six modulation vectors of one block, in storage order.
enum ModSlot : int { kScaleMsa = 0, kShiftMsa = 1, kGateMsa = 2, kScaleMlp = 3, kShiftMlp = 4, kGateMlp = 5 };

struct TensorSpec {
    std::string name;
    std::vector<uint32_t> dims;
    size_t offset = 0;
    size_t size = 0;
};

// Named views into one flat parameter buffer.
class ParamLayout {
public:
    explicit ParamLayout(const Architecture& arch);

    const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
    size_t total() const noexcept { return total_; }
    const TensorSpec& find(std::string_view name) const;
    const TensorSpec* try_find(std::string_view name) const noexcept;
    // Name of the tensor holding flat index `i`.
    const std::string& owner(size_t i) const;

    // Offsets resolved once at construction for the hot path.
    struct BlockIndex {
        size_t embed, attn_w, attn_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };
    struct Index {
        size_t time_w1, time_b1, time_w2, time_b2, cond_table, input_w, input_b, ada_w, ada_b, head_w, head_b;
        std::vector<BlockIndex> blocks;
    };
    const Index& index() const noexcept { return index_; }

private:
    size_t add(std::string name, std::vector<uint32_t> dims);

    std::vector<TensorSpec> tensors_;
    size_t total_ = 0;
    Index index_{};
};

enum class ModulationVariant { Single, PerBlock };

struct ParameterCount {
    int64_t conditioning = 0;  // modulation path only
    int64_t total = 0;         // whole network
};

// Closed-form counts; the Single variant equals ParamLayout(arch).total().
ParameterCount count_parameters(const Architecture& arch, ModulationVariant variant);

// A denoiser (or router) network with live parameters, EMA shadow copy, and
// Adam moments. The objective tag is fixed at construction.
class ExpertModel {
public:
    ExpertModel(const Architecture& arch, Objective objective, Schedule schedule, uint64_t init_seed);

    const Architecture& arch() const noexcept { return arch_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    Objective objective() const noexcept { return objective_; }
    const Schedule& schedule() const noexcept { return schedule_; }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::span<double> ema() noexcept { return ema_; }
    std::span<const double> ema() const noexcept { return ema_; }

    std::span<double> tensor(std::string_view name, bool use_ema = false);
    std::span<const double> tensor(std::string_view name, bool use_ema = false) const;

    uint64_t step_count = 0;

    // Adam state; not persisted in checkpoints.
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    uint64_t adam_steps = 0;

    // Re-derive every tensor from `seed` with the default initialization.
    void initialize(uint64_t seed);
    // Initialize one tensor with N(0, std).
    void initialize_normal(std::string_view name, uint64_t seed, double std);
    void reset_optimizer();
    void sync_ema() { ema_ = params_; }

private:
    Architecture arch_;
    ParamLayout layout_;
    Objective objective_;
    Schedule schedule_;
    std::vector<double> params_;
    std::vector<double> ema_;
};

// Intermediates of one forward pass, reused across calls to avoid allocation.
struct ForwardCache {
    Vec features, a1, z1, temb, tcond, s, mod, h0, out;
    struct Block {
        Vec h_in, n1, u1, pre_a, f1, h1, n2, u2, pre_p, q, f2, h_out;
        double rstd1 = 0.0, rstd2 = 0.0;
    };
    std::vector<Block> blocks;
    Vec x;
    int cond_row = 0;
};

// Prediction for one input. `cond` empty or equal to cond_count selects the
// null embedding.
Vec forward(const ExpertModel& model, ConstSpan x_t, double t, std::optional<int> cond, bool use_ema = false);

// Forward that keeps intermediates; returns a view of cache.out.
ConstSpan forward_cached(const ExpertModel& model, ConstSpan params, ConstSpan x_t, double t,
                         std::optional<int> cond, ForwardCache& cache);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
void backward_accumulate(const ExpertModel& model, ConstSpan params, const ForwardCache& cache,
                         ConstSpan dout, MutSpan grad);

// Per-parameter gradient buffers matching the model shape.
struct GradientTape {
    explicit GradientTape(const ParamLayout& layout) : layout(&layout), grad(layout.total(), 0.0) {}

    void zero();
    double norm() const;
    // Throws Numeric error naming the first non-finite parameter.
    void check_finite() const;
    std::span<const double> tensor(std::string_view name) const;

    const ParamLayout* layout;
    std::vector<double> grad;
};

enum class LossKind { MeanSquared, CrossEntropy, Zero, ParameterL2 };

struct BatchItem {
    Vec x;
    double t = 0.0;
    std::optional<int> cond;
    Vec target;     // MeanSquared
    int label = -1; // CrossEntropy
};

struct BackwardResult {
    GradientTape tape;
    double loss = 0.0;
};

// Batch-mean loss and its gradient with respect to the live parameters.
BackwardResult backward(const ExpertModel& model, std::span<const BatchItem> batch, LossKind loss);

// Mean-per-element squared error; writes 2(pred-target)/dim into `grad`.
double mse_loss(ConstSpan prediction, ConstSpan target, MutSpan grad);
// Softmax cross-entropy of logits against `label`; writes softmax - onehot into `grad`.
double cross_entropy_loss(ConstSpan logits, int label, MutSpan grad);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // <= 0 disables clipping
    double weight_decay = 0.0;
};

struct StepReport {
    double grad_norm = 0.0;     // before clipping
    double applied_norm = 0.0;  // after clipping
};

// Clips `tape` in place to clip_norm, then applies one Adam(W) update.
StepReport adam_step(ExpertModel& model, GradientTape& tape, double lr, const AdamConfig& cfg);

// ema <- decay * ema + (1 - decay) * params
void ema_update(ExpertModel& model, double decay);

}  // namespace hddm
