// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

#include "hddm/checkpoint.hpp"
#include "hddm/error.hpp"
#include "hddm/io.hpp"
#include "hddm/objectives.hpp"
#include "hddm/rng.hpp"

namespace hddm {

namespace {

struct Split {
    std::vector<size_t> train;
    std::vector<size_t> holdout;
};

// Seeded holdout split. Shards with a single point train and validate on it.
Split split_indices(size_t n, double fraction, uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng(seed).split("holdout");
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    size_t n_val = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
    if (fraction > 0.0 && n_val == 0) n_val = 1;
    Split s;
    if (n_val >= n) {
        s.train = idx;
        s.holdout = idx;
    } else {
        s.holdout.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    }
    return s;
}

uint64_t init_seed(uint64_t seed) { return hash_combine(seed, hash_name("init")); }

// One noisy regression or classification example.
struct Example {
    Vec x_t;
    double t = 0.0;
    std::optional<int> cond;
    Vec target;
    int label = -1;
};

Example expert_example(const SyntheticDataset& data, size_t i, const TrainConfig& cfg, int cond_count, Rng& rng,
                       bool allow_drop) {
    Example ex;
    ex.t = rng.uniform();
    NoisySample s = make_noisy(data.point(i), ex.t, cfg.objective, cfg.schedule, rng);
    ex.x_t = std::move(s.x_t);
    ex.target = std::move(s.target);
    if (cond_count > 0) {
        const bool drop = allow_drop && rng.uniform() < cfg.cfg_drop_prob;
        if (!drop) ex.cond = data.condition(i);
    }
    return ex;
}

Example router_example(const SyntheticDataset& data, size_t i, int label, const Schedule& schedule, Rng& rng) {
    Example ex;
    ex.t = rng.uniform();
    const AlphaSigma as = schedule.at(ex.t);
    ex.x_t.resize(static_cast<size_t>(data.dim));
    const ConstSpan x0 = data.point(i);
    for (size_t j = 0; j < x0.size(); ++j) ex.x_t[j] = as.alpha * x0[j] + as.sigma * rng.normal();
    ex.label = label;
    return ex;
}

double example_loss(const ExpertModel& model, ConstSpan params, const Example& ex, ForwardCache& cache, Vec& dout) {
    const ConstSpan pred = forward_cached(model, params, ex.x_t, ex.t, ex.cond, cache);
    dout.resize(pred.size());
    if (model.objective() == Objective::Classifier) return cross_entropy_loss(pred, ex.label, dout);
    return mse_loss(pred, ex.target, dout);
}

using ExampleFn = std::function<Example(size_t draw, Rng& rng)>;

// Shared optimization loop for experts and the router.
void optimize(TrainResult& result, const TrainConfig& cfg, size_t train_size, const ExampleFn& make,
              const std::function<double(const ExpertModel&)>& validate_fn) {
    ExpertModel& model = result.model;
    GradientTape tape(model.layout());
    ForwardCache cache;
    Vec dout;
    AdamConfig adam;
    adam.clip_norm = cfg.clip_norm;
    adam.weight_decay = cfg.weight_decay;
    const Rng root = Rng(cfg.seed).split("train");
    const double inv_batch = 1.0 / cfg.batch_size;

    for (int step = 0; step < cfg.steps; ++step) {
        if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0)
            result.validation.push_back({step, validate_fn(model)});
        Rng rng = root.split(static_cast<uint64_t>(step));
        tape.zero();
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t draw = rng.below(train_size);
            const Example ex = make(draw, rng);
            loss += example_loss(model, model.params(), ex, cache, dout) * inv_batch;
            for (double& g : dout) g *= inv_batch;
            backward_accumulate(model, model.params(), cache, dout, tape.grad);
        }
        if (!std::isfinite(loss)) fail(ErrorKind::Numeric, "non-finite training loss at step " + std::to_string(step));
        const double lr = learning_rate(cfg, step);
        const StepReport rep = adam_step(model, tape, lr, adam);
        ema_update(model, cfg.ema_decay);
        result.curve.push_back({step, loss, lr, rep.grad_norm});
    }
    result.validation.push_back({cfg.steps, validate_fn(model)});
}

}  // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.steps < 0) fail(ErrorKind::Config, "steps must be nonnegative");
    if (cfg.batch_size < 1) fail(ErrorKind::Config, "batch_size must be at least 1");
    if (!(cfg.lr > 0.0)) fail(ErrorKind::Config, "lr must be positive");
    if (cfg.warmup_steps < 0) fail(ErrorKind::Config, "warmup_steps must be nonnegative");
    if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay <= 1.0)) fail(ErrorKind::Config, "ema_decay must lie in [0, 1]");
    if (!(cfg.cfg_drop_prob >= 0.0 && cfg.cfg_drop_prob <= 1.0))
        fail(ErrorKind::Config, "cfg_drop_prob must lie in [0, 1]");
    if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0))
        fail(ErrorKind::Config, "holdout_fraction must lie in [0, 1)");
    if (cfg.layers < 1 || cfg.width < 1) fail(ErrorKind::Config, "layers and width must be positive");
    if (cfg.validation_draws < 1) fail(ErrorKind::Config, "validation_draws must be positive");
    if (cfg.eval_interval < 0) fail(ErrorKind::Config, "eval_interval must be nonnegative");
}

double learning_rate(const TrainConfig& cfg, int step) {
    if (step < cfg.warmup_steps) return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
    if (!cfg.cosine_decay) return cfg.lr;
    const int span = std::max(1, cfg.steps - cfg.warmup_steps);
    const double progress = static_cast<double>(step - cfg.warmup_steps) / span;
    return 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void write_curve_csv(const std::vector<CurveRow>& curve, const std::filesystem::path& path) {
    std::string s = "step,loss,lr,grad_norm\n";
    for (const CurveRow& r : curve)
        s += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.lr) + "," +
             format_double(r.grad_norm) + "\n";
    atomic_write(path, s);
}

double validation_loss(const ExpertModel& model, const SyntheticDataset& shard, const TrainConfig& cfg) {
    if (shard.size() == 0) fail(ErrorKind::Config, "empty shard");
    const Split split = split_indices(shard.size(), cfg.holdout_fraction, cfg.seed);
    const Rng root = Rng(cfg.seed).split("validation");
    const int cond_count = model.arch().cond_count;
    ForwardCache cache;
    Vec dout;
    double total = 0.0;
    size_t count = 0;
    for (size_t h = 0; h < split.holdout.size(); ++h) {
        for (int r = 0; r < cfg.validation_draws; ++r) {
            Rng rng = root.split(static_cast<uint64_t>(h) * static_cast<uint64_t>(cfg.validation_draws) +
                                 static_cast<uint64_t>(r));
            const Example ex = expert_example(shard, split.holdout[h], cfg, cond_count, rng, false);
            total += example_loss(model, model.params(), ex, cache, dout);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

TrainResult train_expert(const SyntheticDataset& shard, const TrainConfig& cfg, int cond_count,
                         const ExpertModel* init) {
    validate(cfg);
    if (shard.size() == 0) fail(ErrorKind::Config, "cannot train an expert on an empty shard");
    if (cfg.objective == Objective::Classifier) fail(ErrorKind::Config, "experts predict epsilon or velocity");
    Architecture arch{cfg.layers, cfg.width, shard.dim, cond_count, shard.dim};
    TrainResult result{init ? *init : ExpertModel(arch, cfg.objective, cfg.schedule, init_seed(cfg.seed)), {}, {}};
    if (init) {
        if (init->objective() != cfg.objective || !(init->schedule() == cfg.schedule))
            fail(ErrorKind::Config, "warm-start model tags differ from the training config");
        if (init->arch() != arch) fail(ErrorKind::Config, "warm-start model architecture differs from the config");
        result.model.sync_ema();
        result.model.reset_optimizer();
    }
    const Split split = split_indices(shard.size(), cfg.holdout_fraction, cfg.seed);
    const ExampleFn make = [&](size_t draw, Rng& rng) {
        return expert_example(shard, split.train[draw], cfg, cond_count, rng, true);
    };
    optimize(result, cfg, split.train.size(), make,
             [&](const ExpertModel& m) { return validation_loss(m, shard, cfg); });
    return result;
}

std::vector<int> ObjectiveMix::ddpm_ids() const {
    std::vector<int> ids;
    for (size_t k = 0; k < objectives.size(); ++k)
        if (objectives[k] == Objective::Epsilon) ids.push_back(static_cast<int>(k));
    return ids;
}

std::vector<Schedule> ObjectiveMix::corruption_schedules() const {
    std::vector<Schedule> out;
    for (size_t k = 0; k < objectives.size(); ++k) {
        const Schedule s = objectives[k] == Objective::Velocity ? Schedule::linear() : schedules[k];
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
}

ObjectiveMix ObjectiveMix::with_ddpm(int K, const std::vector<int>& ddpm_ids, const Schedule& eps_schedule) {
    if (K < 1) fail(ErrorKind::Config, "objective mix needs at least one expert");
    ObjectiveMix mix;
    mix.objectives.assign(static_cast<size_t>(K), Objective::Velocity);
    mix.schedules.assign(static_cast<size_t>(K), Schedule::linear());
    for (int id : ddpm_ids) {
        if (id < 0 || id >= K)
            fail(ErrorKind::Config, "ddpm expert id " + std::to_string(id) + " outside [0, " + std::to_string(K) + ")");
        mix.objectives[static_cast<size_t>(id)] = Objective::Epsilon;
        mix.schedules[static_cast<size_t>(id)] = eps_schedule;
    }
    return mix;
}

void validate(const ObjectiveMix& mix) {
    if (mix.objectives.empty()) fail(ErrorKind::Config, "objective mix needs at least one expert");
    if (mix.schedules.size() != mix.objectives.size()) fail(ErrorKind::Config, "objective mix shapes disagree");
    for (Objective o : mix.objectives)
        if (o == Objective::Classifier) fail(ErrorKind::Config, "objective mix holds a classifier tag");
}

TrainResult train_router(const SyntheticDataset& data, const ClusterAssignment& assignment, const ObjectiveMix& mix,
                         const TrainConfig& cfg) {
    validate(cfg);
    validate(mix);
    if (data.size() == 0) fail(ErrorKind::Config, "router training data is empty");
    if (assignment.assignment.size() != data.size())
        fail(ErrorKind::Shape, "assignment covers " + std::to_string(assignment.assignment.size()) +
                                   " points, data has " + std::to_string(data.size()));
    const int K = assignment.K;
    if (static_cast<size_t>(K) != mix.size())
        fail(ErrorKind::Config, "router K=" + std::to_string(K) + " but the objective mix has " +
                                    std::to_string(mix.size()) + " experts");
    Architecture arch{cfg.layers, cfg.width, data.dim, 0, K};
    TrainResult result{ExpertModel(arch, Objective::Classifier, Schedule::linear(), init_seed(cfg.seed)), {}, {}};
    if (K == 1) return result;  // zero head: softmax of one logit is 1

    const std::vector<Schedule> schedules = mix.corruption_schedules();
    const Split split = split_indices(data.size(), cfg.holdout_fraction, cfg.seed);
    uint64_t counter = 0;
    const ExampleFn make = [&](size_t draw, Rng& rng) {
        const size_t i = split.train[draw];
        const Schedule& s = schedules[counter++ % schedules.size()];
        return router_example(data, i, assignment.assignment[i], s, rng);
    };
    const auto validate_fn = [&](const ExpertModel& m) {
        const Rng root = Rng(cfg.seed).split("validation");
        ForwardCache cache;
        Vec dout;
        double total = 0.0;
        size_t count = 0;
        for (size_t h = 0; h < split.holdout.size(); ++h) {
            for (size_t s = 0; s < schedules.size(); ++s) {
                Rng rng = root.split(static_cast<uint64_t>(h * schedules.size() + s));
                const size_t i = split.holdout[h];
                total += example_loss(m, m.params(), router_example(data, i, assignment.assignment[i], schedules[s], rng),
                                      cache, dout);
                ++count;
            }
        }
        return total / static_cast<double>(count);
    };
    optimize(result, cfg, split.train.size(), make, validate_fn);
    return result;
}

ExpertModel convert_checkpoint_into(const ExpertModel& source, const Architecture& target, Objective target_objective,
                                    const Schedule& target_schedule, uint64_t reinit_seed) {
    if (target_objective == Objective::Classifier || source.objective() == Objective::Classifier)
        fail(ErrorKind::Conversion, "conversion applies to denoising experts only");
    ExpertModel out(target, target_objective, target_schedule, reinit_seed);
    std::string mismatched;
    for (const TensorSpec& t : out.layout().tensors()) {
        if (!is_trunk_tensor(t.name)) continue;
        const TensorSpec* s = source.layout().try_find(t.name);
        if (!s || s->dims != t.dims) {
            mismatched += (mismatched.empty() ? "" : ", ") + t.name;
            continue;
        }
        std::copy_n(source.params().begin() + static_cast<std::ptrdiff_t>(s->offset), s->size,
                    out.params().begin() + static_cast<std::ptrdiff_t>(t.offset));
    }
    for (const TensorSpec& s : source.layout().tensors())
        if (is_trunk_tensor(s.name) && !out.layout().try_find(s.name))
            mismatched += (mismatched.empty() ? "" : ", ") + s.name;
    if (!mismatched.empty()) fail(ErrorKind::Conversion, "architecture mismatch in tensors: " + mismatched);
    out.initialize_normal("head.w", reinit_seed, 0.02);
    out.sync_ema();
    out.reset_optimizer();
    out.step_count = 0;
    return out;
}

ExpertModel convert_checkpoint(const ExpertModel& source, Objective target_objective, const Schedule& target_schedule,
                               uint64_t reinit_seed, int target_cond_count) {
    Architecture target = source.arch();
    if (target_cond_count >= 0) target.cond_count = target_cond_count;
    return convert_checkpoint_into(source, target, target_objective, target_schedule, reinit_seed);
}

int worker_count() {
    if (const char* env = std::getenv("HDDM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const size_t workers = std::min(n, static_cast<size_t>(worker_count()));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first) first = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

}  // namespace hddm
