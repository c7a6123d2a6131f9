// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/netcore.hpp"

#include <algorithm>
#include <cmath>

#include "hddm/error.hpp"
#include "hddm/rng.hpp"

namespace hddm {

namespace {

constexpr double kLayerNormEps = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// y = W x + b, W is [out x in] row-major.
void dense(const double* w, const double* b, const double* x, double* y, size_t out, size_t in) {
    for (size_t o = 0; o < out; ++o) {
        const double* row = w + o * in;
        double acc = b[o];
        for (size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// dW += g x^T, db += g, gx = W^T g (gx may be null).
void dense_backward(const double* w, const double* x, const double* g, double* dw, double* db, double* gx,
                    size_t out, size_t in) {
    if (gx) std::fill(gx, gx + in, 0.0);
    for (size_t o = 0; o < out; ++o) {
        const double go = g[o];
        db[o] += go;
        if (go == 0.0) continue;
        double* drow = dw + o * in;
        const double* row = w + o * in;
        for (size_t i = 0; i < in; ++i) drow[i] += go * x[i];
        if (gx)
            for (size_t i = 0; i < in; ++i) gx[i] += row[i] * go;
    }
}

// n = (h - mean) * rstd; returns rstd.
double layer_norm(const double* h, double* n, size_t d) {
    double mean = 0.0;
    for (size_t i = 0; i < d; ++i) mean += h[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t i = 0; i < d; ++i) var += (h[i] - mean) * (h[i] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    for (size_t i = 0; i < d; ++i) n[i] = (h[i] - mean) * rstd;
    return rstd;
}

// gh += rstd * (gn - mean(gn) - n * mean(gn * n))
void layer_norm_backward(const double* n, double rstd, const double* gn, double* gh, size_t d) {
    double mean_g = 0.0, mean_gn = 0.0;
    for (size_t i = 0; i < d; ++i) {
        mean_g += gn[i];
        mean_gn += gn[i] * n[i];
    }
    mean_g /= static_cast<double>(d);
    mean_gn /= static_cast<double>(d);
    for (size_t i = 0; i < d; ++i) gh[i] += rstd * (gn[i] - mean_g - n[i] * mean_gn);
}

void sinusoidal_features(int index, double* out, size_t d) {
    const size_t half = d / 2;
    std::fill(out, out + d, 0.0);
    for (size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::cos(index * freq);
        out[half + i] = std::sin(index * freq);
    }
}

int resolve_cond(const Architecture& arch, std::optional<int> cond) {
    if (!cond) return arch.cond_count;
    if (*cond < 0 || *cond > arch.cond_count)
        fail(ErrorKind::Shape, "condition id " + std::to_string(*cond) + " outside [0, " +
                                   std::to_string(arch.cond_count) + "]");
    return *cond;
}

void ensure(Vec& v, size_t n) {
    if (v.size() != n) v.assign(n, 0.0);
}

}  // namespace

const char* objective_name(Objective objective) noexcept {
    switch (objective) {
        case Objective::Epsilon: return "epsilon";
        case Objective::Velocity: return "velocity";
        case Objective::Classifier: return "classifier";
    }
    return "unknown";
}

Objective parse_objective(std::string_view name) {
    if (name == "epsilon" || name == "ddpm" || name == "eps") return Objective::Epsilon;
    if (name == "velocity" || name == "fm" || name == "v") return Objective::Velocity;
    fail(ErrorKind::Config, "unknown objective '" + std::string(name) + "' (expected epsilon or velocity)");
}

ParamLayout::ParamLayout(const Architecture& arch) {
    if (arch.layers < 1 || arch.width < 1 || arch.data_dim < 1 || arch.out_dim < 1 || arch.cond_count < 0)
        fail(ErrorKind::Shape, "invalid architecture");
    const auto d = static_cast<uint32_t>(arch.width);
    const auto dim = static_cast<uint32_t>(arch.data_dim);
    const auto out = static_cast<uint32_t>(arch.out_dim);
    index_.time_w1 = add("time.w1", {d, d});
    index_.time_b1 = add("time.b1", {d});
    index_.time_w2 = add("time.w2", {d, d});
    index_.time_b2 = add("time.b2", {d});
    index_.cond_table = add("cond.table", {static_cast<uint32_t>(arch.cond_count + 1), d});
    index_.input_w = add("input.w", {d, dim});
    index_.input_b = add("input.b", {d});
    index_.ada_w = add("ada.w", {6 * d, d});
    index_.ada_b = add("ada.b", {6 * d});
    for (int b = 0; b < arch.layers; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        BlockIndex bi{};
        bi.embed = add(p + "embed", {6, d});
        bi.attn_w = add(p + "attn.w", {d, d});
        bi.attn_b = add(p + "attn.b", {d});
        bi.mlp_w1 = add(p + "mlp.w1", {d, d});
        bi.mlp_b1 = add(p + "mlp.b1", {d});
        bi.mlp_w2 = add(p + "mlp.w2", {d, d});
        bi.mlp_b2 = add(p + "mlp.b2", {d});
        index_.blocks.push_back(bi);
    }
    index_.head_w = add("head.w", {out, d});
    index_.head_b = add("head.b", {out});
}

size_t ParamLayout::add(std::string name, std::vector<uint32_t> dims) {
    size_t size = 1;
    for (uint32_t n : dims) size *= n;
    const size_t offset = total_;
    tensors_.push_back({std::move(name), std::move(dims), offset, size});
    total_ += size;
    return offset;
}

const TensorSpec* ParamLayout::try_find(std::string_view name) const noexcept {
    for (const auto& t : tensors_)
        if (t.name == name) return &t;
    return nullptr;
}

const TensorSpec& ParamLayout::find(std::string_view name) const {
    if (const TensorSpec* t = try_find(name)) return *t;
    fail(ErrorKind::Shape, "no tensor named '" + std::string(name) + "'");
}

const std::string& ParamLayout::owner(size_t i) const {
    for (const auto& t : tensors_)
        if (i >= t.offset && i < t.offset + t.size) return t.name;
    fail(ErrorKind::Shape, "parameter index out of range");
}

ParameterCount count_parameters(const Architecture& arch, ModulationVariant variant) {
    const int64_t d = arch.width, L = arch.layers, dim = arch.data_dim, out = arch.out_dim;
    const int64_t shared_map = 6 * d * d + 6 * d;
    const int64_t conditioning =
        variant == ModulationVariant::Single ? shared_map + L * 6 * d : L * shared_map;
    const int64_t time = 2 * (d * d + d);
    const int64_t cond = (arch.cond_count + 1) * d;
    const int64_t input = d * dim + d;
    const int64_t blocks = L * 3 * (d * d + d);
    const int64_t head = out * d + out;
    return {conditioning, conditioning + time + cond + input + blocks + head};
}

ExpertModel::ExpertModel(const Architecture& arch, Objective objective, Schedule schedule, uint64_t init_seed)
    : arch_(arch), layout_(arch), objective_(objective), schedule_(std::move(schedule)) {
    params_.assign(layout_.total(), 0.0);
    initialize(init_seed);
}

std::span<double> ExpertModel::tensor(std::string_view name, bool use_ema) {
    const TensorSpec& t = layout_.find(name);
    return std::span<double>(use_ema ? ema_ : params_).subspan(t.offset, t.size);
}

std::span<const double> ExpertModel::tensor(std::string_view name, bool use_ema) const {
    const TensorSpec& t = layout_.find(name);
    return std::span<const double>(use_ema ? ema_ : params_).subspan(t.offset, t.size);
}

void ExpertModel::initialize(uint64_t seed) {
    const Rng root(seed);
    const double d = arch_.width;
    for (const TensorSpec& t : layout_.tensors()) {
        double* p = params_.data() + t.offset;
        Rng rng = root.split(t.name);
        const std::string& n = t.name;
        const bool zero = n == "cond.table" || n.starts_with("ada.") || n.starts_with("head.") || t.dims.size() == 1;
        if (zero) {
            std::fill(p, p + t.size, 0.0);
        } else if (n.ends_with(".embed")) {
            // Per-block embeddings: N(0, 1/sqrt(d)); gate slots start at zero
            // so every residual branch is closed at initialization.
            const double std = 1.0 / std::sqrt(d);
            for (uint32_t slot = 0; slot < 6; ++slot)
                for (uint32_t i = 0; i < t.dims[1]; ++i) {
                    const double v = rng.normal() * std;
                    p[slot * t.dims[1] + i] = (slot == kGateMsa || slot == kGateMlp) ? 0.0 : v;
                }
        } else {
            // Kaiming-uniform over fan-in.
            const double bound = std::sqrt(6.0 / static_cast<double>(t.dims[1]));
            for (size_t i = 0; i < t.size; ++i) p[i] = rng.uniform(-bound, bound);
        }
    }
    ema_ = params_;
    reset_optimizer();
    step_count = 0;
}

void ExpertModel::initialize_normal(std::string_view name, uint64_t seed, double std) {
    const TensorSpec& t = layout_.find(name);
    Rng rng = Rng(seed).split(t.name);
    for (size_t i = 0; i < t.size; ++i) params_[t.offset + i] = rng.normal() * std;
    std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size,
                ema_.begin() + static_cast<std::ptrdiff_t>(t.offset));
}

void ExpertModel::reset_optimizer() {
    adam_m.assign(params_.size(), 0.0);
    adam_v.assign(params_.size(), 0.0);
    adam_steps = 0;
}

ConstSpan forward_cached(const ExpertModel& model, ConstSpan params, ConstSpan x_t, double t,
                         std::optional<int> cond, ForwardCache& c) {
    const Architecture& a = model.arch();
    const auto& ix = model.layout().index();
    const size_t d = static_cast<size_t>(a.width);
    const size_t dim = static_cast<size_t>(a.data_dim);
    const size_t out = static_cast<size_t>(a.out_dim);
    if (x_t.size() != dim)
        fail(ErrorKind::Shape, "input has dimension " + std::to_string(x_t.size()) + ", model expects " +
                                   std::to_string(dim));
    if (!all_finite(x_t)) fail(ErrorKind::Numeric, "non-finite network input");
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorKind::Domain, "network time outside [0, 1]");
    const double* P = params.data();

    c.x.assign(x_t.begin(), x_t.end());
    c.cond_row = resolve_cond(a, cond);
    for (Vec* v : {&c.features, &c.a1, &c.z1, &c.temb, &c.tcond, &c.s, &c.h0}) ensure(*v, d);
    ensure(c.mod, 6 * d);
    ensure(c.out, out);
    c.blocks.resize(static_cast<size_t>(a.layers));

    // Time embedding of the discrete index, plus the condition embedding.
    sinusoidal_features(to_discrete_index(t), c.features.data(), d);
    dense(P + ix.time_w1, P + ix.time_b1, c.features.data(), c.a1.data(), d, d);
    for (size_t i = 0; i < d; ++i) c.z1[i] = silu(c.a1[i]);
    dense(P + ix.time_w2, P + ix.time_b2, c.z1.data(), c.temb.data(), d, d);
    const double* row = P + ix.cond_table + static_cast<size_t>(c.cond_row) * d;
    for (size_t i = 0; i < d; ++i) {
        c.tcond[i] = c.temb[i] + row[i];
        c.s[i] = silu(c.tcond[i]);
    }
    // One shared map produces the modulation for every block.
    dense(P + ix.ada_w, P + ix.ada_b, c.s.data(), c.mod.data(), 6 * d, d);

    dense(P + ix.input_w, P + ix.input_b, c.x.data(), c.h0.data(), d, dim);
    const Vec* h = &c.h0;
    for (size_t b = 0; b < c.blocks.size(); ++b) {
        auto& k = c.blocks[b];
        const auto& bi = ix.blocks[b];
        for (Vec* v : {&k.n1, &k.u1, &k.pre_a, &k.f1, &k.h1, &k.n2, &k.u2, &k.pre_p, &k.q, &k.f2, &k.h_out})
            ensure(*v, d);
        const double* E = P + bi.embed;
        auto m = [&](int slot, size_t i) { return c.mod[slot * d + i] + E[slot * d + i]; };

        k.h_in = *h;
        k.rstd1 = layer_norm(k.h_in.data(), k.n1.data(), d);
        for (size_t i = 0; i < d; ++i) k.u1[i] = k.n1[i] * (1.0 + m(kScaleMsa, i)) + m(kShiftMsa, i);
        dense(P + bi.attn_w, P + bi.attn_b, k.u1.data(), k.pre_a.data(), d, d);
        for (size_t i = 0; i < d; ++i) {
            k.f1[i] = silu(k.pre_a[i]);
            k.h1[i] = k.h_in[i] + m(kGateMsa, i) * k.f1[i];
        }
        k.rstd2 = layer_norm(k.h1.data(), k.n2.data(), d);
        for (size_t i = 0; i < d; ++i) k.u2[i] = k.n2[i] * (1.0 + m(kScaleMlp, i)) + m(kShiftMlp, i);
        dense(P + bi.mlp_w1, P + bi.mlp_b1, k.u2.data(), k.pre_p.data(), d, d);
        for (size_t i = 0; i < d; ++i) k.q[i] = silu(k.pre_p[i]);
        dense(P + bi.mlp_w2, P + bi.mlp_b2, k.q.data(), k.f2.data(), d, d);
        for (size_t i = 0; i < d; ++i) k.h_out[i] = k.h1[i] + m(kGateMlp, i) * k.f2[i];
        h = &k.h_out;
    }
    dense(P + ix.head_w, P + ix.head_b, h->data(), c.out.data(), out, d);
    return c.out;
}

Vec forward(const ExpertModel& model, ConstSpan x_t, double t, std::optional<int> cond, bool use_ema) {
    ForwardCache cache;
    const ConstSpan out = forward_cached(model, use_ema ? model.ema() : model.params(), x_t, t, cond, cache);
    return Vec(out.begin(), out.end());
}

void backward_accumulate(const ExpertModel& model, ConstSpan params, const ForwardCache& c, ConstSpan dout,
                         MutSpan grad) {
    const Architecture& a = model.arch();
    const auto& ix = model.layout().index();
    const size_t d = static_cast<size_t>(a.width);
    const size_t dim = static_cast<size_t>(a.data_dim);
    const size_t out = static_cast<size_t>(a.out_dim);
    const double* P = params.data();
    double* G = grad.data();

    thread_local Vec gh, gh1, gtmp, gu, gcmod, gvec;
    gh.assign(d, 0.0);
    gh1.assign(d, 0.0);
    gtmp.assign(d, 0.0);
    gu.assign(d, 0.0);
    gvec.assign(d, 0.0);
    gcmod.assign(6 * d, 0.0);

    const Vec& h_last = c.blocks.back().h_out;
    dense_backward(P + ix.head_w, h_last.data(), dout.data(), G + ix.head_w, G + ix.head_b, gh.data(), out, d);

    for (size_t bb = c.blocks.size(); bb-- > 0;) {
        const auto& k = c.blocks[bb];
        const auto& bi = ix.blocks[bb];
        const double* E = P + bi.embed;
        double* dE = G + bi.embed;
        auto m = [&](int slot, size_t i) { return c.mod[slot * d + i] + E[slot * d + i]; };
        auto dm = [&](int slot, size_t i, double v) {
            dE[slot * d + i] += v;
            gcmod[slot * d + i] += v;
        };

        // h_out = h1 + gate_mlp * f2
        for (size_t i = 0; i < d; ++i) {
            dm(kGateMlp, i, gh[i] * k.f2[i]);
            gtmp[i] = gh[i] * m(kGateMlp, i);
            gh1[i] = gh[i];
        }
        dense_backward(P + bi.mlp_w2, k.q.data(), gtmp.data(), G + bi.mlp_w2, G + bi.mlp_b2, gvec.data(), d, d);
        for (size_t i = 0; i < d; ++i) gvec[i] *= silu_grad(k.pre_p[i]);
        dense_backward(P + bi.mlp_w1, k.u2.data(), gvec.data(), G + bi.mlp_w1, G + bi.mlp_b1, gu.data(), d, d);
        for (size_t i = 0; i < d; ++i) {
            dm(kScaleMlp, i, gu[i] * k.n2[i]);
            dm(kShiftMlp, i, gu[i]);
            gtmp[i] = gu[i] * (1.0 + m(kScaleMlp, i));
        }
        layer_norm_backward(k.n2.data(), k.rstd2, gtmp.data(), gh1.data(), d);

        // h1 = h_in + gate_msa * f1
        for (size_t i = 0; i < d; ++i) {
            dm(kGateMsa, i, gh1[i] * k.f1[i]);
            gvec[i] = gh1[i] * m(kGateMsa, i) * silu_grad(k.pre_a[i]);
            gh[i] = gh1[i];
        }
        dense_backward(P + bi.attn_w, k.u1.data(), gvec.data(), G + bi.attn_w, G + bi.attn_b, gu.data(), d, d);
        for (size_t i = 0; i < d; ++i) {
            dm(kScaleMsa, i, gu[i] * k.n1[i]);
            dm(kShiftMsa, i, gu[i]);
            gtmp[i] = gu[i] * (1.0 + m(kScaleMsa, i));
        }
        layer_norm_backward(k.n1.data(), k.rstd1, gtmp.data(), gh.data(), d);
    }

    dense_backward(P + ix.input_w, c.x.data(), gh.data(), G + ix.input_w, G + ix.input_b, nullptr, d, dim);

    // Modulation path back to the time and condition embeddings.
    dense_backward(P + ix.ada_w, c.s.data(), gcmod.data(), G + ix.ada_w, G + ix.ada_b, gvec.data(), 6 * d, d);
    double* drow = G + ix.cond_table + static_cast<size_t>(c.cond_row) * d;
    for (size_t i = 0; i < d; ++i) {
        gvec[i] *= silu_grad(c.tcond[i]);
        drow[i] += gvec[i];
    }
    dense_backward(P + ix.time_w2, c.z1.data(), gvec.data(), G + ix.time_w2, G + ix.time_b2, gtmp.data(), d, d);
    for (size_t i = 0; i < d; ++i) gtmp[i] *= silu_grad(c.a1[i]);
    dense_backward(P + ix.time_w1, c.features.data(), gtmp.data(), G + ix.time_w1, G + ix.time_b1, nullptr, d, d);
}

void GradientTape::zero() { std::fill(grad.begin(), grad.end(), 0.0); }

double GradientTape::norm() const { return hddm::norm(grad); }

void GradientTape::check_finite() const {
    for (size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            fail(ErrorKind::Numeric, "non-finite gradient in parameter '" + layout->owner(i) + "'");
}

std::span<const double> GradientTape::tensor(std::string_view name) const {
    const TensorSpec& t = layout->find(name);
    return std::span<const double>(grad).subspan(t.offset, t.size);
}

double mse_loss(ConstSpan prediction, ConstSpan target, MutSpan grad) {
    if (prediction.size() != target.size() || grad.size() != target.size())
        fail(ErrorKind::Shape, "loss operands differ in size");
    const double n = static_cast<double>(target.size());
    double loss = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double diff = prediction[i] - target[i];
        loss += diff * diff;
        grad[i] = 2.0 * diff / n;
    }
    return loss / n;
}

double cross_entropy_loss(ConstSpan logits, int label, MutSpan grad) {
    if (label < 0 || static_cast<size_t>(label) >= logits.size())
        fail(ErrorKind::Shape, "class label outside logit range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double log_z = mx + std::log(z);
    for (size_t i = 0; i < logits.size(); ++i)
        grad[i] = std::exp(logits[i] - log_z) - (static_cast<int>(i) == label ? 1.0 : 0.0);
    return log_z - logits[static_cast<size_t>(label)];
}

BackwardResult backward(const ExpertModel& model, std::span<const BatchItem> batch, LossKind kind) {
    BackwardResult result{GradientTape(model.layout()), 0.0};
    if (kind == LossKind::Zero) return result;
    if (kind == LossKind::ParameterL2) {
        const auto p = model.params();
        std::copy(p.begin(), p.end(), result.tape.grad.begin());
        result.loss = 0.5 * squared_norm(p);
        return result;
    }
    if (batch.empty()) return result;
    ForwardCache cache;
    Vec dout(static_cast<size_t>(model.arch().out_dim));
    Vec sample_grad(model.layout().total());
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const BatchItem& item : batch) {
        const ConstSpan pred = forward_cached(model, model.params(), item.x, item.t, item.cond, cache);
        const double loss = kind == LossKind::MeanSquared ? mse_loss(pred, item.target, dout)
                                                          : cross_entropy_loss(pred, item.label, dout);
        result.loss += loss * inv;
        for (double& g : dout) g *= inv;
        backward_accumulate(model, model.params(), cache, dout, result.tape.grad);
    }
    result.tape.check_finite();
    return result;
}

StepReport adam_step(ExpertModel& model, GradientTape& tape, double lr, const AdamConfig& cfg) {
    if (tape.grad.size() != model.params().size()) fail(ErrorKind::Shape, "gradient tape does not match model");
    tape.check_finite();
    StepReport report;
    report.grad_norm = tape.norm();
    if (cfg.clip_norm > 0.0 && report.grad_norm > cfg.clip_norm) {
        const double scale = cfg.clip_norm / report.grad_norm;
        for (double& g : tape.grad) g *= scale;
    }
    report.applied_norm = tape.norm();

    if (model.adam_m.size() != tape.grad.size()) model.reset_optimizer();
    ++model.adam_steps;
    ++model.step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(model.adam_steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(model.adam_steps));
    auto p = model.params();
    for (size_t i = 0; i < p.size(); ++i) {
        const double g = tape.grad[i];
        double& m = model.adam_m[i];
        double& v = model.adam_v[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        if (cfg.weight_decay != 0.0) p[i] -= lr * cfg.weight_decay * p[i];
        p[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    }
    return report;
}

void ema_update(ExpertModel& model, double decay) {
    auto p = model.params();
    auto e = model.ema();
    for (size_t i = 0; i < p.size(); ++i) e[i] = decay * e[i] + (1.0 - decay) * p[i];
}

}  // namespace hddm
