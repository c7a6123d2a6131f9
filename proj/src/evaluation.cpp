// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hddm/checkpoint.hpp"
#include "hddm/error.hpp"
#include "hddm/io.hpp"
#include "hddm/oracle.hpp"
#include "hddm/rng.hpp"

namespace hddm {

namespace {

using Matrix = Eigen::MatrixXd;

Matrix to_matrix(const Vec& cov, size_t dim) {
    Matrix m(dim, dim);
    for (size_t i = 0; i < dim; ++i)
        for (size_t j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cov[i * dim + j];
    return 0.5 * (m + m.transpose());
}

// Lifts a (near) singular covariance by 1e-8 I.
bool regularize(Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() > 1e-12 * scale) return false;
    m += 1e-8 * Matrix::Identity(m.rows(), m.cols());
    return true;
}

Matrix psd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt_product(const Matrix& a, const Matrix& b) {
    const Matrix ra = psd_sqrt(a);
    Matrix inner = ra * b * ra;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

uint64_t stream(uint64_t seed, std::string_view name) { return Rng(seed).split(name).key(); }

}  // namespace

Moments sample_moments(ConstSpan points, size_t dim) {
    if (dim == 0 || points.size() % dim != 0) fail(ErrorKind::Shape, "point buffer is not a multiple of dim");
    const size_t n = points.size() / dim;
    if (n < dim + 1)
        fail(ErrorKind::Shape, "moments need at least dim+1 = " + std::to_string(dim + 1) + " points, got " +
                                   std::to_string(n));
    Moments m{dim, Vec(dim, 0.0), Vec(dim * dim, 0.0)};
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < dim; ++j) m.mean[j] += points[i * dim + j];
    for (double& v : m.mean) v /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t a = 0; a < dim; ++a)
            for (size_t b = 0; b < dim; ++b)
                m.cov[a * dim + b] += (points[i * dim + a] - m.mean[a]) * (points[i * dim + b] - m.mean[b]);
    for (double& v : m.cov) v /= static_cast<double>(n - 1);
    return m;
}

FrechetResult frechet_from_moments(const Moments& a, const Moments& b) {
    if (a.dim != b.dim || a.mean.size() != a.dim || b.mean.size() != b.dim || a.cov.size() != a.dim * a.dim ||
        b.cov.size() != b.dim * b.dim)
        fail(ErrorKind::Shape, "moment shapes disagree");
    FrechetResult r;
    Matrix sa = to_matrix(a.cov, a.dim), sb = to_matrix(b.cov, b.dim);
    r.regularized = regularize(sa);
    r.regularized = regularize(sb) || r.regularized;
    double mean_term = 0.0;
    for (size_t j = 0; j < a.dim; ++j) mean_term += (a.mean[j] - b.mean[j]) * (a.mean[j] - b.mean[j]);
    // tr sqrt(Sa^1/2 Sb Sa^1/2) is symmetric in its arguments; average both
    // orders so d(A, B) and d(B, A) agree to rounding.
    const double cross = 0.5 * (trace_sqrt_product(sa, sb) + trace_sqrt_product(sb, sa));
    double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if (value < 0.0) {
        if (value < -1e-10 * std::max(1.0, sa.trace() + sb.trace()))
            fail(ErrorKind::Numeric, "Frechet distance came out negative: " + format_double(value));
        value = 0.0;
    }
    r.value = value;
    return r;
}

FrechetResult frechet_distance(ConstSpan a, ConstSpan b, size_t dim) {
    return frechet_from_moments(sample_moments(a, dim), sample_moments(b, dim));
}

double mean_pairwise_distance(ConstSpan points, size_t dim) {
    if (dim == 0 || points.size() % dim != 0) fail(ErrorKind::Shape, "point buffer is not a multiple of dim");
    const size_t n = points.size() / dim;
    if (n < 2) fail(ErrorKind::Shape, "pairwise diversity needs at least 2 samples");
    double total = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (size_t k = 0; k < dim; ++k) {
                const double d = points[i * dim + k] - points[j * dim + k];
                d2 += d * d;
            }
            total += std::sqrt(d2);
        }
    return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

DiversityResult diversity(ConstSpan points, size_t dim, const std::vector<int>* groups) {
    DiversityResult r;
    r.mean_pairwise = mean_pairwise_distance(points, dim);
    if (!groups) return r;
    const size_t n = points.size() / dim;
    if (groups->size() != n) fail(ErrorKind::Shape, "one group id per sample required");
    std::map<int, Vec> members;
    for (size_t i = 0; i < n; ++i) {
        Vec& m = members[(*groups)[i]];
        m.insert(m.end(), points.begin() + static_cast<std::ptrdiff_t>(i * dim),
                 points.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    }
    double total = 0.0;
    int used = 0;
    for (const auto& [id, pts] : members) {
        if (pts.size() < 2 * dim) {
            ++r.skipped_groups;
            continue;
        }
        total += mean_pairwise_distance(pts, dim);
        ++used;
    }
    if (used > 0) r.intra = total / used;
    return r;
}

Vec native_ddpm_baseline(const Expert& expert, int steps, uint64_t seed, const std::vector<std::optional<int>>& conds,
                         double cfg_scale, const ConversionConfig& safeguards) {
    if (expert.objective() != Objective::Epsilon)
        fail(ErrorKind::Type, std::string("native DDPM sampling needs an epsilon expert, got ") +
                                  objective_name(expert.objective()));
    if (steps < 1) fail(ErrorKind::Config, "native DDPM sampling needs at least one step");
    const Schedule& sched = expert.schedule();
    const size_t dim = expert.dim();
    Vec out;
    out.reserve(conds.size() * dim);
    for (size_t n = 0; n < conds.size(); ++n) {
        Rng rng = Rng(seed).split("ddpm").split(static_cast<uint64_t>(n));
        Vec x(dim);
        for (double& v : x) v = rng.normal();
        for (int i = steps; i >= 1; --i) {
            const double t = static_cast<double>(i) / steps;
            const double s = static_cast<double>(i - 1) / steps;
            Vec eps = expert.predict(x, t, conds[n]);
            if (conds[n] && cfg_scale != 1.0) eps = cfg_combine(eps, expert.predict(x, t, std::nullopt), cfg_scale);
            const Vec x0 = recover_x0(x, eps, t, sched, safeguards);
            if (i == 1) {
                x = x0;
                break;
            }
            const AlphaSigma at = sched.at(t), as = sched.at(s);
            const double a_ts = at.alpha / as.alpha;
            const double var_ts = at.sigma * at.sigma - a_ts * a_ts * as.sigma * as.sigma;
            const double st2 = at.sigma * at.sigma;
            const double cx = a_ts * as.sigma * as.sigma / st2;
            const double c0 = as.alpha * var_ts / st2;
            const double sd = std::sqrt(std::max(0.0, var_ts * as.sigma * as.sigma / st2));
            for (size_t j = 0; j < dim; ++j) x[j] = cx * x[j] + c0 * x0[j] + sd * rng.normal();
            if (!all_finite(x)) fail(ErrorKind::Numeric, "non-finite DDPM state at t=" + format_double(s));
        }
        out.insert(out.end(), x.begin(), x.end());
    }
    return out;
}

MetricReport evaluate_samples(ConstSpan samples, size_t dim, const std::vector<int>& groups, const Moments& reference) {
    MetricReport r;
    r.sample_count = samples.size() / dim;
    const FrechetResult f = frechet_from_moments(sample_moments(samples, dim), reference);
    r.frechet = f.value;
    r.frechet_regularized = f.regularized;
    const DiversityResult d = diversity(samples, dim, groups.empty() ? nullptr : &groups);
    r.diversity_mean_pairwise = d.mean_pairwise;
    r.intra_condition_diversity = d.intra;
    return r;
}

std::vector<std::pair<double, double>> router_accuracy_curve(const Router& router, const SyntheticDataset& data,
                                                             const std::vector<int>& labels, const Schedule& schedule,
                                                             const std::vector<double>& times, size_t probes,
                                                             uint64_t seed) {
    if (labels.size() != data.size()) fail(ErrorKind::Shape, "one label per point required");
    std::vector<std::pair<double, double>> curve;
    for (size_t ti = 0; ti < times.size(); ++ti) {
        Rng rng = Rng(seed).split("router-probe").split(static_cast<uint64_t>(ti));
        const AlphaSigma as = schedule.at(times[ti]);
        size_t hits = 0;
        for (size_t p = 0; p < probes; ++p) {
            const size_t i = rng.below(data.size());
            Vec x(static_cast<size_t>(data.dim));
            for (size_t j = 0; j < x.size(); ++j) x[j] = as.alpha * data.point(i)[j] + as.sigma * rng.normal();
            const Vec l = router.logits(x, times[ti]);
            const auto best = std::max_element(l.begin(), l.end()) - l.begin();
            hits += best == labels[i];
        }
        curve.emplace_back(times[ti], static_cast<double>(hits) / static_cast<double>(probes));
    }
    return curve;
}

double router_kl_to_oracle(const Router& router, const MixtureOracle& oracle, const std::vector<double>& times,
                           size_t probes, uint64_t seed) {
    const MixtureSpec& spec = oracle.spec();
    double total = 0.0;
    size_t count = 0;
    for (size_t ti = 0; ti < times.size(); ++ti) {
        Rng rng = Rng(seed).split("kl-probe").split(static_cast<uint64_t>(ti));
        const AlphaSigma as = oracle.schedule().at(times[ti]);
        for (size_t p = 0; p < probes; ++p) {
            double u = rng.uniform();
            size_t k = 0;
            while (k + 1 < spec.components() && u > spec.weights[k]) u -= spec.weights[k++];
            Vec x(oracle.dim());
            for (size_t j = 0; j < x.size(); ++j)
                x[j] = as.alpha * (spec.means[k][j] + std::sqrt(spec.variances[k][j]) * rng.normal()) +
                       as.sigma * rng.normal();
            const Vec lp = oracle.log_posterior(x, times[ti]);
            Vec lq = router.logits(x, times[ti]);
            const double mx = *std::max_element(lq.begin(), lq.end());
            double z = 0.0;
            for (double v : lq) z += std::exp(v - mx);
            for (double& v : lq) v -= mx + std::log(z);
            double kl = 0.0;
            for (size_t c = 0; c < lp.size(); ++c) kl += std::exp(lp[c]) * (lp[c] - lq[c]);
            total += kl;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

Study parse_study(std::string_view name) {
    if (name == "mono-vs-decentralized") return Study::MonoVsDecentralized;
    if (name == "strategy-sweep") return Study::StrategySweep;
    if (name == "threshold-sweep") return Study::ThresholdSweep;
    if (name == "mix-sweep") return Study::MixSweep;
    if (name == "warm-start") return Study::WarmStart;
    fail(ErrorKind::Usage, "unknown study '" + std::string(name) +
                               "' (mono-vs-decentralized, strategy-sweep, threshold-sweep, mix-sweep, warm-start)");
}

const char* study_name(Study study) noexcept {
    switch (study) {
        case Study::MonoVsDecentralized: return "mono-vs-decentralized";
        case Study::StrategySweep: return "strategy-sweep";
        case Study::ThresholdSweep: return "threshold-sweep";
        case Study::MixSweep: return "mix-sweep";
        case Study::WarmStart: return "warm-start";
    }
    return "?";
}

double flop_proxy(const TrainConfig& cfg, const ExpertModel& model) {
    return static_cast<double>(cfg.batch_size) * cfg.steps * static_cast<double>(model.layout().total());
}

ExpertSet network_experts(const std::vector<std::shared_ptr<const ExpertModel>>& models) {
    ExpertSet set;
    for (const auto& m : models) set.push_back(std::make_shared<NetworkExpert>(m));
    return set;
}

namespace {

struct StudyContext {
    const StudyConfig& cfg;
    SyntheticDataset data;
    Moments reference;
    int conditions = 0;
    std::vector<std::optional<int>> conds;
    std::vector<int> groups;
};

StudyContext make_context(const StudyConfig& cfg) {
    StudyContext ctx{cfg, generate_mixture(cfg.data_spec, cfg.points, stream(cfg.seed, "dataset")), {}, 0, {}, {}};
    const MixtureOracle oracle(cfg.data_spec, Schedule::linear());
    ctx.reference = {cfg.data_spec.dim(), oracle.data_mean(), oracle.data_covariance()};
    ctx.conditions = cfg.data_spec.condition_count();
    for (int c = 0; c < ctx.conditions; ++c)
        for (int g = 0; g < cfg.groups_per_condition; ++g)
            for (int s = 0; s < cfg.samples_per_group; ++s) {
                ctx.conds.emplace_back(c);
                ctx.groups.push_back(c * cfg.groups_per_condition + g);
            }
    return ctx;
}

TrainConfig expert_config(const StudyConfig& cfg, Objective objective, const Schedule& schedule, std::string_view tag) {
    TrainConfig t = cfg.expert;
    t.objective = objective;
    t.schedule = schedule;
    t.seed = stream(cfg.seed, tag);
    return t;
}

MetricReport sample_and_score(const StudyContext& ctx, const ExpertSet& experts, const Router& router,
                              const SamplerConfig& sampler) {
    SamplerConfig s = sampler;
    s.seed = stream(ctx.cfg.seed, "sampler");
    const Vec pts = terminal_points(sample_batch(experts, router, s, ctx.conds));
    return evaluate_samples(pts, ctx.reference.dim, ctx.groups, ctx.reference);
}

std::shared_ptr<const ExpertModel> load_required(const std::filesystem::path& path, const std::string& hint) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "missing checkpoint " + path.string() + " (" + hint + ")");
    return std::make_shared<const ExpertModel>(load_checkpoint(path));
}

// Clusters the study data and trains (or loads) K experts and a router.
DecentralizedSystem build_system(const StudyContext& ctx, const ObjectiveMix& mix) {
    const StudyConfig& cfg = ctx.cfg;
    DecentralizedSystem sys;
    sys.data = ctx.data;
    sys.mix = mix;
    sys.assignment = hierarchical_kmeans(ctx.data, cfg.m_fine, cfg.K, cfg.metric, stream(cfg.seed, "partition"));
    sys.experts.resize(static_cast<size_t>(cfg.K));
    if (cfg.checkpoint_dir) {
        for (int k = 0; k < cfg.K; ++k)
            sys.experts[static_cast<size_t>(k)] =
                load_required(*cfg.checkpoint_dir / ("expert_" + std::to_string(k) + ".hddm"),
                              "run train-expert --k " + std::to_string(k));
        sys.router = load_required(*cfg.checkpoint_dir / "router.hddm", "run train-router");
        return sys;
    }
    std::vector<double> flops(static_cast<size_t>(cfg.K), 0.0);
    parallel_for(static_cast<size_t>(cfg.K), [&](size_t k) {
        const TrainConfig tc =
            expert_config(cfg, mix.objectives[k], mix.schedules[k], "expert/" + std::to_string(k));
        auto model = std::make_shared<ExpertModel>(
            train_expert(shard(ctx.data, sys.assignment, static_cast<int>(k)), tc, ctx.conditions).model);
        flops[k] = flop_proxy(tc, *model);
        sys.experts[k] = std::move(model);
    });
    for (double f : flops) sys.flop_proxy += f;
    TrainConfig rc = cfg.router;
    rc.seed = stream(cfg.seed, "router");
    sys.router = std::make_shared<const ExpertModel>(train_router(ctx.data, sys.assignment, mix, rc).model);
    return sys;
}

void add_strategy_rows(StudyTable& table, const StudyContext& ctx, const DecentralizedSystem& sys) {
    const ExpertSet experts = network_experts(sys.experts);
    const NetworkRouter router(sys.router);
    std::vector<std::pair<std::string, Selection>> strategies{{"top1", Selection::top1()}, {"full", Selection::full()}};
    if (ctx.cfg.K >= 2) strategies.insert(strategies.begin() + 1, {"top2", Selection::top_k(2)});
    const std::vector<double> probe_times{0.05, 0.25, 0.5, 0.75, 0.95};
    const auto accuracy = router_accuracy_curve(router, sys.data, sys.assignment.assignment, Schedule::linear(),
                                                probe_times, 400, stream(ctx.cfg.seed, "router-accuracy"));
    for (const auto& [name, sel] : strategies) {
        SamplerConfig s = ctx.cfg.sampler;
        s.selection = sel;
        StudyRow row{name, sample_and_score(ctx, experts, router, s), sys.flop_proxy, {}, {}};
        row.metrics.router_accuracy_curve = accuracy;
        table.rows.push_back(std::move(row));
    }
}

void run_mono_vs_decentralized(StudyTable& table, const StudyContext& ctx) {
    const StudyConfig& cfg = ctx.cfg;
    TrainConfig mc = expert_config(cfg, Objective::Velocity, Schedule::linear(), "monolithic");
    mc.batch_size = cfg.expert.batch_size * cfg.K;
    auto mono = std::make_shared<const ExpertModel>(train_expert(ctx.data, mc, ctx.conditions).model);
    SamplerConfig s = cfg.sampler;
    s.selection = Selection::top1();
    table.rows.push_back({"monolithic", sample_and_score(ctx, network_experts({mono}), ConstantRouter(1), s),
                          flop_proxy(mc, *mono), {}, {}});
    add_strategy_rows(table, ctx, build_system(ctx, ObjectiveMix::with_ddpm(cfg.K, cfg.ddpm_ids, cfg.eps_schedule)));
}

void run_threshold_sweep(StudyTable& table, const StudyContext& ctx) {
    const StudyConfig& cfg = ctx.cfg;
    const TrainConfig ec = expert_config(cfg, Objective::Epsilon, cfg.eps_schedule, "threshold/eps");
    const TrainConfig fc = expert_config(cfg, Objective::Velocity, Schedule::linear(), "threshold/fm");
    std::vector<std::shared_ptr<const ExpertModel>> pair(2);
    parallel_for(2, [&](size_t i) {
        pair[i] = std::make_shared<const ExpertModel>(train_expert(ctx.data, i ? fc : ec, ctx.conditions).model);
    });
    const double flops = flop_proxy(ec, *pair[0]) + flop_proxy(fc, *pair[1]);
    const ExpertSet experts = network_experts(pair);
    const ConstantRouter router(2);
    for (double tau : cfg.taus) {
        SamplerConfig s = cfg.sampler;
        s.steps = cfg.threshold_steps;
        s.cfg_scale = cfg.threshold_cfg;
        s.selection = Selection::threshold(tau);
        table.rows.push_back({"tau=" + format_double(tau), sample_and_score(ctx, experts, router, s), flops, {}, {}});
    }
}

void run_mix_sweep(StudyTable& table, const StudyContext& ctx) {
    const StudyConfig& cfg = ctx.cfg;
    if (cfg.ddpm_ids.size() < 2) fail(ErrorKind::Config, "mix sweep needs at least two ddpm expert ids");
    const ClusterAssignment assignment =
        hierarchical_kmeans(ctx.data, cfg.m_fine, cfg.K, cfg.metric, stream(cfg.seed, "partition"));
    const std::vector<std::vector<int>> mixes{{}, {cfg.ddpm_ids[0]}, {cfg.ddpm_ids[0], cfg.ddpm_ids[1]}};
    // FM experts are shared by all rows; epsilon experts exist only for the ids used.
    std::vector<std::shared_ptr<const ExpertModel>> fm(static_cast<size_t>(cfg.K));
    std::vector<std::shared_ptr<const ExpertModel>> eps(static_cast<size_t>(cfg.K));
    std::vector<std::pair<int, bool>> jobs;
    for (int k = 0; k < cfg.K; ++k) jobs.emplace_back(k, false);
    for (int id : mixes.back()) jobs.emplace_back(id, true);
    parallel_for(jobs.size(), [&](size_t j) {
        const auto [k, is_eps] = jobs[j];
        const TrainConfig tc = is_eps ? expert_config(cfg, Objective::Epsilon, cfg.eps_schedule,
                                                      "expert/" + std::to_string(k) + "/eps")
                                      : expert_config(cfg, Objective::Velocity, Schedule::linear(),
                                                      "expert/" + std::to_string(k));
        auto m = std::make_shared<const ExpertModel>(train_expert(shard(ctx.data, assignment, k), tc, ctx.conditions).model);
        (is_eps ? eps : fm)[static_cast<size_t>(k)] = std::move(m);
    });
    for (const auto& ids : mixes) {
        const ObjectiveMix mix = ObjectiveMix::with_ddpm(cfg.K, ids, cfg.eps_schedule);
        std::vector<std::shared_ptr<const ExpertModel>> models;
        double flops = 0.0;
        for (int k = 0; k < cfg.K; ++k) {
            const bool is_eps = std::find(ids.begin(), ids.end(), k) != ids.end();
            models.push_back(is_eps ? eps[static_cast<size_t>(k)] : fm[static_cast<size_t>(k)]);
            flops += flop_proxy(cfg.expert, *models.back());
        }
        TrainConfig rc = cfg.router;
        rc.seed = stream(cfg.seed, "router");
        const NetworkRouter router(std::make_shared<const ExpertModel>(train_router(ctx.data, assignment, mix, rc).model));
        const std::string name = ids.empty() ? std::to_string(cfg.K) + "fm"
                                             : std::to_string(ids.size()) + "eps:" +
                                                   std::to_string(cfg.K - static_cast<int>(ids.size())) + "fm";
        table.rows.push_back({name, sample_and_score(ctx, network_experts(models), router, cfg.sampler), flops, {}, {}});
    }
}

void run_warm_start(StudyTable& table, const StudyContext& ctx) {
    const StudyConfig& cfg = ctx.cfg;
    TrainConfig pre = expert_config(cfg, Objective::Epsilon, cfg.eps_schedule, "warm/pretrain");
    pre.steps = cfg.warm_pretrain_steps;
    const ExpertModel pretrained = train_expert(ctx.data, pre, ctx.conditions).model;

    TrainConfig fm = expert_config(cfg, Objective::Velocity, Schedule::linear(), "warm/fm");
    if (fm.eval_interval <= 0) fm.eval_interval = std::max(1, fm.steps / 20);
    const ExpertModel converted =
        convert_checkpoint(pretrained, Objective::Velocity, Schedule::linear(), stream(cfg.seed, "warm/reinit"));
    TrainResult scratch = train_expert(ctx.data, fm, ctx.conditions);
    TrainResult warm = train_expert(ctx.data, fm, ctx.conditions, &converted);

    const double target = scratch.validation.back().loss;
    auto steps_to = [&](const TrainResult& r) -> std::optional<double> {
        for (const ValidationPoint& v : r.validation)
            if (v.loss <= target) return static_cast<double>(v.step);
        return std::nullopt;
    };
    SamplerConfig s = cfg.sampler;
    s.selection = Selection::top1();
    for (auto* r : {&scratch, &warm}) {
        auto model = std::make_shared<const ExpertModel>(r->model);
        StudyRow row{r == &scratch ? "scratch" : "converted",
                     sample_and_score(ctx, network_experts({model}), ConstantRouter(1), s),
                     flop_proxy(fm, *model), steps_to(*r), r->validation.back().loss};
        if (r == &warm) row.flop_proxy += flop_proxy(pre, pretrained);
        table.rows.push_back(std::move(row));
    }
}

}  // namespace

StudyTable run_study(Study study, const StudyConfig& cfg) {
    validate(cfg.data_spec);
    validate(cfg.expert);
    validate(cfg.router);
    if (cfg.samples_per_group < 2 || cfg.groups_per_condition < 1)
        fail(ErrorKind::Config, "studies need samples_per_group >= 2 and groups_per_condition >= 1");
    const StudyContext ctx = make_context(cfg);
    StudyTable table{study, cfg.seed, {}};
    switch (study) {
        case Study::MonoVsDecentralized: run_mono_vs_decentralized(table, ctx); break;
        case Study::StrategySweep:
            add_strategy_rows(table, ctx,
                              build_system(ctx, ObjectiveMix::with_ddpm(cfg.K, cfg.ddpm_ids, cfg.eps_schedule)));
            break;
        case Study::ThresholdSweep: run_threshold_sweep(table, ctx); break;
        case Study::MixSweep: run_mix_sweep(table, ctx); break;
        case Study::WarmStart: run_warm_start(table, ctx); break;
    }
    return table;
}

const char* const kStudyCsvHeader =
    "study,seed,config,frechet,frechet_regularized,diversity_mean_pairwise,intra_condition_diversity,sample_count,"
    "flop_proxy,steps_to_target,final_val_loss";

std::string study_csv(const std::vector<StudyTable>& tables) {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::ostringstream s;
    s << kStudyCsvHeader << "\n";
    for (const StudyTable& t : tables)
        for (const StudyRow& r : t.rows)
            s << study_name(t.study) << "," << t.seed << "," << r.config << "," << format_double(r.metrics.frechet)
              << "," << (r.metrics.frechet_regularized ? 1 : 0) << "," << format_double(r.metrics.diversity_mean_pairwise)
              << "," << opt(r.metrics.intra_condition_diversity) << "," << r.metrics.sample_count << ","
              << format_double(r.flop_proxy) << "," << opt(r.steps_to_target) << "," << opt(r.final_val_loss) << "\n";
    return s.str();
}

void write_study_csv(const std::vector<StudyTable>& tables, const std::filesystem::path& path) {
    atomic_write(path, study_csv(tables));
}

}  // namespace hddm
