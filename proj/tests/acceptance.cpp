// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Optional arguments select criteria by number.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hddm/config.hpp"
#include "hddm/conversion.hpp"
#include "hddm/evaluation.hpp"
#include "hddm/netcore.hpp"
#include "hddm/objectives.hpp"
#include "hddm/oracle.hpp"
#include "hddm/rng.hpp"
#include "hddm/sampler.hpp"

using namespace hddm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double time_limit_s;  // <= 0 means no limit
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

constexpr int kSeeds = 5;
constexpr int kSeedsNeeded = 3;

// Independent closed forms for x_t = alpha x0 + sigma eps with x0 ~ N(mu, diag(v)).
struct GaussianPosterior {
    Vec ex0, eeps;
};

GaussianPosterior gaussian_posterior(const Vec& mu, const Vec& var, const Vec& x, double a, double s) {
    GaussianPosterior g;
    for (size_t i = 0; i < x.size(); ++i) {
        const double tot = a * a * var[i] + s * s;
        const double r = x[i] - a * mu[i];
        g.ex0.push_back(mu[i] + a * var[i] / tot * r);
        g.eeps.push_back(s / tot * r);
    }
    return g;
}

Vec random_point(Rng& rng, size_t dim, double scale) {
    Vec x(dim);
    for (double& v : x) v = scale * rng.normal();
    return x;
}

Outcome conversion_exactness() {
    const Vec mu{1.5, -0.7}, var{0.6, 1.3};
    MixtureSpec spec;
    spec.weights = {1.0};
    spec.means = {mu};
    spec.variances = {var};
    const Schedule lin = Schedule::linear();
    const MixtureOracle oracle(spec, lin);
    const ConversionConfig exact = ConversionConfig::exact();
    Rng rng(101);
    double worst = 0.0;
    const int probes = 10000;
    for (int i = 0; i < probes; ++i) {
        const double t = 0.01 + 0.94 * rng.uniform();
        const Vec x = random_point(rng, 2, 2.0);
        const Vec eps = oracle.optimal_eps_component(0, x, t);
        const Vec v = eps_to_velocity(x, eps, t, lin, exact);
        // Flow-matching velocity on the linear path: E[eps - x0 | x_t].
        const GaussianPosterior g = gaussian_posterior(mu, var, x, 1.0 - t, t);
        for (size_t j = 0; j < 2; ++j) worst = std::max(worst, std::abs(v[j] - (g.eeps[j] - g.ex0[j])));
    }
    return {worst < 1e-9, fmt("%d probes, max |v_conv - v_fm| = %.3e (limit 1e-9)", probes, worst)};
}

Outcome marginal_decomposition() {
    const MixtureSpec spec = ring_mixture(8, 4.0, 0.3);
    const Schedule lin = Schedule::linear();
    const MixtureOracle oracle(spec, lin);
    Rng rng(202);
    double worst = 0.0;
    const int probes = 10000;
    for (int i = 0; i < probes; ++i) {
        const double t = 0.01 + 0.98 * rng.uniform();
        const double a = 1.0 - t, s = t;
        const Vec x = random_point(rng, 2, 4.0);
        // Independent marginal: velocity from the analytic score of p_t.
        std::vector<double> logw(spec.components());
        std::vector<Vec> comp_score(spec.components());
        for (size_t k = 0; k < spec.components(); ++k) {
            double lw = std::log(spec.weights[k]);
            for (size_t j = 0; j < 2; ++j) {
                const double tot = a * a * spec.variances[k][j] + s * s;
                const double r = x[j] - a * spec.means[k][j];
                lw += -0.5 * std::log(2 * M_PI * tot) - 0.5 * r * r / tot;
                comp_score[k].push_back(-r / tot);
            }
            logw[k] = lw;
        }
        const double m = *std::max_element(logw.begin(), logw.end());
        double z = 0.0;
        for (double lw : logw) z += std::exp(lw - m);
        Vec score(2, 0.0);
        for (size_t k = 0; k < spec.components(); ++k)
            for (size_t j = 0; j < 2; ++j) score[j] += std::exp(logw[k] - m) / z * comp_score[k][j];
        // u = (a'/a) x + s (a' s / a - s') score with a' = -1, s' = 1.
        Vec expected(2);
        for (size_t j = 0; j < 2; ++j) expected[j] = -x[j] / a + s * (-s / a - 1.0) * score[j];

        const Vec post = oracle.posterior(x, t);
        Vec fused(2, 0.0);
        for (size_t k = 0; k < spec.components(); ++k) {
            const Vec vk = oracle.optimal_velocity_component(static_cast<int>(k), x, t);
            for (size_t j = 0; j < 2; ++j) fused[j] += post[k] * vk[j];
        }
        for (size_t j = 0; j < 2; ++j) {
            const double scale = std::max(1.0, std::abs(expected[j]));
            worst = std::max(worst, std::abs(fused[j] - expected[j]) / scale);
        }
    }
    return {worst < 1e-10, fmt("K=8, %d probes, max error = %.3e (limit 1e-10)", probes, worst)};
}

Outcome weighting_identities() {
    Rng rng(303);
    double eps_worst = 0.0, v_worst = 0.0, lib_worst = 0.0, profile_worst = 0.0;
    const size_t dim = 4;
    const Schedule cos = Schedule::cosine(), lin = Schedule::linear();
    for (int i = 1; i <= 99; ++i) {
        const double t = i / 100.0;
        for (const Schedule* sched : {&lin, &cos}) {
            const AlphaSigma as = sched->at(t);
            const double a = as.alpha, s = as.sigma;
            for (int n = 0; n < 1000; ++n) {
                const Vec x0 = random_point(rng, dim, 1.0), eps = random_point(rng, dim, 1.0);
                const Vec pred = random_point(rng, dim, 1.0);
                Vec x(dim);
                for (size_t j = 0; j < dim; ++j) x[j] = a * x0[j] + s * eps[j];
                // Prediction read as epsilon.
                double num = 0.0, den = 0.0;
                for (size_t j = 0; j < dim; ++j) {
                    const double x0_hat = (x[j] - s * pred[j]) / a;
                    num += (pred[j] - eps[j]) * (pred[j] - eps[j]);
                    den += (x0_hat - x0[j]) * (x0_hat - x0[j]);
                }
                eps_worst = std::max(eps_worst, std::abs(num / den / (a * a / (s * s)) - 1.0));
                if (sched != &cos) continue;
                // Prediction read as v = alpha eps - sigma x0.
                num = den = 0.0;
                for (size_t j = 0; j < dim; ++j) {
                    const double v = a * eps[j] - s * x0[j];
                    const double x0_hat = a * x[j] - s * pred[j];
                    num += (pred[j] - v) * (pred[j] - v);
                    den += (x0_hat - x0[j]) * (x0_hat - x0[j]);
                }
                v_worst = std::max(v_worst, std::abs(num / den / (1.0 / (s * s)) - 1.0));
            }
            const WeightingCheck w = empirical_weighting_check(*sched, t, 64, static_cast<int>(dim), rng);
            lib_worst = std::max(lib_worst, std::abs(w.eps_expected / (a * a / (s * s)) - 1.0));
            lib_worst = std::max(lib_worst, w.eps_max_rel_error);
            if (sched == &cos) {
                lib_worst = std::max(lib_worst, std::abs(w.v_expected * s * s - 1.0));
                lib_worst = std::max(lib_worst, w.v_max_rel_error);
            }
        }
    }
    std::vector<double> grid;
    for (int i = 1; i <= 99; ++i) grid.push_back(i / 100.0);
    const WeightingProfile p = weighting_profile(lin, grid);
    for (size_t i = 0; i < grid.size(); ++i)
        profile_worst = std::max(profile_worst, std::abs(p.ratio[i] * (1 - grid[i]) * (1 - grid[i]) - 1.0));
    const bool pass = eps_worst < 1e-9 && v_worst < 1e-9 && lib_worst < 1e-9 && profile_worst < 1e-12;
    return {pass, fmt("eps rel err %.2e, v rel err %.2e, library check %.2e (limits 1e-9); linear ratio %.2e "
                      "(limit 1e-12)",
                      eps_worst, v_worst, lib_worst, profile_worst)};
}

double batch_loss(const ExpertModel& m, const std::vector<BatchItem>& batch) {
    double total = 0;
    for (const auto& item : batch) {
        const Vec pred = forward(m, item.x, item.t, item.cond);
        double l = 0;
        for (size_t i = 0; i < pred.size(); ++i) l += (pred[i] - item.target[i]) * (pred[i] - item.target[i]);
        total += l / static_cast<double>(pred.size());
    }
    return total / static_cast<double>(batch.size());
}

Outcome gradient_check() {
    Architecture arch;
    arch.layers = 2;
    arch.width = 8;
    arch.data_dim = 2;
    arch.cond_count = 3;
    arch.out_dim = 2;
    ExpertModel m(arch, Objective::Velocity, Schedule::linear(), 3);
    Rng rng(404);
    for (double& p : m.params()) p = 0.5 * rng.normal();
    m.sync_ema();
    std::vector<BatchItem> batch;
    for (int i = 0; i < 4; ++i) {
        BatchItem b;
        b.x = random_point(rng, 2, 1.0);
        b.target = random_point(rng, 2, 1.0);
        b.t = rng.uniform();
        if (i % 3 != 0) b.cond = static_cast<int>(rng.below(3));
        batch.push_back(b);
    }
    const BackwardResult res = backward(m, batch, LossKind::MeanSquared);
    const double h = 1e-5;
    double worst = 0.0;
    std::string worst_name;
    for (const TensorSpec& ts : m.layout().tensors()) {
        for (size_t i = 0; i < ts.size; ++i) {
            double& p = m.params()[ts.offset + i];
            const double keep = p;
            p = keep + h;
            const double up = batch_loss(m, batch);
            p = keep - h;
            const double down = batch_loss(m, batch);
            p = keep;
            const double numeric = (up - down) / (2 * h);
            const double analytic = res.tape.grad[ts.offset + i];
            const double err = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            if (err > worst) {
                worst = err;
                worst_name = ts.name;
            }
        }
    }
    return {worst <= 1e-4, fmt("%zu tensors, %zu parameters, max rel error %.2e in %s (limit 1e-4)",
                               m.layout().tensors().size(), m.params().size(), worst, worst_name.c_str())};
}

Outcome parameter_savings() {
    Architecture arch;
    arch.layers = 28;
    arch.width = 1152;
    arch.data_dim = 2;
    arch.cond_count = 2;
    arch.out_dim = 2;
    const ParameterCount single = count_parameters(arch, ModulationVariant::Single);
    const ParameterCount per_block = count_parameters(arch, ModulationVariant::PerBlock);
    const double saving = 1.0 - static_cast<double>(single.conditioning) / static_cast<double>(per_block.conditioning);
    return {saving >= 0.25,
            fmt("L=28 d=1152 conditioning: single %lld, per-block %lld, saving %.1f%% (need >= 25%%); totals %lld vs "
                "%lld",
                static_cast<long long>(single.conditioning), static_cast<long long>(per_block.conditioning),
                100.0 * saving, static_cast<long long>(single.total), static_cast<long long>(per_block.total))};
}

Outcome zero_init() {
    Architecture arch;
    arch.cond_count = 2;
    const ExpertModel m(arch, Objective::Velocity, Schedule::linear(), 7);
    Rng rng(505);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Vec x = random_point(rng, 2, 3.0);
        const double t = rng.uniform();
        std::optional<int> cond;
        if (i % 3) cond = i % 2;
        for (bool ema : {false, true}) {
            const Vec out = forward(m, x, t, cond, ema);
            worst = std::max(worst, std::hypot(out[0], out[1]));
        }
    }
    return {worst <= 1e-6, fmt("100 inputs, max output norm %.3e (limit 1e-6)", worst)};
}

const StudyRow& row(const StudyTable& table, const std::string& name) {
    for (const StudyRow& r : table.rows)
        if (r.config == name) return r;
    throw std::runtime_error("missing study row " + name);
}

void print_table(const StudyTable& t) {
    for (const StudyRow& r : t.rows) {
        std::printf("      seed %llu %-12s frechet %8.4f  diversity %7.4f  intra %7.4f", static_cast<unsigned long long>(t.seed),
                    r.config.c_str(), r.metrics.frechet, r.metrics.diversity_mean_pairwise,
                    r.metrics.intra_condition_diversity.value_or(NAN));
        if (r.steps_to_target) std::printf("  steps_to_target %6.0f", *r.steps_to_target);
        if (r.final_val_loss) std::printf("  final_val_loss %.5f", *r.final_val_loss);
        std::printf("\n");
    }
    std::fflush(stdout);
}

template <typename Judge>
Outcome seed_study(Study study, Judge judge) {
    int passed = 0;
    std::string per_seed;
    for (int seed = 0; seed < kSeeds; ++seed) {
        const StudyTable t = run_study(study, ExperimentConfig{}.study(static_cast<uint64_t>(seed)));
        print_table(t);
        const bool ok = judge(t);
        passed += ok;
        per_seed += ok ? "+" : "-";
    }
    return {passed >= kSeedsNeeded, fmt("%d/%d seeds hold [%s] (need %d)", passed, kSeeds, per_seed.c_str(), kSeedsNeeded)};
}

Outcome mono_vs_decentralized() {
    return seed_study(Study::MonoVsDecentralized, [](const StudyTable& t) {
        const double top2 = row(t, "top2").metrics.frechet;
        return top2 <= row(t, "full").metrics.frechet && top2 <= row(t, "monolithic").metrics.frechet;
    });
}

Outcome threshold_sweep() {
    return seed_study(Study::ThresholdSweep, [](const StudyTable& t) {
        std::vector<double> d;
        for (const StudyRow& r : t.rows) d.push_back(r.metrics.diversity_mean_pairwise);
        const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
        const size_t arg = static_cast<size_t>(hi - d.begin());
        return *hi > *lo && arg > 0 && arg + 1 < d.size();
    });
}

Outcome mix_sweep() {
    return seed_study(Study::MixSweep, [](const StudyTable& t) {
        return row(t, "2eps:6fm").metrics.intra_condition_diversity.value_or(-1) >=
               row(t, "8fm").metrics.intra_condition_diversity.value_or(INFINITY);
    });
}

Outcome warm_start() {
    return seed_study(Study::WarmStart, [](const StudyTable& t) {
        const auto& conv = row(t, "converted").steps_to_target;
        const auto& scratch = row(t, "scratch").steps_to_target;
        return conv && scratch && *conv <= 0.9 * *scratch;
    });
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int shell(const std::string& cmd) {
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome concurrent_training() {
    const fs::path dir = fs::temp_directory_path() / "hddm_acceptance_concurrent";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "exp.cfg");
        f << "[run]\nseed = 0\n";
    }
    const std::string cli = HDDM_CLI_PATH, cfg = " --config " + (dir / "exp.cfg").string();
    const int K = ExperimentConfig{}.K;
    for (const char* sub : {"seq", "par"})
        if (shell(cli + " cluster" + cfg + " --out " + (dir / sub).string() + " > /dev/null") != 0)
            return {false, "cluster failed"};
    for (int k = 0; k < K; ++k)
        if (shell(cli + " train-expert --k " + std::to_string(k) + cfg + " --out " + (dir / "seq").string() +
                  " > /dev/null") != 0)
            return {false, fmt("sequential train-expert %d failed", k)};
    std::string script = "(";
    for (int k = K - 1; k >= 0; --k)
        script += cli + " train-expert --k " + std::to_string(k) + cfg + " --out " + (dir / "par").string() +
                  " > /dev/null & ";
    script += "wait)";
    if (shell(script) != 0) return {false, "concurrent train-expert failed"};
    int identical = 0;
    for (int k = 0; k < K; ++k) {
        const std::string name = "expert_" + std::to_string(k) + ".hddm";
        const std::string a = slurp(dir / "seq" / name), b = slurp(dir / "par" / name);
        identical += !a.empty() && a == b;
    }
    return {identical == K, fmt("%d/%d checkpoints byte-identical", identical, K)};
}

Outcome oracle_step_convergence() {
    const MixtureSpec spec = ExperimentConfig{}.dataset.spec();
    auto oracle = std::make_shared<const MixtureOracle>(spec, Schedule::linear());
    ExpertSet experts;
    for (size_t k = 0; k < spec.components(); ++k)
        experts.push_back(std::make_shared<OracleExpert>(oracle, static_cast<int>(k), Objective::Velocity));
    const OracleRouter router(oracle);
    Moments target;
    target.dim = spec.dim();
    target.mean = oracle->data_mean();
    target.cov = oracle->data_covariance();
    const std::vector<std::optional<int>> conds(4000);
    std::vector<double> fd;
    std::string trace;
    bool pass = true;
    for (int steps : {25, 50, 100, 200}) {
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.cfg_scale = 1.0;
        cfg.selection = Selection::full();
        cfg.seed = 606;
        const Vec pts = terminal_points(sample_batch(experts, router, cfg, conds));
        fd.push_back(frechet_from_moments(sample_moments(pts, spec.dim()), target).value);
        if (fd.size() > 1) pass = pass && fd.back() <= 1.1 * fd[fd.size() - 2];
        trace += fmt("%s%d:%.4f", trace.empty() ? "" : " ", steps, fd.back());
    }
    return {pass, "Frechet by steps " + trace + " (each <= 1.1x previous)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "conversion exactness", 1.0, conversion_exactness},
        {2, "marginal decomposition", 1.0, marginal_decomposition},
        {3, "weighting identities", 5.0, weighting_identities},
        {4, "finite-difference gradients", 30.0, gradient_check},
        {5, "single modulation saves parameters", 1.0, parameter_savings},
        {6, "zero-initialized output", 1.0, zero_init},
        {7, "top-2 beats full and monolithic", 1800.0, mono_vs_decentralized},
        {8, "threshold diversity peaks inside", 900.0, threshold_sweep},
        {9, "epsilon experts add diversity", 2700.0, mix_sweep},
        {10, "converted warm start is faster", 1200.0, warm_start},
        {11, "concurrent expert training is deterministic", 600.0, concurrent_training},
        {12, "oracle sampling converges in steps", 120.0, oracle_step_convergence},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failures = 0, ran = 0;
    for (const Criterion& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit_s > 0 && secs > c.time_limit_s) {
            o.pass = false;
            o.detail += fmt("; runtime over %.0f s", c.time_limit_s);
        }
        failures += !o.pass;
        std::printf("%s  %2d  %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
