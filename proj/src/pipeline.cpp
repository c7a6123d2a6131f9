// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/pipeline.hpp"

#include <sstream>

#include "hddm/checkpoint.hpp"
#include "hddm/error.hpp"
#include "hddm/io.hpp"
#include "hddm/rng.hpp"

namespace hddm {

namespace {

uint64_t stream(uint64_t seed, std::string_view name) { return Rng(seed).split(name).key(); }

LoadedAssignment load_assignment(const ExperimentConfig& cfg) {
    const auto path = assignment_path(cfg);
    if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "missing " + path.string() + " (run cluster first)");
    LoadedAssignment loaded = read_assignment_csv(path);
    if (loaded.data.dim != cfg.dataset.dim)
        fail(ErrorKind::Config, path.string() + " has dimension " + std::to_string(loaded.data.dim) +
                                    ", config says " + std::to_string(cfg.dataset.dim));
    loaded.assignment.K = cfg.K;
    for (int a : loaded.assignment.assignment)
        if (a >= cfg.K) fail(ErrorKind::Config, path.string() + " was clustered with a larger K than the config");
    const int conditions = cfg.dataset.conditions();
    for (int c : loaded.data.conditions)
        if (c >= conditions) fail(ErrorKind::Config, path.string() + " holds conditions beyond the configured count");
    return loaded;
}

}  // namespace

std::filesystem::path assignment_path(const ExperimentConfig& cfg) { return cfg.out / "assignment.csv"; }

std::filesystem::path expert_path(const ExperimentConfig& cfg, int k) {
    return cfg.out / ("expert_" + std::to_string(k) + ".hddm");
}

std::filesystem::path router_path(const ExperimentConfig& cfg) { return cfg.out / "router.hddm"; }

std::string run_cluster(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out);
    const SyntheticDataset data = generate_mixture(cfg.dataset.spec(), cfg.dataset.points, stream(cfg.seed, "dataset"));
    const ClusterAssignment a = hierarchical_kmeans(data, cfg.m_fine, cfg.K, cfg.metric, stream(cfg.seed, "partition"));
    write_assignment_csv(data, a, assignment_path(cfg));
    write_centroids_csv(a.centroids, data.dim, cfg.out / "centroids.csv");
    write_centroids_csv(a.fine_centroids, data.dim, cfg.out / "fine_centroids.csv");
    std::vector<size_t> sizes(static_cast<size_t>(cfg.K), 0);
    for (int k : a.assignment) ++sizes[static_cast<size_t>(k)];
    std::ostringstream s;
    s << "clustered " << data.size() << " points into " << cfg.K << " shards (" << cfg.m_fine << " fine groups):";
    for (size_t n : sizes) s << " " << n;
    s << "\nwrote " << assignment_path(cfg).string() << "\n";
    return s.str();
}

std::string run_train_expert(const ExperimentConfig& cfg, int k) {
    if (k < 0 || k >= cfg.K) fail(ErrorKind::Usage, "expert index " + std::to_string(k) + " outside [0, K)");
    const LoadedAssignment loaded = load_assignment(cfg);
    const SyntheticDataset part = shard(loaded.data, loaded.assignment, k);
    const ObjectiveMix mix = cfg.mix();
    TrainConfig tc = cfg.expert;
    tc.objective = mix.objectives[static_cast<size_t>(k)];
    tc.schedule = mix.schedules[static_cast<size_t>(k)];
    tc.seed = stream(cfg.seed, "expert/" + std::to_string(k));
    const TrainResult r = train_expert(part, tc, cfg.dataset.conditions());
    save_checkpoint(r.model, expert_path(cfg, k));
    write_curve_csv(r.curve, cfg.out / ("expert_" + std::to_string(k) + "_curve.csv"));
    std::ostringstream s;
    s << "expert " << k << " (" << objective_name(tc.objective) << ", " << tc.schedule.name() << ") trained on "
      << part.size() << " points for " << tc.steps << " steps; validation loss "
      << format_double(r.validation.back().loss) << "\nwrote " << expert_path(cfg, k).string() << "\n";
    return s.str();
}

std::string run_train_router(const ExperimentConfig& cfg) {
    const LoadedAssignment loaded = load_assignment(cfg);
    TrainConfig rc = cfg.router;
    rc.seed = stream(cfg.seed, "router");
    const TrainResult r = train_router(loaded.data, loaded.assignment, cfg.mix(), rc);
    save_checkpoint(r.model, router_path(cfg));
    write_curve_csv(r.curve, cfg.out / "router_curve.csv");
    std::ostringstream s;
    s << "router over " << cfg.K << " experts trained for " << r.curve.size() << " steps; validation loss "
      << format_double(r.validation.back().loss) << "\nwrote " << router_path(cfg).string() << "\n";
    return s.str();
}

std::string run_sample(const ExperimentConfig& cfg) {
    std::vector<std::shared_ptr<const ExpertModel>> models;
    for (int k = 0; k < cfg.K; ++k) {
        const auto path = expert_path(cfg, k);
        if (!std::filesystem::exists(path))
            fail(ErrorKind::Io, "missing checkpoint " + path.string() + " (run train-expert --k " + std::to_string(k) + ")");
        models.push_back(std::make_shared<const ExpertModel>(load_checkpoint(path)));
    }
    if (!std::filesystem::exists(router_path(cfg)))
        fail(ErrorKind::Io, "missing checkpoint " + router_path(cfg).string() + " (run train-router)");
    const NetworkRouter router(std::make_shared<const ExpertModel>(load_checkpoint(router_path(cfg))));
    SamplerConfig sc = cfg.sampler;
    sc.seed = stream(cfg.seed, "sampler");
    std::vector<std::optional<int>> conds;
    for (int i = 0; i < sc.batch; ++i) conds.emplace_back(i % cfg.dataset.conditions());
    const std::vector<Trajectory> trajectories = sample_batch(network_experts(models), router, sc, conds);
    write_samples_csv(trajectories, cfg.out / "samples.csv");
    write_trajectory_audit_csv(trajectories, sc, cfg.out / "trajectory_audit.csv");
    std::ostringstream s;
    s << "sampled " << trajectories.size() << " trajectories (" << selection_name(sc.selection) << ", " << sc.steps
      << " steps, cfg " << format_double(sc.cfg_scale) << ", guidance after fusion)\nwrote "
      << (cfg.out / "samples.csv").string() << "\n";
    return s.str();
}

std::string run_evaluate(const ExperimentConfig& cfg, Study study) {
    std::filesystem::create_directories(cfg.out);
    std::vector<StudyTable> tables;
    for (int i = 0; i < cfg.evaluate.seeds; ++i) tables.push_back(run_study(study, cfg.study(cfg.seed + static_cast<uint64_t>(i))));
    const auto path = cfg.out / ("study_" + std::string(study_name(study)) + ".csv");
    write_study_csv(tables, path);
    return study_csv(tables) + "wrote " + path.string() + "\n";
}

std::string run_convert_checkpoint(const std::filesystem::path& src, const std::filesystem::path& dst,
                                   Objective objective, const Schedule& schedule, uint64_t reinit_seed) {
    const ExpertModel source = load_checkpoint(src);
    const ExpertModel converted = convert_checkpoint(source, objective, schedule, reinit_seed);
    save_checkpoint(converted, dst);
    return "converted " + src.string() + " (" + objective_name(source.objective()) + ", " + source.schedule().name() +
           ") to " + dst.string() + " (" + objective_name(objective) + ", " + schedule.name() + ")\n";
}

}  // namespace hddm
