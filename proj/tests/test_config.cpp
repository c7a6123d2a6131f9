// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>
#include <sstream>

#include "hddm/checkpoint.hpp"
#include "hddm/config.hpp"
#include "hddm/pipeline.hpp"
#include "test_util.hpp"

using namespace hddm;
using hddm::test::max_abs_diff;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string error_text(const std::string& text) {
    try {
        parse_config(text, "exp.cfg");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Usage);
        return e.what();
    }
    return "";
}

ExperimentConfig quick(const std::filesystem::path& out, int K = 8) {
    ExperimentConfig c;
    c.dataset.points = 800;
    c.K = K;
    c.m_fine = 32;
    if (K < 4) c.ddpm_ids = {};
    c.expert.steps = 60;
    c.router.steps = 60;
    c.sampler.steps = 10;
    c.sampler.batch = 6;
    if (K < 2) c.sampler.selection = Selection::top1();
    c.out = out;
    return c;
}

}  // namespace

TEST_CASE("defaults describe the desk-scale experiment") {
    const ExperimentConfig c = parse_config("");
    CHECK(c.K == 8);
    CHECK(c.m_fine == 64);
    CHECK(c.ddpm_ids == std::vector<int>{0, 3});
    CHECK(c.ddpm_schedule == Schedule::cosine());
    CHECK(c.dataset.blobs == 8);
    CHECK(c.dataset.conditions() == 2);
    CHECK(c.dataset.spec().components() == 16);
    CHECK(c.expert.ema_decay == 0.995);
    CHECK(c.expert.cfg_drop_prob == 0.1);
    CHECK(c.router.cfg_drop_prob == 0.0);
    CHECK(c.sampler.selection.kind == Selection::Kind::TopK);
    CHECK(c.sampler.selection.k == 2);
    CHECK(c.evaluate.groups_per_condition == 20);
    const StudyConfig s = c.study(7);
    CHECK(s.seed == 7);
    CHECK(s.K == 8);
    CHECK_FALSE(s.checkpoint_dir.has_value());
}

TEST_CASE("config sections and keys") {
    const ExperimentConfig c = parse_config(R"(# comment
[run]
seed = 42
out = /tmp/run   # trailing comment

[dataset]
blobs = 4
styles = 1
points = 500

[partition]
K = 4
m_fine = 16
metric = cosine

[experts]
ddpm_ids = 1, 2
ddpm_schedule = linear

[train]
steps = 10
lr = 0.01
cosine_decay = true

[router]
steps = 20

[sampler]
selection = threshold:0.4:reversed
cfg_scale = 3.5

[conversion]
clamp = false
scaling = sigmoid

[evaluate]
taus = 0.1, 0.9
seeds = 5
use_checkpoints = yes
)",
                                            "exp.cfg");
    CHECK(c.seed == 42);
    CHECK(c.out == "/tmp/run");
    CHECK(c.dataset.blobs == 4);
    CHECK(c.dataset.points == 500);
    CHECK(c.K == 4);
    CHECK(c.metric == Metric::Cosine);
    CHECK(c.ddpm_ids == std::vector<int>{1, 2});
    CHECK(c.ddpm_schedule == Schedule::linear());
    CHECK(c.expert.steps == 10);
    CHECK(c.expert.lr == 0.01);
    CHECK(c.expert.cosine_decay);
    CHECK(c.router.steps == 20);
    CHECK(c.sampler.selection.reversed);
    CHECK(c.sampler.selection.tau == 0.4);
    CHECK(c.sampler.cfg_scale == 3.5);
    CHECK_FALSE(c.sampler.conversion.clamp_enabled);
    CHECK(c.sampler.conversion.scaling == ScalingMode::Sigmoid);
    CHECK(c.evaluate.taus == std::vector<double>{0.1, 0.9});
    CHECK(c.evaluate.seeds == 5);
    REQUIRE(c.study(0).checkpoint_dir.has_value());
    CHECK(*c.study(0).checkpoint_dir == "/tmp/run");
    CHECK(c.mix().ddpm_ids() == std::vector<int>{1, 2});
}

TEST_CASE("config errors name the file and line") {
    CHECK(error_text("[run]\nseed = x\n").starts_with("exp.cfg:2: invalid number 'x'"));
    CHECK(error_text("\n\n[nope]\n").starts_with("exp.cfg:3: unknown section [nope]"));
    CHECK(error_text("[train]\nsteps = 3\ncolour = red\n").starts_with("exp.cfg:3: unknown key 'colour' in [train]"));
    CHECK(error_text("seed = 1\n").starts_with("exp.cfg:1: key outside of a section"));
    CHECK(error_text("[run\n").starts_with("exp.cfg:1: unterminated section header"));
    CHECK(error_text("[run]\nseed\n").starts_with("exp.cfg:2: expected key = value"));
    CHECK(error_text("[sampler]\nselection = best\n").starts_with("exp.cfg:2: unknown selection"));
    CHECK(error_text("[train]\ncosine_decay = maybe\n").starts_with("exp.cfg:2: invalid boolean"));

    // Whole-config validation names the source.
    try {
        parse_config("[partition]\nK = 8\nm_fine = 4\n", "exp.cfg");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).starts_with("exp.cfg: m_fine must be at least K"));
    }
    CHECK_THROWS_KIND(parse_config("[experts]\nddpm_ids = 9\n"), ErrorKind::Config);
    CHECK_THROWS_KIND(parse_config("[sampler]\nselection = top9\n"), ErrorKind::Config);
    CHECK_THROWS_KIND(load_config("/nonexistent/hddm.cfg"), ErrorKind::Usage);
}

TEST_CASE("load_config reads a file") {
    const auto dir = hddm::test::scratch_dir("config_file");
    {
        std::ofstream f(dir / "a.cfg");
        f << "[run]\nseed = 9\n[bogus]\n";
    }
    try {
        load_config(dir / "a.cfg");
        FAIL("expected a usage error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("a.cfg:3:") != std::string::npos);
    }
    {
        std::ofstream f(dir / "b.cfg");
        f << "[run]\nseed = 9\n";
    }
    CHECK(load_config(dir / "b.cfg").seed == 9);
}

TEST_CASE("cluster command: shards, K = 1, byte-identical reruns") {
    const auto dir = hddm::test::scratch_dir("pipeline_cluster");
    ExperimentConfig c = quick(dir / "a");
    run_cluster(c);
    const std::string first = slurp(assignment_path(c));
    const LoadedAssignment la = read_assignment_csv(assignment_path(c));
    std::set<int> shards(la.assignment.assignment.begin(), la.assignment.assignment.end());
    CHECK(shards.size() == 8);
    for (int k = 0; k < 8; ++k) CHECK(shard(la.data, la.assignment, k).size() > 0);
    run_cluster(c);
    CHECK(slurp(assignment_path(c)) == first);
    CHECK(slurp(c.out / "centroids.csv").size() > 0);

    ExperimentConfig one = quick(dir / "one", 1);
    run_cluster(one);
    const LoadedAssignment l1 = read_assignment_csv(assignment_path(one));
    CHECK(l1.data.size() == 800);
    const SyntheticDataset s = shard(l1.data, l1.assignment, 0);
    CHECK(s.points == l1.data.points);

    ExperimentConfig other = c;
    other.seed = 1;
    other.out = dir / "b";
    run_cluster(other);
    CHECK(slurp(assignment_path(other)) != first);
}

TEST_CASE("pipeline end to end") {
    const auto dir = hddm::test::scratch_dir("pipeline_full");
    ExperimentConfig c = quick(dir / "run", 4);
    c.ddpm_ids = {1};
    CHECK_THROWS_KIND(run_train_expert(c, 0), ErrorKind::Io);
    CHECK_THROWS_KIND(run_train_expert(c, 4), ErrorKind::Usage);
    run_cluster(c);
    for (int k : {3, 1, 0, 2}) CHECK(run_train_expert(c, k).find("expert " + std::to_string(k)) == 0);
    CHECK_THROWS_KIND(run_sample(c), ErrorKind::Io);  // router missing
    run_train_router(c);
    CHECK(load_checkpoint(expert_path(c, 1)).objective() == Objective::Epsilon);
    CHECK(load_checkpoint(expert_path(c, 0)).objective() == Objective::Velocity);
    CHECK(load_checkpoint(router_path(c)).objective() == Objective::Classifier);
    CHECK(std::filesystem::exists(c.out / "expert_2_curve.csv"));

    run_sample(c);
    const std::string samples = slurp(c.out / "samples.csv");
    CHECK(std::count(samples.begin(), samples.end(), '\n') == 1 + 6);
    const std::string audit = slurp(c.out / "trajectory_audit.csv");
    CHECK(audit.find(",top2,post_fusion") != std::string::npos);

    // Same config in a second directory reproduces every artifact.
    ExperimentConfig again = c;
    again.out = dir / "again";
    run_cluster(again);
    for (int k = 0; k < 4; ++k) run_train_expert(again, k);
    run_train_router(again);
    run_sample(again);
    for (const char* f : {"assignment.csv", "expert_0.hddm", "expert_1.hddm", "expert_3.hddm", "router.hddm",
                          "samples.csv", "trajectory_audit.csv"})
        CHECK_MESSAGE(slurp(c.out / f) == slurp(again.out / f), f);

    run_convert_checkpoint(expert_path(c, 0), c.out / "conv.hddm", Objective::Velocity, Schedule::linear(), 5);
    const CheckpointDiff d = diff_checkpoints(load_checkpoint(expert_path(c, 0)), load_checkpoint(c.out / "conv.hddm"));
    CHECK(d.trunk_identical);
    CHECK_FALSE(d.differing.empty());

    // Assignments must match the configured K.
    ExperimentConfig smaller = c;
    smaller.K = 2;
    smaller.ddpm_ids = {};
    smaller.sampler.selection = Selection::top1();
    CHECK_THROWS_KIND(run_train_expert(smaller, 0), ErrorKind::Config);
    ExperimentConfig bigger = c;
    bigger.K = 6;
    CHECK_THROWS_KIND(run_train_expert(bigger, 5), ErrorKind::Config);  // empty shard
}
