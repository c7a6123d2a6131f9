// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver for the decentralized diffusion pipeline. Talks to the
// library only through the C API.

#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "hddm.h"

namespace {

int report(hddm_status status) {
    if (status != HDDM_OK) {
        std::fprintf(stderr, "hddm: %s\n", hddm_last_error());
        return static_cast<int>(status);
    }
    std::fputs(hddm_last_output(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous decentralized diffusion at desk scale"};
    app.require_subcommand(1);
    app.set_version_flag("--version", hddm_version());

    std::string config_path, out_dir;
    std::optional<uint64_t> seed;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "global seed (overrides the config)");
        cmd->add_option("--out", out_dir, "output directory (overrides the config)");
    };

    auto* cluster = app.add_subcommand("cluster", "generate the dataset and write shard assignments");
    add_common(cluster);

    int k = -1;
    auto* train_expert = app.add_subcommand("train-expert", "train expert k on its shard");
    add_common(train_expert);
    train_expert->add_option("--k", k, "expert index")->required();

    auto* train_router = app.add_subcommand("train-router", "train the router over all shards");
    add_common(train_router);

    auto* sample = app.add_subcommand("sample", "router-weighted sampling from trained experts");
    add_common(sample);

    std::string study;
    auto* evaluate = app.add_subcommand("evaluate", "run a study and write its CSV");
    add_common(evaluate);
    evaluate->add_option("--study", study, "mono-vs-decentralized, strategy-sweep, threshold-sweep, mix-sweep, warm-start")
        ->required();

    std::string src, dst, objective, schedule = "linear";
    uint64_t reinit_seed = 0;
    auto* convert = app.add_subcommand("convert-checkpoint", "transfer a trunk into a new objective");
    convert->add_option("src", src, "source checkpoint")->required();
    convert->add_option("dst", dst, "destination checkpoint")->required();
    convert->add_option("--objective", objective, "epsilon or velocity")->required();
    convert->add_option("--schedule", schedule, "linear or cosine");
    convert->add_option("--seed", reinit_seed, "seed for the reinitialized head");

    std::string diff_a, diff_b;
    auto* diff = app.add_subcommand("diff-checkpoint", "compare two checkpoints tensor by tensor");
    diff->add_option("a", diff_a)->required();
    diff->add_option("b", diff_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(HDDM_ERR_USAGE);
    }

    hddm_run_options opts{};
    opts.config_path = config_path.empty() ? nullptr : config_path.c_str();
    opts.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    opts.has_seed = seed.has_value();
    opts.seed = seed.value_or(0);

    if (*cluster) return report(hddm_cmd_cluster(&opts));
    if (*train_expert) return report(hddm_cmd_train_expert(&opts, k));
    if (*train_router) return report(hddm_cmd_train_router(&opts));
    if (*sample) return report(hddm_cmd_sample(&opts));
    if (*evaluate) return report(hddm_cmd_evaluate(&opts, study.c_str()));
    if (*convert)
        return report(hddm_cmd_convert_checkpoint(src.c_str(), dst.c_str(), objective.c_str(), schedule.c_str(),
                                                  reinit_seed));
    if (*diff) {
        int same = 0;
        return report(hddm_cmd_diff_checkpoint(diff_a.c_str(), diff_b.c_str(), &same));
    }
    return static_cast<int>(HDDM_ERR_USAGE);
}
