// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the installed command-line tool as separate processes.

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Run cli(const std::string& args, const fs::path& dir) {
    const std::string cmd = std::string(HDDM_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int raw = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(dir / "stdout.txt");
    r.err = slurp(dir / "stderr.txt");
    return r;
}

fs::path write_config(const fs::path& dir) {
    const fs::path p = dir / "exp.cfg";
    std::ofstream f(p);
    f << "[run]\nseed = 3\n[dataset]\npoints = 800\n[partition]\nK = 4\nm_fine = 16\n[experts]\nddpm_ids = 0, 3\n"
         "[train]\nsteps = 80\n[router]\nsteps = 40\n[sampler]\nsteps = 6\nbatch = 4\n"
         "[evaluate]\ngroups_per_condition = 2\nsamples_per_group = 3\n";
    return p;
}

}  // namespace

TEST_CASE("usage errors exit nonzero") {
    const fs::path dir = hddm::test::scratch_dir("cli_usage");
    CHECK(cli("", dir).code != 0);
    CHECK(cli("frobnicate", dir).code != 0);
    CHECK(cli("train-expert", dir).code != 0);  // --k is required
    CHECK(cli("cluster --config " + (dir / "missing.cfg").string(), dir).code != 0);
    CHECK(cli("--help", dir).code == 0);
    const Run v = cli("--version", dir);
    CHECK(v.code == 0);
    CHECK_FALSE(v.out.empty());
}

TEST_CASE("full command sequence") {
    const fs::path dir = hddm::test::scratch_dir("cli_full");
    const std::string cfg = "--config " + write_config(dir).string();
    const std::string out = " --out " + (dir / "out").string();

    const Run missing = cli("train-expert --k 0 " + cfg + out, dir);
    CHECK(missing.code == 9);  // io error
    CHECK(missing.err.find("run cluster first") != std::string::npos);

    const Run c = cli("cluster " + cfg + out, dir);
    REQUIRE(c.code == 0);
    CHECK(c.out.find("into 4 shards") != std::string::npos);
    const std::string assignment = slurp(dir / "out" / "assignment.csv");
    REQUIRE(cli("cluster " + cfg + out, dir).code == 0);
    CHECK(slurp(dir / "out" / "assignment.csv") == assignment);
    REQUIRE(cli("cluster " + cfg + out + " --seed 4", dir).code == 0);
    CHECK(slurp(dir / "out" / "assignment.csv") != assignment);
    REQUIRE(cli("cluster " + cfg + out, dir).code == 0);

    for (int k = 0; k < 4; ++k) REQUIRE(cli("train-expert --k " + std::to_string(k) + " " + cfg + out, dir).code == 0);
    CHECK(cli("train-expert --k 4 " + cfg + out, dir).code != 0);
    REQUIRE(cli("train-router " + cfg + out, dir).code == 0);
    const Run s = cli("sample " + cfg + out, dir);
    REQUIRE(s.code == 0);
    CHECK(fs::exists(dir / "out" / "samples.csv"));
    CHECK(fs::exists(dir / "out" / "trajectory_audit.csv"));

    const Run e = cli("evaluate --study strategy-sweep " + cfg + out, dir);
    REQUIRE(e.code == 0);
    const std::string csv = slurp(dir / "out" / "study_strategy-sweep.csv");
    CHECK(csv.starts_with("study,seed,config,frechet,frechet_regularized,diversity_mean_pairwise,"
                          "intra_condition_diversity,sample_count,flop_proxy,steps_to_target,final_val_loss\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(cli("evaluate --study nope " + cfg + out, dir).code != 0);

    // Conversion to the same objective keeps the trunk.
    const std::string e1 = (dir / "out" / "expert_1.hddm").string(), conv = (dir / "conv.hddm").string();
    REQUIRE(cli("convert-checkpoint " + e1 + " " + conv + " --objective velocity --schedule linear --seed 2", dir).code ==
            0);
    const Run d = cli("diff-checkpoint " + e1 + " " + conv, dir);
    REQUIRE(d.code == 0);
    CHECK(d.out.find("trunk: identical") != std::string::npos);
    CHECK(d.out.find("head.w") != std::string::npos);
    const Run d2 = cli("diff-checkpoint " + e1 + " " + (dir / "out" / "expert_2.hddm").string(), dir);
    CHECK(d2.out.find("trunk: differs") != std::string::npos);

    // A corrupted checkpoint is rejected with the checksum code.
    std::string bytes = slurp(e1);
    bytes[bytes.size() / 2] ^= 0x20;
    std::ofstream(dir / "broken.hddm", std::ios::binary) << bytes;
    const Run broken = cli("diff-checkpoint " + e1 + " " + (dir / "broken.hddm").string(), dir);
    CHECK(broken.code == 10);
    CHECK(broken.err.find("CRC") != std::string::npos);
}

TEST_CASE("experts trained as concurrent processes match sequential training") {
    const fs::path dir = hddm::test::scratch_dir("cli_parallel");
    const std::string cfg = "--config " + write_config(dir).string();
    for (const char* sub : {"seq", "par"})
        REQUIRE(cli("cluster " + cfg + " --out " + (dir / sub).string(), dir).code == 0);
    for (int k = 0; k < 4; ++k)
        REQUIRE(cli("train-expert --k " + std::to_string(k) + " " + cfg + " --out " + (dir / "seq").string(), dir)
                    .code == 0);
    // Reverse order, all at once.
    std::string script = "(";
    for (int k = 3; k >= 0; --k)
        script += std::string(HDDM_CLI_PATH) + " train-expert --k " + std::to_string(k) + " " + cfg + " --out " +
                  (dir / "par").string() + " > /dev/null & ";
    script += "wait)";
    REQUIRE(std::system(script.c_str()) == 0);
    for (int k = 0; k < 4; ++k) {
        const std::string name = "expert_" + std::to_string(k) + ".hddm";
        REQUIRE(fs::exists(dir / "par" / name));
        CHECK_MESSAGE(slurp(dir / "seq" / name) == slurp(dir / "par" / name), name);
    }
}
