// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "hddm/error.hpp"
#include "hddm/io.hpp"
#include "hddm/rng.hpp"

namespace hddm {

ExperimentConfig::ExperimentConfig() {
    // Desk-scale budgets; EMA decay shortened to match run length.
    expert.steps = 3000;
    expert.batch_size = 32;
    expert.lr = 2e-3;
    expert.warmup_steps = 30;
    expert.ema_decay = 0.995;
    router = expert;
    router.steps = 1500;
    router.weight_decay = 0.01;
    router.cosine_decay = true;
    router.cfg_drop_prob = 0.0;
    sampler.selection = Selection::top_k(2);
}

StudyConfig ExperimentConfig::study(uint64_t study_seed) const {
    StudyConfig s;
    s.data_spec = dataset.spec();
    s.points = dataset.points;
    s.K = K;
    s.m_fine = m_fine;
    s.metric = metric;
    s.ddpm_ids = ddpm_ids;
    s.eps_schedule = ddpm_schedule;
    s.expert = expert;
    s.router = router;
    s.sampler = sampler;
    s.samples_per_group = evaluate.samples_per_group;
    s.groups_per_condition = evaluate.groups_per_condition;
    s.taus = evaluate.taus;
    s.threshold_steps = evaluate.threshold_steps;
    s.threshold_cfg = evaluate.threshold_cfg;
    s.warm_pretrain_steps = evaluate.warm_pretrain_steps;
    s.seed = study_seed;
    if (evaluate.use_checkpoints) s.checkpoint_dir = out;
    return s;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.dataset.blobs < 1) fail(ErrorKind::Config, "dataset needs at least one blob");
    if (cfg.dataset.styles < 1) fail(ErrorKind::Config, "dataset needs at least one style");
    if (cfg.dataset.dim < 2) fail(ErrorKind::Config, "dataset dim must be at least 2");
    if (!(cfg.dataset.variance > 0.0)) fail(ErrorKind::Config, "dataset variance must be positive");
    if (cfg.dataset.points < 1) fail(ErrorKind::Config, "dataset needs points");
    if (cfg.K < 1) fail(ErrorKind::Config, "K must be at least 1");
    if (cfg.m_fine < cfg.K) fail(ErrorKind::Config, "m_fine must be at least K");
    if (static_cast<size_t>(cfg.m_fine) > cfg.dataset.points) fail(ErrorKind::Config, "m_fine exceeds the point count");
    cfg.mix();  // checks ddpm ids against K
    validate(cfg.expert);
    validate(cfg.router);
    validate(cfg.sampler, static_cast<size_t>(cfg.K));
    if (cfg.evaluate.seeds < 1) fail(ErrorKind::Config, "evaluate seeds must be at least 1");
}

namespace {

class Parser {
public:
    Parser(std::string source, int line) : source_(std::move(source)), line_(line) {}

    [[noreturn]] void error(const std::string& msg) const {
        fail(ErrorKind::Usage, source_ + ":" + std::to_string(line_) + ": " + msg);
    }

    template <typename T>
    T number(std::string_view v) const {
        T out{};
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size()) error("invalid number '" + std::string(v) + "'");
        return out;
    }

    bool boolean(std::string_view v) const {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        error("invalid boolean '" + std::string(v) + "'");
    }

    template <typename T>
    std::vector<T> list(std::string_view v) const {
        std::vector<T> out;
        if (v.empty()) return out;
        size_t start = 0;
        while (true) {
            const size_t comma = v.find(',', start);
            std::string_view item = v.substr(start, comma == std::string_view::npos ? v.npos : comma - start);
            while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
            while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
            out.push_back(number<T>(item));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return out;
    }

    // Runs fn, rewrapping library errors with the location.
    template <typename F>
    void wrap(F&& fn) const {
        try {
            fn();
        } catch (const Error& e) {
            error(e.what());
        }
    }

private:
    std::string source_;
    int line_;
};

constexpr std::string_view kSections[] = {"run",    "dataset", "partition",  "experts", "train",
                                          "router", "sampler", "conversion", "evaluate"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool train_key(TrainConfig& t, std::string_view key, std::string_view v, const Parser& p) {
    if (key == "steps") t.steps = p.number<int>(v);
    else if (key == "batch_size") t.batch_size = p.number<int>(v);
    else if (key == "lr") t.lr = p.number<double>(v);
    else if (key == "warmup_steps") t.warmup_steps = p.number<int>(v);
    else if (key == "ema_decay") t.ema_decay = p.number<double>(v);
    else if (key == "cfg_drop_prob") t.cfg_drop_prob = p.number<double>(v);
    else if (key == "clip_norm") t.clip_norm = p.number<double>(v);
    else if (key == "weight_decay") t.weight_decay = p.number<double>(v);
    else if (key == "cosine_decay") t.cosine_decay = p.boolean(v);
    else if (key == "layers") t.layers = p.number<int>(v);
    else if (key == "width") t.width = p.number<int>(v);
    else if (key == "holdout_fraction") t.holdout_fraction = p.number<double>(v);
    else if (key == "eval_interval") t.eval_interval = p.number<int>(v);
    else if (key == "validation_draws") t.validation_draws = p.number<int>(v);
    else return false;
    return true;
}

bool apply(ExperimentConfig& c, std::string_view section, std::string_view key, std::string_view v, const Parser& p) {
    if (section == "run") {
        if (key == "seed") c.seed = p.number<uint64_t>(v);
        else if (key == "out") c.out = std::string(v);
        else return false;
    } else if (section == "dataset") {
        if (key == "blobs") c.dataset.blobs = p.number<int>(v);
        else if (key == "styles") c.dataset.styles = p.number<int>(v);
        else if (key == "style_offset") c.dataset.style_offset = p.number<double>(v);
        else if (key == "radius") c.dataset.radius = p.number<double>(v);
        else if (key == "variance") c.dataset.variance = p.number<double>(v);
        else if (key == "dim") c.dataset.dim = p.number<int>(v);
        else if (key == "points") c.dataset.points = p.number<size_t>(v);
        else return false;
    } else if (section == "partition") {
        if (key == "K") c.K = p.number<int>(v);
        else if (key == "m_fine") c.m_fine = p.number<int>(v);
        else if (key == "metric") p.wrap([&] { c.metric = parse_metric(v); });
        else return false;
    } else if (section == "experts") {
        if (key == "ddpm_ids") c.ddpm_ids = p.list<int>(v);
        else if (key == "ddpm_schedule") p.wrap([&] { c.ddpm_schedule = parse_schedule(v); });
        else return false;
    } else if (section == "train") {
        return train_key(c.expert, key, v, p);
    } else if (section == "router") {
        return train_key(c.router, key, v, p);
    } else if (section == "sampler") {
        if (key == "steps") c.sampler.steps = p.number<int>(v);
        else if (key == "cfg_scale") c.sampler.cfg_scale = p.number<double>(v);
        else if (key == "selection") p.wrap([&] { c.sampler.selection = parse_selection(v); });
        else if (key == "batch") c.sampler.batch = p.number<int>(v);
        else return false;
    } else if (section == "conversion") {
        ConversionConfig& cc = c.sampler.conversion;
        if (key == "clamp_range") cc.clamp_range = p.number<double>(v);
        else if (key == "alpha_floor") cc.alpha_floor = p.number<double>(v);
        else if (key == "scaling") p.wrap([&] { cc.scaling = parse_scaling_mode(v); });
        else if (key == "clamp") cc.clamp_enabled = p.boolean(v);
        else if (key == "floor") cc.floor_enabled = p.boolean(v);
        else if (key == "scale_linear_schedule") cc.scale_linear_schedule = p.boolean(v);
        else if (key == "derivative_h") cc.derivative_h = p.number<double>(v);
        else return false;
    } else if (section == "evaluate") {
        EvaluateConfig& e = c.evaluate;
        if (key == "samples_per_group") e.samples_per_group = p.number<int>(v);
        else if (key == "groups_per_condition") e.groups_per_condition = p.number<int>(v);
        else if (key == "taus") e.taus = p.list<double>(v);
        else if (key == "threshold_steps") e.threshold_steps = p.number<int>(v);
        else if (key == "threshold_cfg") e.threshold_cfg = p.number<double>(v);
        else if (key == "warm_pretrain_steps") e.warm_pretrain_steps = p.number<int>(v);
        else if (key == "seeds") e.seeds = p.number<int>(v);
        else if (key == "use_checkpoints") e.use_checkpoints = p.boolean(v);
        else return false;
    } else {
        p.error("unknown section [" + std::string(section) + "]");
    }
    return true;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
    ExperimentConfig cfg;
    std::string section;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const Parser p(source, line_no);
        if (const size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') p.error("unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections))
                p.error("unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string_view::npos) p.error("expected key = value");
        if (section.empty()) p.error("key outside of a section");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        if (!apply(cfg, section, key, value, p)) p.error("unknown key '" + std::string(key) + "' in [" + section + "]");
    }
    try {
        validate(cfg);
    } catch (const Error& e) {
        fail(e.kind(), source + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        fail(ErrorKind::Usage, "cannot read config " + path.string() + ": " + e.what());
    }
    return parse_config(text, path.string());
}

}  // namespace hddm
