// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm.h"

#include <exception>
#include <new>
#include <string>

#include "hddm/checkpoint.hpp"
#include "hddm/conversion.hpp"
#include "hddm/error.hpp"
#include "hddm/netcore.hpp"
#include "hddm/pipeline.hpp"
#include "hddm/schedule.hpp"

struct hddm_model {
    hddm::ExpertModel model;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_output;

hddm_status status_of(hddm::ErrorKind kind) {
    using hddm::ErrorKind;
    switch (kind) {
        case ErrorKind::Domain: return HDDM_ERR_DOMAIN;
        case ErrorKind::Shape: return HDDM_ERR_SHAPE;
        case ErrorKind::Numeric: return HDDM_ERR_NUMERIC;
        case ErrorKind::Spec: return HDDM_ERR_SPEC;
        case ErrorKind::Config: return HDDM_ERR_CONFIG;
        case ErrorKind::Usage: return HDDM_ERR_USAGE;
        case ErrorKind::Selection: return HDDM_ERR_SELECTION;
        case ErrorKind::Conversion: return HDDM_ERR_CONVERSION;
        case ErrorKind::Io: return HDDM_ERR_IO;
        case ErrorKind::Checksum: return HDDM_ERR_CHECKSUM;
        case ErrorKind::Version: return HDDM_ERR_VERSION;
        case ErrorKind::Format: return HDDM_ERR_FORMAT;
        case ErrorKind::Type: return HDDM_ERR_TYPE;
    }
    return HDDM_ERR_INTERNAL;
}

template <typename F>
hddm_status guard(F&& fn) {
    g_error.clear();
    try {
        fn();
        return HDDM_OK;
    } catch (const hddm::Error& e) {
        g_error = std::string(hddm::error_kind_name(e.kind())) + ": " + e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_error = "out of memory";
    } catch (const std::exception& e) {
        g_error = std::string("internal error: ") + e.what();
    } catch (...) {
        g_error = "internal error";
    }
    return HDDM_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
    if (!p) hddm::fail(hddm::ErrorKind::Usage, std::string(what) + " must not be null");
}

hddm::Schedule to_schedule(hddm_schedule s) {
    if (s == HDDM_LINEAR) return hddm::Schedule::linear();
    if (s == HDDM_COSINE) return hddm::Schedule::cosine();
    hddm::fail(hddm::ErrorKind::Usage, "unknown schedule tag " + std::to_string(static_cast<int>(s)));
}

hddm::ExperimentConfig resolve(const hddm_run_options* o) {
    require(o, "options");
    hddm::ExperimentConfig cfg = o->config_path ? hddm::load_config(o->config_path) : hddm::ExperimentConfig{};
    if (o->out_dir) cfg.out = o->out_dir;
    if (o->has_seed) cfg.seed = o->seed;
    return cfg;
}

}  // namespace

extern "C" {

const char* hddm_last_error(void) { return g_error.c_str(); }
const char* hddm_last_output(void) { return g_output.c_str(); }
const char* hddm_version(void) { return "1.0.0"; }

const char* hddm_status_name(hddm_status status) {
    switch (status) {
        case HDDM_OK: return "ok";
        case HDDM_ERR_DOMAIN: return "domain error";
        case HDDM_ERR_SHAPE: return "shape error";
        case HDDM_ERR_NUMERIC: return "numeric error";
        case HDDM_ERR_SPEC: return "spec error";
        case HDDM_ERR_CONFIG: return "config error";
        case HDDM_ERR_USAGE: return "usage error";
        case HDDM_ERR_SELECTION: return "selection error";
        case HDDM_ERR_CONVERSION: return "conversion error";
        case HDDM_ERR_IO: return "io error";
        case HDDM_ERR_CHECKSUM: return "checksum error";
        case HDDM_ERR_VERSION: return "version error";
        case HDDM_ERR_FORMAT: return "format error";
        case HDDM_ERR_TYPE: return "type error";
        case HDDM_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

hddm_status hddm_schedule_eval(hddm_schedule schedule, double t, double* alpha, double* sigma) {
    return guard([&] {
        require(alpha, "alpha");
        require(sigma, "sigma");
        const hddm::AlphaSigma as = to_schedule(schedule).at(t);
        *alpha = as.alpha;
        *sigma = as.sigma;
    });
}

hddm_status hddm_schedule_derivatives(hddm_schedule schedule, double t, double* dalpha, double* dsigma) {
    return guard([&] {
        require(dalpha, "dalpha");
        require(dsigma, "dsigma");
        const hddm::AlphaSigma d = to_schedule(schedule).derivatives(t);
        *dalpha = d.alpha;
        *dsigma = d.sigma;
    });
}

hddm_status hddm_time_index(double t, int* index) {
    return guard([&] {
        require(index, "index");
        *index = hddm::to_discrete_index(t);
    });
}

hddm_status hddm_eps_to_velocity(hddm_schedule schedule, double t, const double* x_t, const double* eps, size_t dim,
                                 int exact, double* velocity) {
    return guard([&] {
        require(x_t, "x_t");
        require(eps, "eps");
        require(velocity, "velocity");
        const hddm::ConversionConfig cfg = exact ? hddm::ConversionConfig::exact() : hddm::ConversionConfig{};
        const hddm::Vec v = hddm::eps_to_velocity(hddm::ConstSpan(x_t, dim), hddm::ConstSpan(eps, dim), t,
                                                  to_schedule(schedule), cfg);
        std::copy(v.begin(), v.end(), velocity);
    });
}

hddm_status hddm_model_create(int layers, int width, int data_dim, int cond_count, hddm_objective objective,
                              hddm_schedule schedule, uint64_t seed, hddm_model** out) {
    return guard([&] {
        require(out, "out");
        *out = nullptr;
        if (layers < 1 || width < 1 || data_dim < 1 || cond_count < 0)
            hddm::fail(hddm::ErrorKind::Usage, "model dimensions must be positive");
        if (objective == HDDM_CLASSIFIER) hddm::fail(hddm::ErrorKind::Usage, "create routers by training them");
        const hddm::Architecture arch{layers, width, data_dim, cond_count, data_dim};
        *out = new hddm_model{hddm::ExpertModel(arch, static_cast<hddm::Objective>(objective), to_schedule(schedule), seed)};
    });
}

hddm_status hddm_model_load(const char* path, hddm_model** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = nullptr;
        *out = new hddm_model{hddm::load_checkpoint(path)};
    });
}

hddm_status hddm_model_save(const hddm_model* model, const char* path) {
    return guard([&] {
        require(model, "model");
        require(path, "path");
        hddm::save_checkpoint(model->model, path);
    });
}

void hddm_model_free(hddm_model* model) { delete model; }

hddm_status hddm_model_info_get(const hddm_model* model, hddm_model_info* info) {
    return guard([&] {
        require(model, "model");
        require(info, "info");
        const hddm::ExpertModel& m = model->model;
        info->objective = static_cast<int>(m.objective());
        info->schedule = static_cast<int>(m.schedule().kind());
        info->layers = m.arch().layers;
        info->width = m.arch().width;
        info->data_dim = m.arch().data_dim;
        info->cond_count = m.arch().cond_count;
        info->out_dim = m.arch().out_dim;
        info->step_count = m.step_count;
        info->parameter_count = m.layout().total();
    });
}

hddm_status hddm_model_forward(const hddm_model* model, const double* x_t, size_t dim, double t, int cond, int use_ema,
                               double* out, size_t out_len) {
    return guard([&] {
        require(model, "model");
        require(x_t, "x_t");
        require(out, "out");
        const hddm::ExpertModel& m = model->model;
        if (out_len < static_cast<size_t>(m.arch().out_dim))
            hddm::fail(hddm::ErrorKind::Shape, "output buffer holds " + std::to_string(out_len) + " values, need " +
                                                   std::to_string(m.arch().out_dim));
        const std::optional<int> c = cond < 0 ? std::nullopt : std::optional<int>(cond);
        const hddm::Vec y = hddm::forward(m, hddm::ConstSpan(x_t, dim), t, c, use_ema != 0);
        std::copy(y.begin(), y.end(), out);
    });
}

hddm_status hddm_cmd_cluster(const hddm_run_options* options) {
    return guard([&] { g_output = hddm::run_cluster(resolve(options)); });
}

hddm_status hddm_cmd_train_expert(const hddm_run_options* options, int k) {
    return guard([&] { g_output = hddm::run_train_expert(resolve(options), k); });
}

hddm_status hddm_cmd_train_router(const hddm_run_options* options) {
    return guard([&] { g_output = hddm::run_train_router(resolve(options)); });
}

hddm_status hddm_cmd_sample(const hddm_run_options* options) {
    return guard([&] { g_output = hddm::run_sample(resolve(options)); });
}

hddm_status hddm_cmd_evaluate(const hddm_run_options* options, const char* study) {
    return guard([&] {
        require(study, "study");
        g_output = hddm::run_evaluate(resolve(options), hddm::parse_study(study));
    });
}

hddm_status hddm_cmd_convert_checkpoint(const char* src, const char* dst, const char* objective, const char* schedule,
                                        uint64_t seed) {
    return guard([&] {
        require(src, "src");
        require(dst, "dst");
        require(objective, "objective");
        require(schedule, "schedule");
        g_output = hddm::run_convert_checkpoint(src, dst, hddm::parse_objective(objective),
                                                hddm::parse_schedule(schedule), seed);
    });
}

hddm_status hddm_cmd_diff_checkpoint(const char* a, const char* b, int* trunk_identical) {
    return guard([&] {
        require(a, "a");
        require(b, "b");
        const hddm::CheckpointDiff d = hddm::diff_checkpoints(hddm::load_checkpoint(a), hddm::load_checkpoint(b));
        if (trunk_identical) *trunk_identical = d.trunk_identical ? 1 : 0;
        g_output = d.report;
    });
}

}  // extern "C"
