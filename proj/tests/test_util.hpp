// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "hddm/error.hpp"
#include "hddm/types.hpp"

namespace hddm::test {

// Runs `fn` and reports the error kind it throws, or nullopt-like -1.
template <typename Fn>
int thrown_kind(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return static_cast<int>(e.kind());
    }
    return -1;
}

#define CHECK_THROWS_KIND(expr, kind) \
    CHECK(::hddm::test::thrown_kind([&] { (void)(expr); }) == static_cast<int>(kind))

inline double max_abs_diff(ConstSpan a, ConstSpan b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("hddm_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace hddm::test
