// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace hddm {

inline uint64_t splitmix64(uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ull));
}

inline uint64_t hash_name(std::string_view name) noexcept {
    uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Counter-based generator: the i-th draw of a stream is a pure function of
// (key, i), and child streams are derived by hashing a tag into the key.
// Results never depend on thread scheduling or on how many sibling streams
// exist.
class Rng {
public:
    explicit Rng(uint64_t key) noexcept : key_(splitmix64(key)) {}

    Rng split(std::string_view tag) const noexcept {
        return Rng(hash_combine(key_, hash_name(tag)));
    }
    Rng split(uint64_t index) const noexcept {
        return Rng(hash_combine(key_, index ^ 0xA5A5A5A5A5A5A5A5ull));
    }

    uint64_t next_u64() noexcept { return splitmix64(key_ + 0x2545F4914F6CDD1Dull * ++counter_); }

    // Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) noexcept {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    uint64_t key() const noexcept { return key_; }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hddm
