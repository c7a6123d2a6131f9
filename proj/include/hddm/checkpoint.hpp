// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hddm/netcore.hpp"

namespace hddm {

// Binary layout, all integers little-endian:
//   "HDDM" | version u32 | header | tensors... | crc32 u32
//   header  = objective u8, schedule u8, L u16, d u16, data_dim u16, cond_count u16, step_count u64
//   tensor  = name_len u16, name bytes, rank u8, dims u32 x rank, f64 values
// Live tensors come first, then the EMA copies under "ema.<name>". A
// tabulated schedule is stored as "schedule.table" (n x 3: t, alpha, sigma)
// before the live tensors. The CRC covers every byte between the version
// field and the CRC itself.
inline constexpr char kCheckpointMagic[4] = {'H', 'D', 'D', 'M'};
inline constexpr uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ExpertModel& model);
ExpertModel decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ExpertModel& model, const std::filesystem::path& path);
ExpertModel load_checkpoint(const std::filesystem::path& path);

struct TensorDiff {
    std::string name;
    bool shape_differs = false;
    double max_abs_diff = 0.0;
};

struct CheckpointDiff {
    bool header_identical = true;
    bool trunk_identical = true;  // every tensor except head / cond table / EMA bit-equal
    std::vector<TensorDiff> differing;
    std::string report;
};

// Trunk = time embedding, input projection, modulation path, blocks.
bool is_trunk_tensor(std::string_view name);

CheckpointDiff diff_checkpoints(const ExpertModel& a, const ExpertModel& b);

}  // namespace hddm
