// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hddm {

// Writes via a sibling temp file and rename so readers never see a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

uint32_t crc32(std::string_view bytes);

// Shortest round-trip decimal for a double.
std::string format_double(double v);

// Minimal CSV reader: first row is the header, numeric cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(std::string_view name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace hddm
