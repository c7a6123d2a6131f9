// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/io.hpp"

#include <zlib.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hddm/error.hpp"

namespace hddm {

const char* error_kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Domain: return "domain error";
        case ErrorKind::Shape: return "shape error";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::Spec: return "spec error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Usage: return "usage error";
        case ErrorKind::Selection: return "selection error";
        case ErrorKind::Conversion: return "conversion error";
        case ErrorKind::Io: return "io error";
        case ErrorKind::Checksum: return "checksum error";
        case ErrorKind::Version: return "version error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Type: return "type error";
    }
    return "error";
}

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::Io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

uint32_t crc32(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<uint32_t>(crc);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int CsvTable::column(std::string_view name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    CsvTable table;
    std::string line;
    size_t line_no = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (table.header.empty()) {
            table.header = split(line);
            continue;
        }
        std::vector<double> row;
        for (const auto& cell : split(line)) {
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
                fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != table.header.size())
            fail(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(table.header.size()) + " columns");
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace hddm
