// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "hddm/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "hddm/error.hpp"
#include "hddm/io.hpp"

namespace hddm {

namespace {

constexpr std::string_view kEmaPrefix = "ema.";
constexpr std::string_view kScheduleTable = "schedule.table";

class Writer {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_unsigned_v<T>);
        for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void put_f64(double v) { put(std::bit_cast<uint64_t>(v)); }
    void put_bytes(std::string_view s) { buf_.append(s); }

    void put_tensor(std::string_view name, const std::vector<uint32_t>& dims, ConstSpan values) {
        put(static_cast<uint16_t>(name.size()));
        put_bytes(name);
        put(static_cast<uint8_t>(dims.size()));
        for (uint32_t n : dims) put(n);
        for (double v : values) put_f64(v);
    }

    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get<uint64_t>()); }
    std::string_view get_bytes(size_t n) {
        need(n);
        std::string_view s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(size_t n) const {
        if (pos_ + n > bytes_.size()) fail(ErrorKind::Format, "checkpoint truncated");
    }

    std::string_view bytes_;
    size_t pos_ = 0;
};

struct RawTensor {
    std::vector<uint32_t> dims;
    Vec values;
};

uint16_t narrow16(int v, const char* what) {
    if (v < 0 || v > 0xFFFF) fail(ErrorKind::Shape, std::string(what) + " does not fit the checkpoint header");
    return static_cast<uint16_t>(v);
}

std::string dims_string(const std::vector<uint32_t>& dims) {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
    return s + "]";
}

}  // namespace

std::string encode_checkpoint(const ExpertModel& model) {
    const Architecture& a = model.arch();
    Writer w;
    w.put(static_cast<uint8_t>(model.objective()));
    w.put(static_cast<uint8_t>(model.schedule().kind()));
    w.put(narrow16(a.layers, "layer count"));
    w.put(narrow16(a.width, "width"));
    w.put(narrow16(a.data_dim, "data dimension"));
    w.put(narrow16(a.cond_count, "condition count"));
    w.put(static_cast<uint64_t>(model.step_count));

    const Schedule& sched = model.schedule();
    if (sched.kind() == ScheduleKind::VpGeneric) {
        Vec table;
        for (size_t i = 0; i < sched.knots().size(); ++i) {
            table.push_back(sched.knots()[i]);
            table.push_back(sched.alphas()[i]);
            table.push_back(sched.sigmas()[i]);
        }
        w.put_tensor(kScheduleTable, {static_cast<uint32_t>(sched.knots().size()), 3}, table);
    }
    for (bool ema : {false, true}) {
        const ConstSpan src = ema ? model.ema() : model.params();
        for (const TensorSpec& t : model.layout().tensors()) {
            const std::string name = ema ? std::string(kEmaPrefix) + t.name : t.name;
            w.put_tensor(name, t.dims, src.subspan(t.offset, t.size));
        }
    }
    const std::string payload = std::move(w.str());

    Writer out;
    out.put_bytes(std::string_view(kCheckpointMagic, 4));
    out.put(kCheckpointVersion);
    out.put_bytes(payload);
    out.put(crc32(payload));
    return std::move(out.str());
}

ExpertModel decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        fail(ErrorKind::Format, "not a checkpoint (bad magic bytes)");
    Reader head(bytes.substr(4, 4));
    const uint32_t version = head.get<uint32_t>();
    if (version != kCheckpointVersion)
        fail(ErrorKind::Version, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
    // Fixed header (18 bytes after the version) plus the trailing CRC.
    if (bytes.size() < 8 + 18 + 4) fail(ErrorKind::Format, "checkpoint truncated inside the header");
    const std::string_view payload = bytes.substr(8, bytes.size() - 12);
    Reader tail(bytes.substr(bytes.size() - 4));
    const uint32_t stored_crc = tail.get<uint32_t>();
    if (crc32(payload) != stored_crc) fail(ErrorKind::Checksum, "checkpoint CRC mismatch (file corrupted)");

    Reader r(payload);
    const auto objective_tag = r.get<uint8_t>();
    const auto schedule_tag = r.get<uint8_t>();
    if (objective_tag > 2) fail(ErrorKind::Format, "unknown objective tag " + std::to_string(objective_tag));
    if (schedule_tag > 2) fail(ErrorKind::Format, "unknown schedule tag " + std::to_string(schedule_tag));
    Architecture arch;
    arch.layers = r.get<uint16_t>();
    arch.width = r.get<uint16_t>();
    arch.data_dim = r.get<uint16_t>();
    arch.cond_count = r.get<uint16_t>();
    const uint64_t step_count = r.get<uint64_t>();

    std::map<std::string, RawTensor, std::less<>> tensors;
    while (r.remaining() > 0) {
        const auto name_len = r.get<uint16_t>();
        std::string name(r.get_bytes(name_len));
        const auto rank = r.get<uint8_t>();
        RawTensor t;
        size_t count = 1;
        for (uint8_t i = 0; i < rank; ++i) {
            t.dims.push_back(r.get<uint32_t>());
            count *= t.dims.back();
        }
        if (count * 8 > r.remaining()) fail(ErrorKind::Format, "tensor '" + name + "' truncated");
        t.values.resize(count);
        for (double& v : t.values) v = r.get_f64();
        if (!tensors.emplace(name, std::move(t)).second) fail(ErrorKind::Format, "duplicate tensor '" + name + "'");
    }

    auto head_w = tensors.find("head.w");
    if (head_w == tensors.end() || head_w->second.dims.size() != 2)
        fail(ErrorKind::Shape, "checkpoint lacks a rank-2 head.w tensor");
    arch.out_dim = static_cast<int>(head_w->second.dims[0]);

    Schedule schedule = Schedule::linear();
    switch (static_cast<ScheduleKind>(schedule_tag)) {
        case ScheduleKind::Linear: break;
        case ScheduleKind::Cosine: schedule = Schedule::cosine(); break;
        case ScheduleKind::VpGeneric: {
            auto it = tensors.find(kScheduleTable);
            if (it == tensors.end() || it->second.dims.size() != 2 || it->second.dims[1] != 3)
                fail(ErrorKind::Format, "tabulated schedule without a valid schedule.table tensor");
            Vec knots, alphas, sigmas;
            for (size_t i = 0; i < it->second.dims[0]; ++i) {
                knots.push_back(it->second.values[3 * i]);
                alphas.push_back(it->second.values[3 * i + 1]);
                sigmas.push_back(it->second.values[3 * i + 2]);
            }
            schedule = Schedule::tabulated(knots, alphas, sigmas);
            tensors.erase(it);
            break;
        }
    }

    ExpertModel model(arch, static_cast<Objective>(objective_tag), schedule, 0);
    for (bool ema : {false, true}) {
        std::span<double> dst = ema ? model.ema() : model.params();
        for (const TensorSpec& spec : model.layout().tensors()) {
            const std::string name = ema ? std::string(kEmaPrefix) + spec.name : spec.name;
            auto it = tensors.find(name);
            if (it == tensors.end()) fail(ErrorKind::Shape, "checkpoint is missing tensor '" + name + "'");
            if (it->second.dims != spec.dims)
                fail(ErrorKind::Shape, "tensor '" + name + "' has shape " + dims_string(it->second.dims) +
                                           ", expected " + dims_string(spec.dims));
            std::copy(it->second.values.begin(), it->second.values.end(),
                      dst.begin() + static_cast<std::ptrdiff_t>(spec.offset));
            tensors.erase(it);
        }
    }
    if (!tensors.empty()) fail(ErrorKind::Shape, "checkpoint has unexpected tensor '" + tensors.begin()->first + "'");
    model.step_count = step_count;
    model.reset_optimizer();
    return model;
}

void save_checkpoint(const ExpertModel& model, const std::filesystem::path& path) {
    atomic_write(path, encode_checkpoint(model));
}

ExpertModel load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "missing checkpoint " + path.string());
    try {
        return decode_checkpoint(read_file(path));
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

bool is_trunk_tensor(std::string_view name) {
    return !(name.starts_with("head.") || name.starts_with("cond.") || name.starts_with(kEmaPrefix));
}

CheckpointDiff diff_checkpoints(const ExpertModel& a, const ExpertModel& b) {
    CheckpointDiff diff;
    std::ostringstream report;
    diff.header_identical = a.arch() == b.arch() && a.objective() == b.objective() &&
                            a.schedule() == b.schedule() && a.step_count == b.step_count;
    report << "header: " << (diff.header_identical ? "identical" : "differs") << "\n";
    if (a.arch() != b.arch()) report << "  architecture differs\n";
    if (a.objective() != b.objective())
        report << "  objective " << objective_name(a.objective()) << " vs " << objective_name(b.objective()) << "\n";
    if (!(a.schedule() == b.schedule()))
        report << "  schedule " << a.schedule().name() << " vs " << b.schedule().name() << "\n";
    if (a.step_count != b.step_count) report << "  step_count " << a.step_count << " vs " << b.step_count << "\n";

    for (bool ema : {false, true}) {
        for (const TensorSpec& ta : a.layout().tensors()) {
            const std::string name = ema ? std::string(kEmaPrefix) + ta.name : ta.name;
            const TensorSpec* tb = b.layout().try_find(ta.name);
            TensorDiff td{name, false, 0.0};
            if (!tb || tb->dims != ta.dims) {
                td.shape_differs = true;
            } else {
                const ConstSpan va = (ema ? a.ema() : a.params()).subspan(ta.offset, ta.size);
                const ConstSpan vb = (ema ? b.ema() : b.params()).subspan(tb->offset, tb->size);
                bool same = true;
                for (size_t i = 0; i < va.size(); ++i) {
                    if (std::bit_cast<uint64_t>(va[i]) != std::bit_cast<uint64_t>(vb[i])) same = false;
                    td.max_abs_diff = std::max(td.max_abs_diff, std::abs(va[i] - vb[i]));
                }
                if (same) continue;
            }
            if (is_trunk_tensor(name)) diff.trunk_identical = false;
            diff.differing.push_back(td);
        }
    }
    report << "trunk: " << (diff.trunk_identical ? "identical" : "differs") << "\n";
    for (const auto& td : diff.differing) {
        report << "  " << td.name << ": ";
        if (td.shape_differs)
            report << "shape differs";
        else
            report << "max |diff| = " << td.max_abs_diff;
        report << (is_trunk_tensor(td.name) ? " (trunk)" : "") << "\n";
    }
    if (diff.differing.empty()) report << "all tensors bit-identical\n";
    diff.report = report.str();
    return diff;
}

}  // namespace hddm
