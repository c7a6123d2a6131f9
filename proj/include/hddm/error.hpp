// Copyright (C) 2026 The HDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hddm {

// Categories map one-to-one onto the C API status codes.
enum class ErrorKind {
    Domain,
    Shape,
    Numeric,
    Spec,
    Config,
    Usage,
    Selection,
    Conversion,
    Io,
    Checksum,
    Version,
    Format,
    Type,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace hddm
