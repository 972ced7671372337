// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evalbench {

/// Error categories surfaced across module boundaries and over the wire.
enum class Errc {
    syntax,
    validation,
    unsupported_step,
    unsupported_feature,
    decode,
    duplicate_agent_id,
    unknown_lease,
    version_conflict,
    asset_missing,
    incompatible_manifest,
    shape_mismatch,
    handle_closed,
    checksum_mismatch,
    fetch_failed,
    pipeline,
    empty_workload,
    agent_error,
    malformed_span,
    unknown_trace,
    idempotent_noop,
    empty_input,
    missing_baseline,
    no_data,
    no_capable_agent,
    not_found,
    transport,
    internal,
};

std::string_view errc_name(Errc code) noexcept;
Errc errc_from_name(std::string_view name) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, std::string path = {})
        : std::runtime_error(path.empty() ? message : path + ": " + message),
          code_(code),
          path_(std::move(path)) {}

    Errc code() const noexcept { return code_; }
    /// Field path for validation errors, e.g. "inputs[0].steps[0]".
    const std::string& path() const noexcept { return path_; }

private:
    Errc code_;
    std::string path_;
};

} // namespace evalbench
