// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/error.hpp"

#include <array>
#include <utility>

namespace evalbench {

namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 27> kNames{{
    {Errc::syntax, "SyntaxError"},
    {Errc::validation, "ValidationError"},
    {Errc::unsupported_step, "UnsupportedStep"},
    {Errc::unsupported_feature, "UnsupportedFeature"},
    {Errc::decode, "DecodeError"},
    {Errc::duplicate_agent_id, "DuplicateAgentId"},
    {Errc::unknown_lease, "UnknownLease"},
    {Errc::version_conflict, "VersionConflict"},
    {Errc::asset_missing, "AssetMissing"},
    {Errc::incompatible_manifest, "IncompatibleManifest"},
    {Errc::shape_mismatch, "ShapeMismatch"},
    {Errc::handle_closed, "HandleClosed"},
    {Errc::checksum_mismatch, "ChecksumMismatch"},
    {Errc::fetch_failed, "FetchFailed"},
    {Errc::pipeline, "PipelineError"},
    {Errc::empty_workload, "EmptyWorkload"},
    {Errc::agent_error, "AgentError"},
    {Errc::malformed_span, "MalformedSpan"},
    {Errc::unknown_trace, "UnknownTrace"},
    {Errc::idempotent_noop, "IdempotentNoop"},
    {Errc::empty_input, "EmptyInput"},
    {Errc::missing_baseline, "MissingBaseline"},
    {Errc::no_data, "NoData"},
    {Errc::no_capable_agent, "NoCapableAgent"},
    {Errc::not_found, "NotFound"},
    {Errc::transport, "TransportError"},
    {Errc::internal, "InternalError"},
}};

} // namespace

std::string_view errc_name(Errc code) noexcept {
    for (const auto& [c, name] : kNames) {
        if (c == code) return name;
    }
    return "InternalError";
}

Errc errc_from_name(std::string_view name) noexcept {
    for (const auto& [c, n] : kNames) {
        if (n == name) return c;
    }
    return Errc::internal;
}

} // namespace evalbench
