// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Durable store of evaluation results, queried by the constraints that
// produced them.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evalbench/protocol.hpp"
#include "evalbench/registry.hpp"
#include "evalbench/scenarios.hpp"
#include "evalbench/semver.hpp"

namespace evalbench {

struct EvaluationResult {
    std::string evaluation_id;
    /// The full request, embedded so the result stays self-describing.
    OpenRequest request;
    AgentRecord agent;
    /// Unix milliseconds.
    std::int64_t started_at_ms = 0;
    std::int64_t finished_at_ms = 0;
    std::vector<RequestMeasurement> measurements;
    std::optional<std::string> trace_id;
    /// What actually ran, after constraint resolution.
    std::string model_name;
    SemVer model_version;
    std::string framework_name;
    SemVer framework_version;
    /// True when the logical clock produced the timings.
    bool virtual_clock = false;
    bool success = true;
    std::string error;

    friend bool operator==(const EvaluationResult&, const EvaluationResult&) = default;
};

void to_json(Json& j, const EvaluationResult& v);
void from_json(const Json& j, EvaluationResult& v);

/// Conjunction of optional criteria; the empty filter matches everything.
struct QueryFilter {
    std::optional<std::string> model_name;
    std::optional<VersionConstraint> model_version;
    std::optional<std::string> framework_name;
    std::optional<VersionConstraint> framework_version;
    std::optional<std::string> architecture;
    std::optional<ScenarioKind> scenario_kind;
    /// Inclusive bounds on started_at_ms.
    std::optional<std::int64_t> started_after_ms;
    std::optional<std::int64_t> started_before_ms;

    bool matches(const EvaluationResult& r) const;
};

void to_json(Json& j, const QueryFilter& v);
void from_json(const Json& j, QueryFilter& v);

/// Append-only JSON-lines files, one per UTC day of started_at, under a
/// directory; an in-memory index is rebuilt from them on open. Several
/// processes may share a directory: each append is a single write, and
/// reads first pick up lines other writers appended.
class EvalDb {
public:
    /// Creates the directory if needed and loads every results-*.jsonl file.
    /// A torn final line (crash mid-append) is cut off; any other malformed
    /// line throws Error(Errc::decode).
    explicit EvalDb(std::filesystem::path dir);

    /// Indexes complete lines appended since the last read.
    void refresh();

    /// Persists the result (flushed before returning) and returns its id.
    /// Throws Error(Errc::idempotent_noop) when the id is already stored and
    /// Error(Errc::validation) for an empty id or a successful result
    /// without measurements.
    std::string store(const EvaluationResult& result);

    /// Newest first by started_at; ties go to the later store.
    std::vector<EvaluationResult> query(const QueryFilter& filter = {}) const;
    std::optional<EvaluationResult> get(const std::string& id) const;
    std::size_t size() const;
    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// File holding results started on the given day ("results-YYYY-MM-DD.jsonl").
    static std::string file_name_for(std::int64_t started_at_ms);

private:
    using Entry = std::shared_ptr<const EvaluationResult>;
    void refresh_locked() const;
    void load_file(const std::filesystem::path& file) const;
    void index(Entry e) const;

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    // Reads pull in other writers' lines, so the index is mutable.
    mutable std::vector<Entry> entries_;  // store order
    mutable std::unordered_map<std::string, std::size_t> by_id_;
    /// Bytes consumed per file.
    mutable std::map<std::filesystem::path, std::uintmax_t> offsets_;
};

} // namespace evalbench
