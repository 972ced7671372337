// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Span model, timeline assembly and the tracing service.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evalbench/net.hpp"
#include "evalbench/protocol.hpp"

namespace evalbench {

enum class ClockDomain { wall, virtual_time };
std::string_view to_string(ClockDomain d) noexcept;
std::optional<ClockDomain> clock_domain_from(std::string_view s) noexcept;

/// Containment tolerance: 1 us on the wall clock, exact on the logical clock.
constexpr std::int64_t containment_epsilon_ns(ClockDomain d) noexcept {
    return d == ClockDomain::wall ? 1000 : 0;
}

struct TraceSpan {
    /// 32 lowercase hex digits.
    std::string trace_id;
    /// 16 lowercase hex digits.
    std::string span_id;
    std::optional<std::string> parent_span_id;
    std::string name;
    SpanLevel level = SpanLevel::model;
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    ClockDomain clock_domain = ClockDomain::wall;
    std::map<std::string, std::string> attributes;

    std::int64_t duration_ns() const noexcept { return end_ns - start_ns; }
    friend bool operator==(const TraceSpan&, const TraceSpan&) = default;
};

void to_json(Json& j, const TraceSpan& v);
void from_json(const Json& j, TraceSpan& v);

/// Throws Error(Errc::malformed_span).
void validate_span(const TraceSpan& s);

/// Deterministic 64-bit span id (FNV-1a) for a key path such as "item:5/decode".
std::string span_id_for(std::string_view key);
/// Fresh random 128-bit trace id.
std::string new_trace_id();

struct TimelineNode {
    TraceSpan span;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    /// Interval leaves the parent's interval by more than the tolerance.
    bool overflow = false;
    /// Parent id never arrived; attached under the synthetic root.
    bool orphan = false;
    /// The "unparented" placeholder root.
    bool synthetic = false;

    friend bool operator==(const TimelineNode&, const TimelineNode&) = default;
};

/// Span forest for one trace. Nodes are stored sorted by (start, span_id),
/// so assembly does not depend on arrival order.
struct Timeline {
    std::string trace_id;
    ClockDomain clock_domain = ClockDomain::wall;
    std::vector<TimelineNode> nodes;
    std::vector<std::size_t> roots;
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;

    std::int64_t total_duration_ns() const noexcept { return end_ns - start_ns; }
    /// Real spans only, the synthetic root excluded.
    std::size_t span_count() const noexcept;
    const TimelineNode* find(std::string_view span_id) const;

    friend bool operator==(const Timeline&, const Timeline&) = default;
};

/// Nested JSON export for clients and the UI.
Json timeline_to_json(const Timeline& t);

/// Builds the forest. All spans must share trace_id and clock domain.
Timeline assemble_spans(const std::string& trace_id, std::vector<TraceSpan> spans);

/// Keeps spans captured at `level`; children of removed spans move up to the
/// nearest retained ancestor.
Timeline filter_level(const Timeline& t, TraceLevel level);

struct CorrelatedGroup {
    TraceSpan parent;
    std::vector<TraceSpan> children;
};

struct Correlation {
    /// One group per parent-level span, ordered by start.
    std::vector<CorrelatedGroup> groups;
    /// Children that overlap no parent.
    std::vector<TraceSpan> unassigned;
};

/// Assigns each child-level span to the parent-level span it overlaps most.
/// Ties go to the earlier parent.
Correlation correlate(const Timeline& t, SpanLevel parent_level, SpanLevel child_level);

/// Longest span; ties broken by name. nullopt for an empty list.
std::optional<TraceSpan> dominant(const std::vector<TraceSpan>& spans);

// ---------------------------------------------------------------------------
// Store and transport

struct PublishResult {
    std::size_t accepted = 0;
    std::size_t duplicates = 0;
    /// (index in batch, reason)
    std::vector<std::pair<std::size_t, std::string>> rejected;
};

/// Append-only span store, optionally mirrored to a JSON-lines snapshot.
class TraceStore {
public:
    explicit TraceStore(std::optional<std::filesystem::path> snapshot = std::nullopt);

    /// Malformed spans are rejected individually; re-publishing a known
    /// (trace_id, span_id) is a no-op.
    PublishResult publish(const std::vector<TraceSpan>& spans);
    /// Throws Error(Errc::unknown_trace).
    Timeline assemble(const std::string& trace_id) const;
    std::vector<TraceSpan> spans(const std::string& trace_id) const;
    std::size_t span_count(const std::string& trace_id) const;
    std::vector<std::string> trace_ids() const;

private:
    struct TraceData {
        ClockDomain domain = ClockDomain::wall;
        std::map<std::string, TraceSpan> spans;
    };
    PublishResult publish_locked(const std::vector<TraceSpan>& spans, bool persist);

    mutable std::mutex mu_;
    std::map<std::string, TraceData> traces_;
    std::optional<std::filesystem::path> snapshot_path_;
    std::ofstream snapshot_;
};

/// Destination for recorded spans.
class SpanSink {
public:
    virtual ~SpanSink() = default;
    virtual void publish(std::vector<TraceSpan> spans) = 0;
    /// Blocks until everything handed to publish() has been delivered or dropped.
    virtual void flush() {}
};

class StoreSink final : public SpanSink {
public:
    explicit StoreSink(std::shared_ptr<TraceStore> store) : store_(std::move(store)) {}
    void publish(std::vector<TraceSpan> spans) override { store_->publish(spans); }

private:
    std::shared_ptr<TraceStore> store_;
};

/// Fire-and-forget buffering in front of another sink. Delivery failures are
/// counted, never raised to the caller.
class AsyncPublisher final : public SpanSink {
public:
    explicit AsyncPublisher(std::shared_ptr<SpanSink> downstream);
    ~AsyncPublisher() override;
    void publish(std::vector<TraceSpan> spans) override;
    void flush() override;
    std::size_t failures() const;

private:
    void run();

    std::shared_ptr<SpanSink> downstream_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::vector<TraceSpan>> queue_;
    bool busy_ = false;
    bool stopping_ = false;
    std::size_t failures_ = 0;
    std::thread worker_;
};

/// Per-evaluation span recorder. Thread-safe; buffers and forwards to a sink.
class SpanRecorder {
public:
    SpanRecorder(std::string trace_id, TraceLevel level, ClockDomain domain, std::shared_ptr<SpanSink> sink);

    bool enabled(SpanLevel level) const noexcept;
    ClockDomain domain() const noexcept { return domain_; }
    const std::string& trace_id() const noexcept { return trace_id_; }

    /// Records a span whose id derives from `key`; returns that id even when
    /// the level is not captured, so children can still name their parent.
    std::string record(std::string_view key, std::string name, SpanLevel level, std::int64_t start_ns,
                       std::int64_t end_ns, std::optional<std::string> parent,
                       std::map<std::string, std::string> attributes = {});
    void flush();
    std::size_t recorded() const;

private:
    std::string trace_id_;
    TraceLevel level_;
    ClockDomain domain_;
    std::shared_ptr<SpanSink> sink_;
    mutable std::mutex mu_;
    std::vector<TraceSpan> buffer_;
    std::size_t recorded_ = 0;
};

/// Exposes a TraceStore over the frame protocol.
class TracerService {
public:
    TracerService(std::shared_ptr<TraceStore> store, net::Endpoint bind = {});
    void start() { server_.start(); }
    void stop() { server_.stop(); }
    net::Endpoint endpoint() const { return server_.endpoint(); }
    TraceStore& store() { return *store_; }

private:
    std::shared_ptr<TraceStore> store_;
    net::RpcServer server_;
};

class TracerClient final : public SpanSink {
public:
    explicit TracerClient(net::Endpoint ep);

    void publish(std::vector<TraceSpan> spans) override;
    PublishResult publish_checked(const std::vector<TraceSpan>& spans);
    std::vector<TraceSpan> spans(const std::string& trace_id);
    /// Nested timeline JSON, optionally filtered to a trace level.
    Json timeline(const std::string& trace_id, std::optional<TraceLevel> level = std::nullopt);

private:
    Json call(const std::string& method, const Json& params);

    net::Endpoint endpoint_;
    std::mutex mu_;
    std::shared_ptr<net::RpcClient> client_;
};

} // namespace evalbench
