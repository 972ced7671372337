// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Wire messages shared by the server, agents, registry and tracer.
//
// Frame layout, all integers big-endian:
//
//   [u32 body_length][u64 request_id][u8 frame_kind][body_length bytes of JSON]
//
// Bodies are canonical JSON (keys sorted) with snake_case field names.
// Unknown fields are ignored on decode.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace evalbench {

using Json = nlohmann::json;

/// Numeric codes are part of the wire contract.
enum class TraceLevel : std::uint8_t { none = 0, model = 1, framework = 2, system = 3, full = 4 };

/// Level a single span is recorded at.
enum class SpanLevel : std::uint8_t { model = 1, framework = 2, system = 3 };

std::string_view to_string(TraceLevel level) noexcept;
std::string_view to_string(SpanLevel level) noexcept;
std::optional<TraceLevel> trace_level_from(std::string_view s) noexcept;
std::optional<SpanLevel> span_level_from(std::string_view s) noexcept;

/// MODEL keeps model spans; FRAMEWORK adds framework; SYSTEM and FULL keep all.
constexpr bool captures(TraceLevel level, SpanLevel span) noexcept {
    switch (level) {
    case TraceLevel::none: return false;
    case TraceLevel::model: return span == SpanLevel::model;
    case TraceLevel::framework: return span != SpanLevel::system;
    case TraceLevel::system:
    case TraceLevel::full: return true;
    }
    return false;
}

struct PredictOptions {
    TraceLevel trace_level = TraceLevel::none;
    std::map<std::string, std::string> options;
    friend bool operator==(const PredictOptions&, const PredictOptions&) = default;
};

enum class ScenarioKind { batched, online };
enum class ArrivalDistribution { poisson, uniform, fixed };

std::string_view to_string(ScenarioKind k) noexcept;
std::string_view to_string(ArrivalDistribution d) noexcept;

struct Arrival {
    ArrivalDistribution distribution = ArrivalDistribution::poisson;
    /// requests per second
    double rate = 1.0;
    friend bool operator==(const Arrival&, const Arrival&) = default;
};

struct BenchmarkScenario {
    ScenarioKind kind = ScenarioKind::batched;
    std::optional<std::uint32_t> batch_size;
    std::optional<Arrival> arrival;
    /// Exactly one of count / duration_s is set.
    std::optional<std::uint64_t> count;
    std::optional<double> duration_s;
    std::uint64_t warmup_count = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const BenchmarkScenario&, const BenchmarkScenario&) = default;

    /// Throws Error(Errc::validation).
    void validate() const;
};

struct OpenRequest {
    std::string model_name;
    std::string model_version;
    std::string framework_name;
    std::string framework_version;
    std::string model_manifest;
    BenchmarkScenario benchmark_scenario;
    PredictOptions predict_options;
    /// Trace the agent publishes spans under (32 hex chars); empty disables publication.
    std::string trace_id;

    friend bool operator==(const OpenRequest&, const OpenRequest&) = default;
};

struct PredictorHandle {
    std::string id;
    /// Set when the evaluation runs on the agent's logical clock; issue times
    /// are then offsets from the end of model load.
    bool virtual_clock = false;
    /// What the agent resolved the request to.
    std::string model_name;
    std::string model_version;
    std::string framework_name;
    std::string framework_version;
    /// "image" when the first input is decoded from an encoded image, else "raw".
    std::string input_format;
    friend bool operator==(const PredictorHandle&, const PredictorHandle&) = default;
};

/// Header of a streamed Predict call; UserInput items follow under the same request id.
struct PredictRequest {
    PredictorHandle handle;
    friend bool operator==(const PredictRequest&, const PredictRequest&) = default;
};

/// One request of the workload: a single item (online) or a whole batch (batched).
struct UserInput {
    std::uint64_t sequence = 0;
    /// Issue time in the evaluation's clock domain.
    std::int64_t issue_ns = 0;
    bool warmup = false;
    std::vector<std::string> items;
    friend bool operator==(const UserInput&, const UserInput&) = default;
};

struct Prediction {
    std::string label;
    double score = 0;
    friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct FeaturesResponse {
    std::uint64_t sequence = 0;
    std::uint32_t batch_size = 0;
    std::int64_t issue_ns = 0;
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    bool success = true;
    std::string error;
    /// Top predictions per item, in item order.
    std::vector<std::vector<Prediction>> features;
    friend bool operator==(const FeaturesResponse&, const FeaturesResponse&) = default;
};

struct CloseResponse {
    std::uint64_t requests = 0;
    friend bool operator==(const CloseResponse&, const CloseResponse&) = default;
};

using Message = std::variant<PredictOptions, BenchmarkScenario, OpenRequest, PredictorHandle, PredictRequest,
                             UserInput, FeaturesResponse, CloseResponse>;

void to_json(Json& j, const PredictOptions& v);
void from_json(const Json& j, PredictOptions& v);
void to_json(Json& j, const BenchmarkScenario& v);
void from_json(const Json& j, BenchmarkScenario& v);
void to_json(Json& j, const OpenRequest& v);
void from_json(const Json& j, OpenRequest& v);
void to_json(Json& j, const PredictorHandle& v);
void from_json(const Json& j, PredictorHandle& v);
void to_json(Json& j, const PredictRequest& v);
void from_json(const Json& j, PredictRequest& v);
void to_json(Json& j, const UserInput& v);
void from_json(const Json& j, UserInput& v);
void to_json(Json& j, const Prediction& v);
void from_json(const Json& j, Prediction& v);
void to_json(Json& j, const FeaturesResponse& v);
void from_json(const Json& j, FeaturesResponse& v);
void to_json(Json& j, const CloseResponse& v);
void from_json(const Json& j, CloseResponse& v);

/// Canonical JSON body with a "type" tag.
std::string encode_message(const Message& msg);
/// Throws Error(Errc::decode) on malformed bodies or invariant violations.
Message decode_message(std::string_view body);

[[noreturn]] void throw_decode_error(const std::string& what);

/// Typed decode; throws Error(Errc::decode) if the tag does not match.
template <class T>
T decode_message_as(std::string_view body) {
    Message m = decode_message(body);
    if (auto* v = std::get_if<T>(&m)) return std::move(*v);
    throw_decode_error("unexpected message type");
}

// ---------------------------------------------------------------------------
// Framing

enum class FrameKind : std::uint8_t { request = 0, response = 1, stream_item = 2, end_of_stream = 3, error = 4 };

struct Frame {
    std::uint64_t request_id = 0;
    FrameKind kind = FrameKind::request;
    std::string body;
    friend bool operator==(const Frame&, const Frame&) = default;
};

inline constexpr std::size_t kFrameHeaderSize = 13;
inline constexpr std::uint32_t kMaxFrameBody = 64u << 20;

std::string encode_frame(const Frame& frame);

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
public:
    void feed(std::string_view bytes);
    /// Next complete frame, if any. Throws Error(Errc::decode) on a bad kind or oversized frame.
    std::optional<Frame> next();
    std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

private:
    std::string buffer_;
    std::size_t offset_ = 0;
};

/// Error frame body: {"code": "...", "message": "..."}.
std::string encode_error_body(std::string_view code, std::string_view message);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

} // namespace evalbench
