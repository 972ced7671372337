// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/protocol.hpp"

#include <array>
#include <cmath>

#include "evalbench/error.hpp"

namespace evalbench {

std::string_view to_string(TraceLevel level) noexcept {
    switch (level) {
    case TraceLevel::none: return "NONE";
    case TraceLevel::model: return "MODEL";
    case TraceLevel::framework: return "FRAMEWORK";
    case TraceLevel::system: return "SYSTEM";
    case TraceLevel::full: return "FULL";
    }
    return "NONE";
}

std::string_view to_string(SpanLevel level) noexcept {
    switch (level) {
    case SpanLevel::model: return "MODEL";
    case SpanLevel::framework: return "FRAMEWORK";
    case SpanLevel::system: return "SYSTEM";
    }
    return "MODEL";
}

namespace {

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        char x = a[i] >= 'a' && a[i] <= 'z' ? char(a[i] - 32) : a[i];
        if (x != b[i]) return false;
    }
    return true;
}

} // namespace

std::optional<TraceLevel> trace_level_from(std::string_view s) noexcept {
    for (auto l : {TraceLevel::none, TraceLevel::model, TraceLevel::framework, TraceLevel::system, TraceLevel::full}) {
        if (iequals(s, to_string(l))) return l;
    }
    return std::nullopt;
}

std::optional<SpanLevel> span_level_from(std::string_view s) noexcept {
    for (auto l : {SpanLevel::model, SpanLevel::framework, SpanLevel::system}) {
        if (iequals(s, to_string(l))) return l;
    }
    return std::nullopt;
}

std::string_view to_string(ScenarioKind k) noexcept { return k == ScenarioKind::batched ? "batched" : "online"; }

std::string_view to_string(ArrivalDistribution d) noexcept {
    switch (d) {
    case ArrivalDistribution::poisson: return "poisson";
    case ArrivalDistribution::uniform: return "uniform";
    case ArrivalDistribution::fixed: return "fixed";
    }
    return "poisson";
}

void BenchmarkScenario::validate() const {
    if (kind == ScenarioKind::batched) {
        if (!batch_size || *batch_size == 0) throw Error(Errc::validation, "batched scenario needs batch_size >= 1", "batch_size");
        if (arrival) throw Error(Errc::validation, "batched scenario takes no arrival process", "arrival");
    } else {
        if (!arrival) throw Error(Errc::validation, "online scenario needs an arrival process", "arrival");
        if (!(arrival->rate > 0) || !std::isfinite(arrival->rate)) {
            throw Error(Errc::validation, "arrival rate must be > 0", "arrival.rate");
        }
        if (batch_size) throw Error(Errc::validation, "online scenario takes no batch_size", "batch_size");
    }
    if (count.has_value() == duration_s.has_value()) {
        throw Error(Errc::validation, "exactly one of count or duration_s is required", "count");
    }
    if (count && *count == 0) throw Error(Errc::validation, "count must be >= 1", "count");
    if (duration_s && !(*duration_s > 0)) throw Error(Errc::validation, "duration must be > 0", "duration_s");
}

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const PredictOptions& v) {
    j = Json{{"trace_level", static_cast<int>(v.trace_level)}, {"options", v.options}};
}

void from_json(const Json& j, PredictOptions& v) {
    int level = j.value("trace_level", 0);
    if (level < 0 || level > 4) throw_decode_error("trace_level out of range");
    v.trace_level = static_cast<TraceLevel>(level);
    v.options = j.value("options", std::map<std::string, std::string>{});
}

void to_json(Json& j, const BenchmarkScenario& v) {
    j = Json{{"kind", to_string(v.kind)}, {"warmup_count", v.warmup_count}, {"seed", v.seed}};
    if (v.batch_size) j["batch_size"] = *v.batch_size;
    if (v.arrival) j["arrival"] = Json{{"distribution", to_string(v.arrival->distribution)}, {"rate", v.arrival->rate}};
    if (v.count) j["count"] = *v.count;
    if (v.duration_s) j["duration_s"] = *v.duration_s;
}

void from_json(const Json& j, BenchmarkScenario& v) {
    auto kind = j.value("kind", std::string("batched"));
    if (kind == "batched") v.kind = ScenarioKind::batched;
    else if (kind == "online") v.kind = ScenarioKind::online;
    else throw_decode_error("unknown scenario kind '" + kind + "'");
    v.batch_size.reset();
    v.arrival.reset();
    v.count.reset();
    v.duration_s.reset();
    if (j.contains("batch_size")) v.batch_size = j.at("batch_size").get<std::uint32_t>();
    if (j.contains("arrival")) {
        const auto& a = j.at("arrival");
        Arrival arrival;
        auto dist = a.value("distribution", std::string("poisson"));
        if (dist == "poisson") arrival.distribution = ArrivalDistribution::poisson;
        else if (dist == "uniform") arrival.distribution = ArrivalDistribution::uniform;
        else if (dist == "fixed") arrival.distribution = ArrivalDistribution::fixed;
        else throw_decode_error("unknown arrival distribution '" + dist + "'");
        arrival.rate = a.at("rate").get<double>();
        v.arrival = arrival;
    }
    if (j.contains("count")) v.count = j.at("count").get<std::uint64_t>();
    if (j.contains("duration_s")) v.duration_s = j.at("duration_s").get<double>();
    v.warmup_count = j.value("warmup_count", std::uint64_t{0});
    v.seed = j.value("seed", std::uint64_t{0});
}

void to_json(Json& j, const OpenRequest& v) {
    j = Json{{"model_name", v.model_name},
             {"model_version", v.model_version},
             {"framework_name", v.framework_name},
             {"framework_version", v.framework_version},
             {"model_manifest", v.model_manifest},
             {"benchmark_scenario", v.benchmark_scenario},
             {"predict_options", v.predict_options},
             {"trace_id", v.trace_id}};
}

void from_json(const Json& j, OpenRequest& v) {
    v.model_name = j.value("model_name", std::string{});
    v.model_version = j.value("model_version", std::string{});
    v.framework_name = j.value("framework_name", std::string{});
    v.framework_version = j.value("framework_version", std::string{});
    v.model_manifest = j.value("model_manifest", std::string{});
    v.benchmark_scenario = j.value("benchmark_scenario", Json::object()).get<BenchmarkScenario>();
    v.predict_options = j.value("predict_options", Json::object()).get<PredictOptions>();
    v.trace_id = j.value("trace_id", std::string{});
}

void to_json(Json& j, const PredictorHandle& v) {
    j = Json{{"id", v.id}, {"virtual_clock", v.virtual_clock}};
    if (!v.model_name.empty()) j["model_name"] = v.model_name;
    if (!v.model_version.empty()) j["model_version"] = v.model_version;
    if (!v.framework_name.empty()) j["framework_name"] = v.framework_name;
    if (!v.framework_version.empty()) j["framework_version"] = v.framework_version;
    if (!v.input_format.empty()) j["input_format"] = v.input_format;
}

void from_json(const Json& j, PredictorHandle& v) {
    v.id = j.at("id").get<std::string>();
    v.virtual_clock = j.value("virtual_clock", false);
    v.model_name = j.value("model_name", std::string{});
    v.model_version = j.value("model_version", std::string{});
    v.framework_name = j.value("framework_name", std::string{});
    v.framework_version = j.value("framework_version", std::string{});
    v.input_format = j.value("input_format", std::string{});
}

void to_json(Json& j, const PredictRequest& v) { j = Json{{"handle", v.handle}}; }
void from_json(const Json& j, PredictRequest& v) { v.handle = j.at("handle").get<PredictorHandle>(); }

void to_json(Json& j, const UserInput& v) {
    Json items = Json::array();
    for (const auto& item : v.items) items.push_back(base64_encode(item));
    j = Json{{"sequence", v.sequence}, {"issue_ns", v.issue_ns}, {"warmup", v.warmup}, {"items", std::move(items)}};
}

void from_json(const Json& j, UserInput& v) {
    v.sequence = j.value("sequence", std::uint64_t{0});
    v.issue_ns = j.value("issue_ns", std::int64_t{0});
    v.warmup = j.value("warmup", false);
    v.items.clear();
    for (const auto& item : j.value("items", Json::array())) v.items.push_back(base64_decode(item.get<std::string>()));
}

void to_json(Json& j, const Prediction& v) { j = Json{{"label", v.label}, {"score", v.score}}; }
void from_json(const Json& j, Prediction& v) {
    v.label = j.value("label", std::string{});
    v.score = j.value("score", 0.0);
}

void to_json(Json& j, const FeaturesResponse& v) {
    j = Json{{"sequence", v.sequence}, {"batch_size", v.batch_size}, {"issue_ns", v.issue_ns},
             {"start_ns", v.start_ns}, {"end_ns", v.end_ns},         {"success", v.success},
             {"error", v.error},       {"features", v.features}};
}

void from_json(const Json& j, FeaturesResponse& v) {
    v.sequence = j.value("sequence", std::uint64_t{0});
    v.batch_size = j.value("batch_size", std::uint32_t{0});
    v.issue_ns = j.value("issue_ns", std::int64_t{0});
    v.start_ns = j.value("start_ns", std::int64_t{0});
    v.end_ns = j.value("end_ns", std::int64_t{0});
    v.success = j.value("success", true);
    v.error = j.value("error", std::string{});
    v.features = j.value("features", std::vector<std::vector<Prediction>>{});
}

void to_json(Json& j, const CloseResponse& v) { j = Json{{"requests", v.requests}}; }
void from_json(const Json& j, CloseResponse& v) { v.requests = j.value("requests", std::uint64_t{0}); }

// ---------------------------------------------------------------------------
// Tagged messages

namespace {

template <class T>
struct Tag;
template <> struct Tag<PredictOptions> { static constexpr std::string_view name = "predict_options"; };
template <> struct Tag<BenchmarkScenario> { static constexpr std::string_view name = "benchmark_scenario"; };
template <> struct Tag<OpenRequest> { static constexpr std::string_view name = "open_request"; };
template <> struct Tag<PredictorHandle> { static constexpr std::string_view name = "predictor_handle"; };
template <> struct Tag<PredictRequest> { static constexpr std::string_view name = "predict_request"; };
template <> struct Tag<UserInput> { static constexpr std::string_view name = "user_input"; };
template <> struct Tag<FeaturesResponse> { static constexpr std::string_view name = "features_response"; };
template <> struct Tag<CloseResponse> { static constexpr std::string_view name = "close_response"; };

void check_invariants(const Message& m) {
    if (const auto* open = std::get_if<OpenRequest>(&m)) {
        if (open->model_name.empty() && open->model_manifest.empty()) {
            throw_decode_error("OpenRequest needs a model name or an inline manifest");
        }
        try {
            open->benchmark_scenario.validate();
        } catch (const Error& e) {
            throw_decode_error(std::string("invalid benchmark_scenario: ") + e.what());
        }
    } else if (const auto* s = std::get_if<BenchmarkScenario>(&m)) {
        try {
            s->validate();
        } catch (const Error& e) {
            throw_decode_error(e.what());
        }
    } else if (const auto* h = std::get_if<PredictorHandle>(&m)) {
        if (h->id.empty()) throw_decode_error("empty predictor handle");
    }
}

template <std::size_t I = 0>
Message decode_tagged(std::string_view tag, const Json& j) {
    if constexpr (I == std::variant_size_v<Message>) {
        throw_decode_error("unknown message type '" + std::string(tag) + "'");
    } else {
        using T = std::variant_alternative_t<I, Message>;
        if (tag == Tag<T>::name) return Message{j.get<T>()};
        return decode_tagged<I + 1>(tag, j);
    }
}

} // namespace

void throw_decode_error(const std::string& what) { throw Error(Errc::decode, what); }

std::string encode_message(const Message& msg) {
    return std::visit(
        [](const auto& v) {
            Json j = v;
            j["type"] = Tag<std::decay_t<decltype(v)>>::name;
            return j.dump();
        },
        msg);
}

Message decode_message(std::string_view body) {
    Json j;
    try {
        j = Json::parse(body);
    } catch (const Json::exception& e) {
        throw_decode_error(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw_decode_error("missing message type");
    Message m;
    try {
        m = decode_tagged(j["type"].get<std::string>(), j);
    } catch (const Json::exception& e) {
        throw_decode_error(std::string("malformed message: ") + e.what());
    }
    check_invariants(m);
    return m;
}

// ---------------------------------------------------------------------------
// Framing

namespace {

void put_be(std::string& out, std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_be(std::string_view in, std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | static_cast<unsigned char>(in[at + i]);
    return v;
}

} // namespace

std::string encode_frame(const Frame& frame) {
    if (frame.body.size() > kMaxFrameBody) throw Error(Errc::decode, "frame body too large");
    std::string out;
    out.reserve(kFrameHeaderSize + frame.body.size());
    put_be(out, frame.body.size(), 4);
    put_be(out, frame.request_id, 8);
    out.push_back(static_cast<char>(frame.kind));
    out += frame.body;
    return out;
}

void FrameDecoder::feed(std::string_view bytes) {
    if (offset_ > 0 && offset_ == buffer_.size()) {
        buffer_.clear();
        offset_ = 0;
    }
    buffer_.append(bytes);
}

std::optional<Frame> FrameDecoder::next() {
    std::string_view view(buffer_);
    view.remove_prefix(offset_);
    if (view.size() < kFrameHeaderSize) return std::nullopt;
    auto length = get_be(view, 0, 4);
    if (length > kMaxFrameBody) throw Error(Errc::decode, "frame body exceeds limit");
    auto kind = static_cast<std::uint8_t>(view[12]);
    if (kind > 4) throw Error(Errc::decode, "unknown frame kind " + std::to_string(kind));
    if (view.size() < kFrameHeaderSize + length) return std::nullopt;
    Frame f;
    f.request_id = get_be(view, 4, 8);
    f.kind = static_cast<FrameKind>(kind);
    f.body.assign(view.substr(kFrameHeaderSize, length));
    offset_ += kFrameHeaderSize + length;
    if (offset_ > (1u << 20) && offset_ * 2 > buffer_.size()) {
        buffer_.erase(0, offset_);
        offset_ = 0;
    }
    return f;
}

std::string encode_error_body(std::string_view code, std::string_view message) {
    return Json{{"code", code}, {"message", message}}.dump();
}

// ---------------------------------------------------------------------------
// base64 (RFC 4648, padded)

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        std::uint32_t n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                          std::uint8_t(bytes[i + 2]);
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += kB64[(n >> 6) & 63];
        out += kB64[n & 63];
    }
    if (i + 1 == bytes.size()) {
        std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        std::uint32_t n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8);
        out += kB64[(n >> 18) & 63];
        out += kB64[(n >> 12) & 63];
        out += kB64[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    static const auto table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        for (std::size_t i = 0; i < kB64.size(); ++i) t[static_cast<unsigned char>(kB64[i])] = int(i);
        return t;
    }();
    if (text.size() % 4 != 0) throw_decode_error("base64 length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            char c = text[i + k];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                v[k] = 0;
                ++pad;
                continue;
            }
            if (pad) throw_decode_error("bad base64 padding");
            v[k] = table[static_cast<unsigned char>(c)];
            if (v[k] < 0) throw_decode_error("bad base64 character");
        }
        std::uint32_t n = (std::uint32_t(v[0]) << 18) | (std::uint32_t(v[1]) << 12) | (std::uint32_t(v[2]) << 6) | v[3];
        out += static_cast<char>((n >> 16) & 0xff);
        if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
        if (pad < 1) out += static_cast<char>(n & 0xff);
    }
    return out;
}

} // namespace evalbench
