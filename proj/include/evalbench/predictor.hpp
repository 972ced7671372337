// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// In-process predictor contract: load, predict, unload, plus introspection.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evalbench/manifest.hpp"
#include "evalbench/protocol.hpp"
#include "evalbench/tracer.hpp"

namespace evalbench {

/// Row-major tensor. Computation is carried out in float32 whatever the
/// declared element type.
struct TensorValue {
    ElementType element_type = ElementType::float32;
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::size_t element_count() const noexcept;
    /// Throws Error(Errc::shape_mismatch) unless data matches the shape.
    void check() const;
    friend bool operator==(const TensorValue&, const TensorValue&) = default;
};

/// Stacks equally shaped items along a new leading batch dimension.
TensorValue stack_batch(const std::vector<TensorValue>& items);
/// Splits the leading dimension back into items.
std::vector<TensorValue> unstack_batch(const TensorValue& batch);

struct PredictorSpec {
    std::string backend;
    std::string framework_name;
    SemVer framework_version;
    std::vector<ElementType> modalities;
    std::vector<DeviceKind> device_kinds;
    /// Runs on the agent's logical clock.
    bool virtual_clock = false;
    /// Needs the manifest's model assets downloaded before load.
    bool needs_assets = true;
};

struct ModelHandle {
    std::string id;
    std::shared_ptr<const ModelManifest> manifest;
    std::int64_t load_timestamp_ns = 0;
};

/// Local copies of the manifest's model assets.
struct ModelAssets {
    std::optional<std::filesystem::path> graph;
    std::optional<std::filesystem::path> weights;
};

/// Clock and span context handed to a predictor for one call.
class ExecContext {
public:
    ExecContext(SpanRecorder* spans, ClockDomain domain, std::int64_t start_ns, std::optional<std::string> parent_span,
                std::string key_prefix);

    /// Current time: start plus advances on the logical clock, real time otherwise.
    std::int64_t now_ns() const;
    /// Moves the logical clock forward. Ignored on the wall clock.
    void advance(std::int64_t ns);
    std::int64_t elapsed_ns() const;
    bool virtual_clock() const noexcept { return domain_ == ClockDomain::virtual_time; }

    SpanRecorder* spans() const noexcept { return spans_; }
    const std::optional<std::string>& parent_span() const noexcept { return parent_; }
    /// Span key under this call's prefix.
    std::string key(std::string_view suffix) const { return prefix_ + "/" + std::string(suffix); }

private:
    SpanRecorder* spans_;
    ClockDomain domain_;
    std::int64_t start_ns_;
    std::int64_t advanced_ns_ = 0;
    std::optional<std::string> parent_;
    std::string prefix_;
};

/// Wall clock in nanoseconds since the Unix epoch.
std::int64_t wall_now_ns();

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual PredictorSpec spec() const = 0;
    /// Errors: AssetMissing, IncompatibleManifest.
    virtual ModelHandle model_load(const ModelManifest& manifest, const ModelAssets& assets,
                                   const PredictOptions& options, ExecContext& ctx) = 0;
    /// Errors: ShapeMismatch, HandleClosed.
    virtual TensorValue predict(const ModelHandle& handle, const TensorValue& batch, const PredictOptions& options,
                                ExecContext& ctx) = 0;
    virtual void model_unload(const ModelHandle& handle) = 0;
};

/// Throws IncompatibleManifest unless the manifest's framework requirement
/// admits the predictor.
void check_compatible(const PredictorSpec& spec, const ModelManifest& manifest);

struct PredictorConfig {
    std::string backend;
    std::string framework_name;
    SemVer framework_version;
    /// Backend defaults, overridable per evaluation through PredictOptions.
    std::map<std::string, std::string> options;
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>(const PredictorConfig&)>;

/// Static plug-in table. "synthetic" and "linear" are always present.
void register_backend(const std::string& backend, PredictorFactory factory);
/// Throws Error(Errc::not_found) for unknown backends.
std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config);
std::vector<std::string> registered_backends();

/// Latency model of the synthetic backend: L(b) = base + per_item * b.
struct SyntheticModel {
    std::int64_t base_ns = 2'000'000;
    std::int64_t per_item_ns = 500'000;
    std::int64_t load_ns = 0;
    std::uint32_t layers = 4;
    /// Relative layer weights; empty means equal shares.
    std::vector<double> layer_fractions;
    std::uint32_t kernels_per_layer = 2;
    std::uint32_t classes = 10;

    std::int64_t latency_ns(std::int64_t batch) const noexcept { return base_ns + per_item_ns * batch; }
    /// Layer durations partitioning L(b); the rounding remainder goes to the last layer.
    std::vector<std::int64_t> layer_durations(std::int64_t batch) const;
    /// Reads "synthetic.*" keys over `base`. Throws ValidationError.
    static SyntheticModel from_options(const std::map<std::string, std::string>& options, SyntheticModel base);
    static SyntheticModel from_options(const std::map<std::string, std::string>& options);
};

/// Weight matrix file: [u32 rows][u32 cols][f32 row-major data], little-endian.
struct Matrix {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<float> data;
};
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
/// Throws AssetMissing if absent, DecodeError if malformed.
Matrix read_matrix_file(const std::filesystem::path& path);

} // namespace evalbench
