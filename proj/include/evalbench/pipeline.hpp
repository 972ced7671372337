// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Streaming evaluation pipeline run by an agent for one predictor handle:
//
//   source -> preprocess steps -> batcher -> predict -> postprocess steps -> sink
//
// Every operator is its own thread; neighbours talk through bounded channels.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evalbench/manifest.hpp"
#include "evalbench/predictor.hpp"
#include "evalbench/protocol.hpp"
#include "evalbench/tracer.hpp"

namespace evalbench {

enum class OperatorKind { source, preprocess_step, batcher, predict, postprocess_step, sink };

std::string_view to_string(OperatorKind k) noexcept;

struct PipelineOperator {
    std::string name;
    OperatorKind kind = OperatorKind::source;
    /// Emits one MODEL span per item (source, pre/post steps) or per batch (predict).
    bool traced = true;
};

struct PipelineOptions {
    /// Largest batch handed to the predictor. Batches never straddle requests.
    std::uint32_t batch_size = 1;
    std::size_t channel_capacity = 2;
    /// Predictions kept per item.
    std::size_t top_k = 5;
    /// Logical-clock cost of a non-predict operator for one item; zero if unset.
    std::function<std::int64_t(std::string_view op, std::uint64_t item)> stage_cost;
};

/// Runs requests through the operator chain of a loaded model.
///
/// On the logical clock each operator keeps a cursor: an item starts at
/// max(ready, cursor) and the cursor moves to its end, so stages overlap the
/// way concurrent producers and consumers would. Request issue times and the
/// times in responses are offsets from `origin_ns`.
class Pipeline {
public:
    Pipeline(Predictor& predictor, ModelHandle handle, const ModelManifest& manifest, PredictOptions predict_options,
             PipelineOptions options, SpanRecorder* spans, std::optional<std::string> root_span,
             std::vector<std::string> labels = {}, std::int64_t origin_ns = 0);

    const std::vector<PipelineOperator>& operators() const noexcept { return operators_; }

    /// Pulls requests from `next` until it returns nullopt and hands one
    /// response per request to `emit`, in request order. Operator failures
    /// become unsuccessful responses naming the operator and item; errors
    /// thrown by `next` or `emit` are rethrown after the chain drains.
    /// Returns the number of requests answered.
    std::uint64_t run(const std::function<std::optional<UserInput>()>& next,
                      const std::function<void(const FeaturesResponse&)>& emit);

    /// Latest operator end time so far, in the span clock (absolute).
    std::int64_t last_end_ns() const noexcept { return last_end_ns_; }
    std::uint64_t items_processed() const noexcept { return next_item_; }

private:
    struct Item;
    struct Batch;

    std::int64_t begin(std::size_t op, std::int64_t ready_ns);
    std::int64_t finish(std::size_t op, std::int64_t start_ns, std::uint64_t item);
    void trace_item(const Item& item, std::size_t op, std::int64_t start, std::int64_t end);
    void apply_step(std::size_t step_index, Item& item) const;

    Predictor& predictor_;
    ModelHandle handle_;
    const ModelManifest& manifest_;
    PredictOptions predict_options_;
    PipelineOptions options_;
    SpanRecorder* spans_;
    std::optional<std::string> root_;
    std::vector<std::string> labels_;
    ClockDomain domain_;
    std::int64_t origin_ns_;

    std::vector<PipelineOperator> operators_;
    std::vector<ProcessingStep> pre_steps_;
    std::vector<ProcessingStep> post_steps_;
    DataLayout layout_ = DataLayout::nhwc;
    bool has_decode_ = false;

    /// Per-operator logical-clock cursors; each is touched by one thread only.
    std::vector<std::int64_t> cursor_;
    std::int64_t last_end_ns_ = 0;
    std::uint64_t next_item_ = 0;
    std::uint64_t next_batch_ = 0;
};

/// Throws Error(Errc::pipeline) for the first unsuccessful response.
void throw_if_failed(const std::vector<FeaturesResponse>& responses);

} // namespace evalbench
