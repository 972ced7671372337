// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Summary statistics, throughput curves, layer tables and reports.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evalbench/evaldb.hpp"
#include "evalbench/tracer.hpp"

namespace evalbench {

/// Fraction trimmed from each end of the sorted samples.
inline constexpr double kTrimFraction = 0.2;

/// Mean of sorted(xs)[k : n - k] with k = floor(fraction * n), summed left
/// to right. Throws Error(Errc::empty_input).
double trimmed_mean(std::vector<double> xs, double fraction = kTrimFraction);

/// Nearest rank: sorted[ceil(p / 100 * n) - 1]. p in (0, 100].
/// Throws Error(Errc::empty_input) or Error(Errc::validation).
double percentile(std::vector<double> xs, double p);

struct LatencySummary {
    double trimmed_mean_ms = 0;
    double p90_ms = 0;
    double min_ms = 0;
    double max_ms = 0;
    double mean_ms = 0;
    std::size_t count = 0;
};

/// Throws Error(Errc::empty_input).
LatencySummary summarize_latency(const std::vector<double>& latencies_ms);

/// Latencies (ms) of the measured, successful requests.
std::vector<double> measured_latencies_ms(const std::vector<RequestMeasurement>& ms);

/// Items and busy time of one run: warmups are left out, busy time runs from
/// the first measured issue to the last measured completion, and only
/// successful requests contribute items.
struct ThroughputSample {
    std::uint32_t batch_size = 0;
    std::uint64_t items = 0;
    std::int64_t busy_ns = 0;
};

/// Throws Error(Errc::no_data) when no measured request exists.
ThroughputSample throughput_sample(std::uint32_t batch_size, const std::vector<RequestMeasurement>& ms);

/// items * 1e9 / busy_ns; zero for an empty window.
double throughput_of(const ThroughputSample& s);

struct ThroughputPoint {
    std::uint32_t batch_size = 0;
    double throughput = 0;  // items per second
};

struct ThroughputCurve {
    /// Ascending batch size.
    std::vector<ThroughputPoint> points;
    double max_throughput = 0;
    std::uint32_t optimal_batch_size = 0;

    std::optional<double> at(std::uint32_t batch_size) const;
};

/// Samples sharing a batch size are pooled: total items over total busy
/// time. The optimum is the argmax; ties go to the smaller batch.
/// Throws Error(Errc::no_data) for no samples.
ThroughputCurve throughput_curve(const std::vector<ThroughputSample>& samples);

struct SpeedupMatrix {
    /// Union of batch sizes, ascending.
    std::vector<std::uint32_t> batch_sizes;
    std::vector<std::string> models;
    /// cells[i][j] = throughput(batch_sizes[i]) / throughput(1) for
    /// models[j]; empty when the model has no point at that batch size.
    std::vector<std::vector<std::optional<double>>> cells;
};

/// Throws Error(Errc::missing_baseline) naming the first model without a
/// batch-size-1 point.
SpeedupMatrix speedup_matrix(const std::vector<std::pair<std::string, ThroughputCurve>>& curves);

struct KernelEntry {
    std::string name;
    double latency_ms = 0;
};

struct LayerReportRow {
    std::int64_t layer_index = 0;
    std::string layer_name;
    std::string layer_type;
    std::string layer_shape;
    double latency_ms = 0;
    std::string dominant_kernel;
    /// In launch order.
    std::vector<KernelEntry> kernels;
};

/// Framework-level spans ranked by duration (ties by layer index), each with
/// the system-level spans correlated to it. Returns at most top_k rows.
std::vector<LayerReportRow> layer_report(const Timeline& timeline, std::size_t top_k);

Json to_json_value(const LatencySummary& s);
Json to_json_value(const ThroughputCurve& c);
Json to_json_value(const SpeedupMatrix& m);
Json to_json_value(const std::vector<LayerReportRow>& rows);

/// Condensed metrics for one result, with no ids or timestamps so equal
/// runs summarize identically.
Json summarize_evaluation(const EvaluationResult& r);

struct ReportOptions {
    std::string title = "Evaluation report";
    std::size_t top_layers = 5;
    /// Exploration only; the report states the value used.
    double trim_fraction = kTrimFraction;
};

/// Fetches a timeline by trace id, or nullopt if unavailable.
using TimelineLookup = std::function<std::optional<Timeline>(const std::string& trace_id)>;

struct Report {
    Json json;
    std::string html;
};

/// Groups results by (model, framework, architecture), then builds latency
/// summaries from online runs (batch-size-1 batched runs when there are
/// none), throughput curves from batched runs, a speedup matrix over the
/// groups that have a batch-size-1 point, and layer tables for traced runs.
/// Deterministic in its inputs. Throws Error(Errc::no_data).
Report generate_report(const std::vector<EvaluationResult>& results, const ReportOptions& options = {},
                       const TimelineLookup& timelines = {});

/// Self-contained HTML page for a report JSON document.
std::string render_report_html(const Json& report);

} // namespace evalbench
