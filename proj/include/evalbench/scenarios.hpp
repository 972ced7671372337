// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Load generation: arrival schedules, workload plans and their execution
// against an agent.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evalbench/protocol.hpp"

namespace evalbench {

class AgentClient;

/// SplitMix64 (Steele, Lea and Flood, 2014). Seed-addressable and cheap to
/// reimplement, so schedules can be reproduced in any language.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept;
    /// Uniform in [0, 1) from the top 53 bits.
    double next_double() noexcept;

private:
    std::uint64_t state_;
};

struct ArrivalSchedule {
    ArrivalDistribution distribution = ArrivalDistribution::fixed;
    double rate = 1.0;
    std::uint64_t seed = 0;
    /// Seconds from the start of the run; nondecreasing, offsets[0] >= 0.
    std::vector<double> offsets;
};

/// Exponential(rate) gaps by inverse CDF, -log1p(-u) / rate. Offsets are
/// prefix sums, so offsets[0] is the first gap.
ArrivalSchedule gen_poisson(double rate, std::size_t n, std::uint64_t seed);
/// Gaps uniform on [0, 2 / rate): same mean as Poisson, bounded spread.
ArrivalSchedule gen_uniform(double rate, std::size_t n, std::uint64_t seed);
/// Constant gap 1 / rate.
ArrivalSchedule gen_fixed(double rate, std::size_t n);
ArrivalSchedule gen_schedule(const Arrival& arrival, std::size_t n, std::uint64_t seed);
/// Arrivals strictly before `duration_s`, capped at `max_n`.
ArrivalSchedule gen_schedule_for(const Arrival& arrival, double duration_s, std::uint64_t seed,
                                 std::size_t max_n = 10'000'000);

Json schedule_to_json(const ArrivalSchedule& s);

/// Order-preserving partition of n items into ceil(n / batch) runs.
/// Throws Error(Errc::empty_workload) for n = 0.
std::vector<std::vector<std::size_t>> partition_items(std::size_t n, std::uint32_t batch_size);

struct WorkloadPlan {
    BenchmarkScenario scenario;
    std::size_t item_count = 0;
    /// Item indices per request in issue order; warmups come first.
    std::vector<std::vector<std::size_t>> requests;
    std::size_t warmup_requests = 0;
    /// Online only: one offset per request.
    std::optional<ArrivalSchedule> schedule;
    /// Batched with a duration: cycle through `requests` until time runs out.
    bool repeat_until_duration = false;
};

/// Every item exactly once, in order, in batches of `batch_size`.
WorkloadPlan plan_batched(std::size_t n_items, std::uint32_t batch_size);

/// Plan for a validated scenario over `n_items` distinct inputs. `count`
/// is the number of measured requests (a request is one batch in batched
/// runs and one item online); warmup requests are added in front. Inputs
/// are reused cyclically when the run needs more than `n_items`.
WorkloadPlan plan_scenario(const BenchmarkScenario& scenario, std::size_t n_items);

struct RequestMeasurement {
    std::uint64_t sequence = 0;
    /// Offset from the start of the run.
    std::int64_t issue_ns = 0;
    /// Issue to completion as observed by the load generator.
    std::int64_t latency_ns = 0;
    /// Agent-side service time (pipeline entry to exit).
    std::int64_t service_ns = 0;
    std::uint32_t batch_size = 0;
    /// How far behind schedule the request was sent (open loop, wall clock).
    std::int64_t lateness_ns = 0;
    bool warmup = false;
    bool success = true;
    std::string error;
    friend bool operator==(const RequestMeasurement&, const RequestMeasurement&) = default;
};

void to_json(Json& j, const RequestMeasurement& v);
void from_json(const Json& j, RequestMeasurement& v);

/// Returns the bytes of input item i.
using ItemSource = std::function<std::string(std::size_t index)>;

/// Drives a plan through an open predictor handle. Batched runs are closed
/// loop: the next request goes out when the previous one completes. Online
/// runs are open loop: a sender follows the schedule while responses are
/// collected on another thread. On the logical clock the agent's timestamps
/// are used; on the wall clock the generator's own.
/// Errors: AgentError naming the request when the stream fails.
std::vector<RequestMeasurement> execute_plan(const WorkloadPlan& plan, const ItemSource& items, AgentClient& agent,
                                             const PredictorHandle& handle);

} // namespace evalbench
