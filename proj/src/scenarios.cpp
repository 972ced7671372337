// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/scenarios.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "evalbench/agent.hpp"
#include "evalbench/error.hpp"
#include "evalbench/predictor.hpp"

namespace evalbench {

std::uint64_t SplitMix64::next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double SplitMix64::next_double() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

namespace {

void check_rate(double rate) {
    if (!(rate > 0) || !std::isfinite(rate)) throw Error(Errc::validation, "arrival rate must be > 0", "arrival.rate");
}

/// Gap generator for one distribution.
std::function<double()> gap_source(ArrivalDistribution d, double rate, std::uint64_t seed) {
    switch (d) {
    case ArrivalDistribution::poisson:
        return [rng = SplitMix64(seed), rate]() mutable { return -std::log1p(-rng.next_double()) / rate; };
    case ArrivalDistribution::uniform:
        return [rng = SplitMix64(seed), rate]() mutable { return rng.next_double() * 2.0 / rate; };
    case ArrivalDistribution::fixed:
        break;
    }
    return [rate] { return 1.0 / rate; };
}

ArrivalSchedule generate(ArrivalDistribution d, double rate, std::size_t n, std::uint64_t seed) {
    check_rate(rate);
    ArrivalSchedule s{d, rate, seed, {}};
    s.offsets.reserve(n);
    auto gap = gap_source(d, rate, seed);
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) {
        t += gap();
        s.offsets.push_back(t);
    }
    return s;
}

} // namespace

ArrivalSchedule gen_poisson(double rate, std::size_t n, std::uint64_t seed) {
    return generate(ArrivalDistribution::poisson, rate, n, seed);
}

ArrivalSchedule gen_uniform(double rate, std::size_t n, std::uint64_t seed) {
    return generate(ArrivalDistribution::uniform, rate, n, seed);
}

ArrivalSchedule gen_fixed(double rate, std::size_t n) { return generate(ArrivalDistribution::fixed, rate, n, 0); }

ArrivalSchedule gen_schedule(const Arrival& arrival, std::size_t n, std::uint64_t seed) {
    return generate(arrival.distribution, arrival.rate, n, arrival.distribution == ArrivalDistribution::fixed ? 0 : seed);
}

ArrivalSchedule gen_schedule_for(const Arrival& arrival, double duration_s, std::uint64_t seed, std::size_t max_n) {
    check_rate(arrival.rate);
    if (!(duration_s > 0)) throw Error(Errc::validation, "duration must be > 0", "duration_s");
    ArrivalSchedule s{arrival.distribution, arrival.rate, arrival.distribution == ArrivalDistribution::fixed ? 0 : seed,
                      {}};
    auto gap = gap_source(arrival.distribution, arrival.rate, s.seed);
    double t = 0;
    while (s.offsets.size() < max_n) {
        t += gap();
        if (t >= duration_s) break;
        s.offsets.push_back(t);
    }
    return s;
}

Json schedule_to_json(const ArrivalSchedule& s) {
    return Json{{"distribution", std::string(to_string(s.distribution))},
                {"rate", s.rate},
                {"seed", s.seed},
                {"offsets", s.offsets}};
}

std::vector<std::vector<std::size_t>> partition_items(std::size_t n, std::uint32_t batch_size) {
    if (n == 0) throw Error(Errc::empty_workload, "the workload has no input items");
    if (batch_size == 0) throw Error(Errc::validation, "batch size must be at least 1", "batch_size");
    std::vector<std::vector<std::size_t>> out;
    out.reserve((n + batch_size - 1) / batch_size);
    for (std::size_t i = 0; i < n; i += batch_size) {
        std::vector<std::size_t> run;
        for (std::size_t k = i; k < std::min(n, i + batch_size); ++k) run.push_back(k);
        out.push_back(std::move(run));
    }
    return out;
}

WorkloadPlan plan_batched(std::size_t n_items, std::uint32_t batch_size) {
    WorkloadPlan p;
    p.scenario.kind = ScenarioKind::batched;
    p.scenario.batch_size = batch_size;
    p.item_count = n_items;
    p.requests = partition_items(n_items, batch_size);
    p.scenario.count = p.requests.size();
    return p;
}

WorkloadPlan plan_scenario(const BenchmarkScenario& scenario, std::size_t n_items) {
    scenario.validate();
    if (n_items == 0) throw Error(Errc::empty_workload, "the workload has no input items");
    WorkloadPlan p;
    p.scenario = scenario;
    p.item_count = n_items;
    p.warmup_requests = scenario.warmup_count;
    std::size_t cursor = 0;
    auto take = [&](std::size_t k) {
        std::vector<std::size_t> run;
        for (std::size_t i = 0; i < k; ++i) run.push_back(cursor++ % n_items);
        return run;
    };
    if (scenario.kind == ScenarioKind::batched) {
        const std::uint32_t b = *scenario.batch_size;
        if (scenario.count) {
            for (std::uint64_t r = 0; r < scenario.warmup_count + *scenario.count; ++r) p.requests.push_back(take(b));
        } else {
            // One pass of full batches (the last may be short), repeated until the deadline.
            for (std::uint64_t r = 0; r < scenario.warmup_count; ++r) p.requests.push_back(take(b));
            for (auto& run : partition_items(n_items, b)) p.requests.push_back(std::move(run));
            p.repeat_until_duration = true;
        }
        return p;
    }
    if (scenario.count) {
        p.schedule = gen_schedule(*scenario.arrival, scenario.warmup_count + *scenario.count, scenario.seed);
    } else {
        p.schedule = gen_schedule_for(*scenario.arrival, *scenario.duration_s, scenario.seed);
        if (p.schedule->offsets.size() <= p.warmup_requests) {
            throw Error(Errc::empty_workload, "no measured arrivals fall inside the duration");
        }
    }
    for (std::size_t r = 0; r < p.schedule->offsets.size(); ++r) p.requests.push_back(take(1));
    return p;
}

void to_json(Json& j, const RequestMeasurement& v) {
    j = Json{{"sequence", v.sequence},     {"issue_ns", v.issue_ns},     {"latency_ns", v.latency_ns},
             {"service_ns", v.service_ns}, {"batch_size", v.batch_size}, {"lateness_ns", v.lateness_ns},
             {"warmup", v.warmup},         {"success", v.success}};
    if (!v.error.empty()) j["error"] = v.error;
}

void from_json(const Json& j, RequestMeasurement& v) {
    v.sequence = j.value("sequence", std::uint64_t{0});
    v.issue_ns = j.value("issue_ns", std::int64_t{0});
    v.latency_ns = j.value("latency_ns", std::int64_t{0});
    v.service_ns = j.value("service_ns", std::int64_t{0});
    v.batch_size = j.value("batch_size", std::uint32_t{0});
    v.lateness_ns = j.value("lateness_ns", std::int64_t{0});
    v.warmup = j.value("warmup", false);
    v.success = j.value("success", true);
    v.error = j.value("error", std::string{});
}

namespace {

UserInput make_input(const WorkloadPlan& plan, const ItemSource& items, std::size_t request, std::uint64_t sequence,
                     std::int64_t issue_ns) {
    UserInput u;
    u.sequence = sequence;
    u.issue_ns = issue_ns;
    u.warmup = sequence < plan.warmup_requests;
    for (auto idx : plan.requests[request]) u.items.push_back(items(idx));
    return u;
}

[[noreturn]] void agent_failure(std::uint64_t request, const std::string& why) {
    throw Error(Errc::agent_error, "request " + std::to_string(request) + ": " + why);
}

FeaturesResponse expect_response(net::CallStream& stream, std::uint64_t request) {
    std::optional<Json> item;
    try {
        item = stream.next_item();
        if (!item) stream.result();
    } catch (const Error& e) {
        agent_failure(request, e.what());
    }
    if (!item) agent_failure(request, "the agent ended the stream early");
    return item->get<FeaturesResponse>();
}

void fill_outcome(RequestMeasurement& m, const FeaturesResponse& r) {
    m.service_ns = r.end_ns - r.start_ns;
    m.success = r.success;
    m.error = r.error;
    if (m.batch_size == 0) m.batch_size = r.batch_size;
}

std::vector<RequestMeasurement> run_closed_loop(const WorkloadPlan& plan, const ItemSource& items, AgentClient& agent,
                                                const PredictorHandle& handle) {
    const bool logical = handle.virtual_clock;
    const auto deadline_ns = plan.scenario.duration_s
                                 ? static_cast<std::int64_t>(std::llround(*plan.scenario.duration_s * 1e9))
                                 : std::int64_t{0};
    auto stream = agent.predict_stream(handle);
    std::vector<RequestMeasurement> out;
    const std::int64_t wall_start = wall_now_ns();
    std::int64_t clock = 0;  // logical time of the next issue
    for (std::uint64_t seq = 0;; ++seq) {
        std::size_t request = seq;
        if (plan.repeat_until_duration) {
            const std::int64_t elapsed = logical ? clock : wall_now_ns() - wall_start;
            if (seq >= plan.warmup_requests && elapsed >= deadline_ns && !out.empty()) break;
            if (seq >= plan.warmup_requests) {
                const std::size_t cycle = plan.requests.size() - plan.warmup_requests;
                request = plan.warmup_requests + (seq - plan.warmup_requests) % cycle;
            }
        } else if (seq >= plan.requests.size()) {
            break;
        }
        const std::int64_t send_ns = wall_now_ns();
        UserInput u = make_input(plan, items, request, seq, logical ? clock : send_ns);
        RequestMeasurement m;
        m.sequence = seq;
        m.warmup = u.warmup;
        m.batch_size = static_cast<std::uint32_t>(u.items.size());
        try {
            stream->send(Json(u));
        } catch (const Error& e) {
            agent_failure(seq, e.what());
        }
        const auto r = expect_response(*stream, seq);
        if (logical) {
            m.issue_ns = r.issue_ns;
            m.latency_ns = r.end_ns - r.issue_ns;
            clock = r.end_ns;
        } else {
            m.issue_ns = send_ns - wall_start;
            m.latency_ns = wall_now_ns() - send_ns;
        }
        fill_outcome(m, r);
        out.push_back(std::move(m));
    }
    stream->finish();
    try {
        while (stream->next_item()) {
        }
        stream->result();
    } catch (const Error& e) {
        agent_failure(out.size(), e.what());
    }
    return out;
}

std::vector<RequestMeasurement> run_open_loop(const WorkloadPlan& plan, const ItemSource& items, AgentClient& agent,
                                              const PredictorHandle& handle) {
    const bool logical = handle.virtual_clock;
    const auto& offsets = plan.schedule->offsets;
    const std::size_t n = offsets.size();
    std::vector<RequestMeasurement> out(n);
    std::vector<std::int64_t> sent_at(n, 0);
    std::vector<std::int64_t> received_at(n, 0);
    std::vector<std::optional<FeaturesResponse>> responses(n);

    auto stream = agent.predict_stream(handle);
    std::optional<Error> reader_error;
    std::thread reader([&] {
        try {
            while (auto item = stream->next_item()) {
                const auto now = wall_now_ns();
                auto r = item->get<FeaturesResponse>();
                if (r.sequence < n) {
                    received_at[r.sequence] = now;
                    responses[r.sequence] = std::move(r);
                }
            }
            stream->result();
        } catch (const Error& e) {
            reader_error = e;
        }
    });

    const std::int64_t wall_start = wall_now_ns();
    std::optional<Error> sender_error;
    for (std::size_t i = 0; i < n && !sender_error; ++i) {
        const auto offset_ns = static_cast<std::int64_t>(std::llround(offsets[i] * 1e9));
        out[i].sequence = i;
        out[i].issue_ns = offset_ns;
        if (!logical) {
            const auto target = wall_start + offset_ns;
            const auto now = wall_now_ns();
            if (now < target) std::this_thread::sleep_for(std::chrono::nanoseconds(target - now));
            // Late requests go out at once; the delay is recorded, never hidden.
            sent_at[i] = wall_now_ns();
            out[i].lateness_ns = std::max<std::int64_t>(0, sent_at[i] - target);
        }
        try {
            stream->send(Json(make_input(plan, items, i, i, logical ? offset_ns : wall_start + offset_ns)));
        } catch (const Error& e) {
            sender_error = e;
        }
    }
    try {
        stream->finish();
    } catch (const Error& e) {
        if (!sender_error) sender_error = e;
    }
    reader.join();

    for (std::size_t i = 0; i < n; ++i) {
        if (!responses[i]) {
            const auto& e = reader_error ? reader_error : sender_error;
            agent_failure(i, e ? e->what() : "no response");
        }
        const auto& r = *responses[i];
        auto& m = out[i];
        m.warmup = i < plan.warmup_requests;
        m.batch_size = static_cast<std::uint32_t>(plan.requests[i].size());
        m.latency_ns = logical ? r.end_ns - r.issue_ns : received_at[i] - sent_at[i];
        fill_outcome(m, r);
    }
    return out;
}

} // namespace

std::vector<RequestMeasurement> execute_plan(const WorkloadPlan& plan, const ItemSource& items, AgentClient& agent,
                                             const PredictorHandle& handle) {
    if (plan.requests.empty()) throw Error(Errc::empty_workload, "the plan has no requests");
    if (plan.scenario.kind == ScenarioKind::online && plan.schedule) return run_open_loop(plan, items, agent, handle);
    return run_closed_loop(plan, items, agent, handle);
}

} // namespace evalbench
