// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <thread>

#include "evalbench/agent.hpp"
#include "evalbench/scenarios.hpp"
#include "test_util.hpp"

namespace evalbench {
namespace {

// Reference outputs computed independently (Python, 64-bit masked arithmetic).
TEST(SplitMix64Test, KnownVectors) {
    SplitMix64 a(0);
    EXPECT_EQ(a.next(), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(a.next(), 0x6e789e6aa1b965f4ULL);
    EXPECT_EQ(a.next(), 0x06c45d188009454fULL);
    SplitMix64 b(42);
    EXPECT_EQ(b.next(), 0xbdd732262feb6e95ULL);
    EXPECT_EQ(b.next(), 0x28efe333b266f103ULL);
    EXPECT_EQ(b.next(), 0x47526757130f9f52ULL);
}

TEST(ArrivalTest, PoissonFirstOffsetsAreFrozen) {
    const auto s = gen_poisson(100.0, 5, 42);
    const double want[] = {0.013531105982440143, 0.015273573159316572, 0.018539203931979237, 0.022758056519130706,
                           0.023145778409501896};
    ASSERT_EQ(s.offsets.size(), 5u);
    for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(s.offsets[i], want[i]) << i;
}

TEST(ArrivalTest, PoissonMomentsMatchRate) {
    const auto s = gen_poisson(100.0, 100000, 7);
    std::vector<double> gaps(s.offsets.size());
    std::adjacent_difference(s.offsets.begin(), s.offsets.end(), gaps.begin());
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / gaps.size();
    double var = 0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    const double cv = std::sqrt(var / (gaps.size() - 1)) / mean;
    EXPECT_NEAR(mean, 0.01, 0.01 * 0.03);
    EXPECT_NEAR(cv, 1.0, 0.05);
}

TEST(ArrivalTest, SeedsAreReproducibleAndDistinct) {
    for (auto d : {ArrivalDistribution::poisson, ArrivalDistribution::uniform}) {
        const Arrival a{d, 50.0};
        EXPECT_EQ(gen_schedule(a, 200, 9).offsets, gen_schedule(a, 200, 9).offsets);
        EXPECT_NE(gen_schedule(a, 200, 9).offsets, gen_schedule(a, 200, 10).offsets);
    }
}

TEST(ArrivalTest, ShapesOfEachDistribution) {
    const auto f = gen_fixed(4.0, 4);
    EXPECT_EQ(f.offsets, (std::vector<double>{0.25, 0.5, 0.75, 1.0}));

    const auto u = gen_uniform(10.0, 1000, 3);
    double prev = 0;
    for (double t : u.offsets) {
        EXPECT_GE(t - prev, 0.0);
        EXPECT_LT(t - prev, 0.2);
        prev = t;
    }

    const auto one = gen_poisson(5.0, 1, 1);
    ASSERT_EQ(one.offsets.size(), 1u);
    EXPECT_GT(one.offsets[0], 0.0);

    EXPECT_ERRC(gen_poisson(0.0, 3, 1), Errc::validation);
    EXPECT_ERRC(gen_fixed(-1.0, 3), Errc::validation);
}

TEST(ArrivalTest, DurationBoundedSchedules) {
    const auto s = gen_schedule_for(Arrival{ArrivalDistribution::poisson, 200.0}, 2.0, 5);
    ASSERT_FALSE(s.offsets.empty());
    EXPECT_LT(s.offsets.back(), 2.0);
    EXPECT_TRUE(std::is_sorted(s.offsets.begin(), s.offsets.end()));
    EXPECT_EQ(gen_schedule_for(Arrival{ArrivalDistribution::fixed, 8.0}, 1.0, 0).offsets.size(), 7u);
    EXPECT_EQ(gen_schedule_for(Arrival{ArrivalDistribution::fixed, 10.0}, 100.0, 0, 7).offsets.size(), 7u);
    const auto j = schedule_to_json(gen_fixed(2.0, 2));
    EXPECT_EQ(j.at("distribution"), "fixed");
    EXPECT_EQ(j.at("offsets").size(), 2u);
}

TEST(PartitionTest, Examples) {
    EXPECT_EQ(partition_items(10, 4), (std::vector<std::vector<std::size_t>>{{0, 1, 2, 3}, {4, 5, 6, 7}, {8, 9}}));
    const auto singles = partition_items(10, 1);
    ASSERT_EQ(singles.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(singles[i], std::vector<std::size_t>{i});
    EXPECT_EQ(partition_items(3, 64).size(), 1u);
    EXPECT_ERRC(partition_items(0, 4), Errc::empty_workload);
    EXPECT_ERRC(partition_items(4, 0), Errc::validation);
}

TEST(PartitionTest, ConservationProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng() % 300;
        const auto b = static_cast<std::uint32_t>(1 + rng() % 70);
        const auto runs = partition_items(n, b);
        EXPECT_EQ(runs.size(), (n + b - 1) / b);
        std::vector<std::size_t> flat;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            EXPECT_FALSE(runs[r].empty());
            EXPECT_LE(runs[r].size(), b);
            if (r + 1 < runs.size()) EXPECT_EQ(runs[r].size(), b);
            flat.insert(flat.end(), runs[r].begin(), runs[r].end());
        }
        std::vector<std::size_t> want(n);
        std::iota(want.begin(), want.end(), 0);
        EXPECT_EQ(flat, want);
    }
}

BenchmarkScenario batched(std::uint32_t b, std::uint64_t count, std::uint64_t warmup = 0) {
    BenchmarkScenario s;
    s.kind = ScenarioKind::batched;
    s.batch_size = b;
    s.count = count;
    s.warmup_count = warmup;
    return s;
}

BenchmarkScenario online(ArrivalDistribution d, double rate, std::uint64_t count, std::uint64_t seed = 1) {
    BenchmarkScenario s;
    s.kind = ScenarioKind::online;
    s.arrival = Arrival{d, rate};
    s.count = count;
    s.seed = seed;
    return s;
}

TEST(PlanTest, ScenarioPlans) {
    const auto p = plan_scenario(batched(4, 3, 2), 6);
    ASSERT_EQ(p.requests.size(), 5u);
    EXPECT_EQ(p.warmup_requests, 2u);
    EXPECT_EQ(p.requests[1], (std::vector<std::size_t>{4, 5, 0, 1}));  // inputs cycle

    const auto o = plan_scenario(online(ArrivalDistribution::poisson, 100, 10, 42), 3);
    ASSERT_TRUE(o.schedule);
    EXPECT_EQ(o.schedule->offsets.size(), 10u);
    EXPECT_DOUBLE_EQ(o.schedule->offsets[0], 0.013531105982440143);
    for (const auto& r : o.requests) EXPECT_EQ(r.size(), 1u);

    auto timed = batched(4, 1);
    timed.count.reset();
    timed.duration_s = 0.5;
    const auto t = plan_scenario(timed, 10);
    EXPECT_TRUE(t.repeat_until_duration);
    EXPECT_EQ(t.requests.size(), 3u);

    const auto pb = plan_batched(10, 4);
    EXPECT_EQ(pb.requests.size(), 3u);
    EXPECT_ERRC(plan_scenario(batched(4, 1), 0), Errc::empty_workload);
}

TEST(MeasurementTest, JsonRoundTrip) {
    RequestMeasurement m{3, 10, 20, 15, 8, 1, true, false, "boom"};
    RequestMeasurement back = Json(m).get<RequestMeasurement>();
    EXPECT_EQ(back, m);
}

// ---------------------------------------------------------------------------
// Execution against a live agent.

std::string floats(const std::vector<float>& v) {
    std::string out(v.size() * 4, '\0');
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

const std::string kManifest = "name: vec\nversion: 1.0.0\nframework:\n  name: Synth\n  version: '>=1.0'\ninputs:\n"
                              "  - type: vector\n    layer_name: x\noutputs:\n  - type: logits\n    layer_name: y\n"
                              "model:\n  base_url: file:///nonexistent/\n  graph_path: w.bin\n  weights_path: c.bin\n";

/// Wall-clock predictor that takes a fixed time per batch.
class SleepPredictor final : public Predictor {
public:
    PredictorSpec spec() const override {
        return PredictorSpec{"sleep", "Synth", SemVer{1, 0, 0}, {ElementType::float32}, {DeviceKind::cpu}, false, false};
    }
    ModelHandle model_load(const ModelManifest& m, const ModelAssets&, const PredictOptions&, ExecContext&) override {
        return ModelHandle{"sleep", std::make_shared<ModelManifest>(m), 0};
    }
    TensorValue predict(const ModelHandle&, const TensorValue& batch, const PredictOptions&, ExecContext&) override {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return TensorValue{ElementType::float32, {batch.shape.at(0), 1},
                           std::vector<float>(static_cast<std::size_t>(batch.shape.at(0)), 0.0f)};
    }
    void model_unload(const ModelHandle&) override {}
};

struct LiveAgent {
    testing::TempDir dir;
    std::unique_ptr<Agent> agent;
    explicit LiveAgent(const std::string& backend) {
        AgentConfig c;
        c.agent_id = "scn";
        c.cache_root = dir.path();
        c.predictors.push_back(PredictorConfig{backend, "Synth", SemVer{1, 0, 0}, {}});
        c.builtin_models.push_back(parse_model_manifest(kManifest));
        agent = std::make_unique<Agent>(c);
        agent->start();
    }
    ~LiveAgent() { agent->stop(); }
};

OpenRequest open_for(const BenchmarkScenario& s) {
    OpenRequest r;
    r.model_name = "vec";
    r.benchmark_scenario = s;
    r.trace_id = "000000000000000000000000000000c4";
    return r;
}

const ItemSource kItems = [](std::size_t i) { return floats({float(i)}); };

TEST(ExecuteTest, ClosedLoopOnVirtualClock) {
    LiveAgent live("synthetic");
    AgentClient client(live.agent->endpoint());
    const auto scenario = batched(8, 4, 1);
    auto h = client.open(open_for(scenario));
    ASSERT_TRUE(h.virtual_clock);
    const auto out = execute_plan(plan_scenario(scenario, 32), kItems, client, h);
    ASSERT_EQ(out.size(), 5u);
    for (std::size_t k = 0; k < out.size(); ++k) {
        EXPECT_EQ(out[k].sequence, k);
        EXPECT_EQ(out[k].warmup, k == 0);
        EXPECT_EQ(out[k].batch_size, 8u);
        EXPECT_EQ(out[k].latency_ns, 6'000'000);  // 2 ms + 8 x 0.5 ms
        EXPECT_EQ(out[k].issue_ns, std::int64_t(k) * 6'000'000);
        EXPECT_TRUE(out[k].success);
    }
    EXPECT_EQ(client.close(h).requests, 5u);
}

TEST(ExecuteTest, ClosedLoopUntilDuration) {
    LiveAgent live("synthetic");
    AgentClient client(live.agent->endpoint());
    auto scenario = batched(4, 1);
    scenario.count.reset();
    scenario.duration_s = 0.05;
    auto h = client.open(open_for(scenario));
    const auto out = execute_plan(plan_scenario(scenario, 6), kItems, client, h);
    // Batches of 4 and 2 alternate at 4 ms and 3 ms: issues at 0, 4, 7, ..., 46, 49 ms.
    ASSERT_EQ(out.size(), 15u);
    EXPECT_EQ(out[1].batch_size, 2u);  // the short tail of the first pass
    EXPECT_LT(out.back().issue_ns, 50'000'000);
    client.close(h);
}

TEST(ExecuteTest, OpenLoopFollowsScheduleOnVirtualClock) {
    LiveAgent live("synthetic");
    AgentClient client(live.agent->endpoint());
    const auto scenario = online(ArrivalDistribution::poisson, 100, 20, 42);
    auto h = client.open(open_for(scenario));
    const auto plan = plan_scenario(scenario, 5);
    const auto out = execute_plan(plan, kItems, client, h);
    ASSERT_EQ(out.size(), 20u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].issue_ns, std::llround(plan.schedule->offsets[i] * 1e9));
        EXPECT_GE(out[i].latency_ns, 2'500'000);
        EXPECT_EQ(out[i].lateness_ns, 0);
    }
    client.close(h);
}

// A slow server must not slow the sender down: requests keep going out on
// schedule and the backlog shows up as growing latency.
TEST(ExecuteTest, OpenLoopDoesNotCoordinateWithSlowServer) {
    register_backend("sleep", [](const PredictorConfig&) { return std::make_unique<SleepPredictor>(); });
    LiveAgent live("sleep");
    AgentClient client(live.agent->endpoint());
    const auto scenario = online(ArrivalDistribution::fixed, 200, 10);  // one every 5 ms, served in 20 ms
    auto h = client.open(open_for(scenario));
    ASSERT_FALSE(h.virtual_clock);
    const auto out = execute_plan(plan_scenario(scenario, 10), kItems, client, h);
    ASSERT_EQ(out.size(), 10u);
    std::int64_t worst_lateness = 0;
    for (const auto& m : out) worst_lateness = std::max(worst_lateness, m.lateness_ns);
    EXPECT_LT(worst_lateness, 20'000'000);
    // Ten 20 ms services behind a 45 ms send window: the last waits >= 150 ms.
    EXPECT_GE(out.back().latency_ns, 150'000'000);
    EXPECT_LT(out.front().latency_ns, out.back().latency_ns);
    for (const auto& m : out) EXPECT_GE(m.service_ns, 20'000'000);
    client.close(h);
}

TEST(ExecuteTest, ClosedHandleIsAgentError) {
    LiveAgent live("synthetic");
    AgentClient client(live.agent->endpoint());
    const auto scenario = batched(2, 2);
    auto h = client.open(open_for(scenario));
    client.close(h);
    try {
        execute_plan(plan_scenario(scenario, 4), kItems, client, h);
        FAIL() << "expected agent_error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::agent_error);
        EXPECT_NE(std::string(e.what()).find("request 0"), std::string::npos) << e.what();
    }
}

} // namespace
} // namespace evalbench
