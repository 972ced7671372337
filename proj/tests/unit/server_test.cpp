// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include <gtest/gtest.h>
#include <httplib.h>

#include <regex>
#include <set>

#include "evalbench/devstack.hpp"
#include "evalbench/error.hpp"
#include "test_util.hpp"

namespace evalbench {
namespace {

constexpr auto kWait = std::chrono::seconds(60);

EvaluationSubmission batched(std::uint32_t b, std::uint64_t count, TraceLevel level = TraceLevel::none) {
    EvaluationSubmission s;
    s.request.model_name = "MLPerf_ResNet50_v1.5";
    s.request.framework_name = "TensorFlow";
    s.request.framework_version = ">=1.12.0 <2.0";
    s.request.benchmark_scenario.kind = ScenarioKind::batched;
    s.request.benchmark_scenario.batch_size = b;
    s.request.benchmark_scenario.count = count;
    s.request.predict_options.trace_level = level;
    s.workload.items = 8;
    s.workload.image_side = 8;
    return s;
}

TEST(ServerTest, UlidShape) {
    const std::regex crockford("[0-9A-HJKMNP-TV-Z]{26}");
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i) {
        const auto id = new_ulid();
        EXPECT_TRUE(std::regex_match(id, crockford)) << id;
        seen.insert(id);
    }
    EXPECT_EQ(seen.size(), 200u);
}

TEST(ServerTest, JobStateMachine) {
    using S = JobState;
    EXPECT_TRUE(legal_transition(S::pending, S::resolving));
    EXPECT_TRUE(legal_transition(S::resolving, S::dispatched));
    EXPECT_TRUE(legal_transition(S::dispatched, S::running));
    EXPECT_TRUE(legal_transition(S::running, S::completed));
    for (auto s : {S::pending, S::resolving, S::dispatched, S::running}) EXPECT_TRUE(legal_transition(s, S::failed));
    EXPECT_FALSE(legal_transition(S::pending, S::running));
    EXPECT_FALSE(legal_transition(S::completed, S::failed));
    EXPECT_FALSE(legal_transition(S::failed, S::pending));
    EXPECT_FALSE(legal_transition(S::running, S::resolving));
}

TEST(ServerTest, SubmissionJsonRoundTrip) {
    auto s = batched(4, 2, TraceLevel::model);
    s.fan_out = FanOut::all;
    s.hw.min_memory_bytes = 1024;
    s.workload.record_file = "/tmp/x.rec";
    const auto back = Json(s).get<EvaluationSubmission>();
    EXPECT_EQ(Json(back), Json(s));
    EXPECT_ERRC(Json::parse(R"({"request": {}, "fan_out": "some"})").get<EvaluationSubmission>(), Errc::validation);
}

TEST(ServerTest, SyntheticItemsAreDeterministic) {
    WorkloadSpec w;
    w.items = 3;
    w.image_side = 4;
    const auto a = synthesize_items(w, "image");
    EXPECT_EQ(a, synthesize_items(w, "image"));
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0].rfind("P6\n4 4\n255\n", 0), 0u);
    EXPECT_EQ(a[0].size(), 11u + 48u);
    EXPECT_NE(a[0], a[1]);
    const auto r = synthesize_items(w, "raw");
    EXPECT_EQ(r[0].size(), 16u);
}

class DevStackTest : public ::testing::Test {
protected:
    void start(std::size_t agents = 1) {
        DevStackOptions o;
        o.evaldb_dir = dir_.path() / "db";
        o.agents = agents;
        stack_ = std::make_unique<DevStack>(o);
        stack_->start();
    }
    EvaluationJob run(Server& server, const EvaluationSubmission& s) {
        const auto id = server.submit(s);
        auto job = server.wait(id, kWait);
        EXPECT_TRUE(job.has_value());
        return *job;
    }

    testing::TempDir dir_;
    std::unique_ptr<DevStack> stack_;
};

TEST_F(DevStackTest, ReferenceRequestCompletes) {
    start();
    auto s = batched(256, 1, TraceLevel::full);
    s.request.trace_id = "0123456789abcdef0123456789abcdef";
    const auto job = run(stack_->server(), s);
    ASSERT_EQ(job.state, JobState::completed) << job.error;
    EXPECT_EQ(job.history, (std::vector<JobState>{JobState::pending, JobState::resolving, JobState::dispatched,
                                                  JobState::running, JobState::completed}));
    ASSERT_EQ(job.result_ids.size(), 1u);
    const auto r = stack_->server().evaldb().get(job.result_ids[0]);
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(r->model_name, "MLPerf_ResNet50_v1.5");
    EXPECT_EQ(r->framework_version, (SemVer{1, 13, 1}));
    EXPECT_TRUE(r->virtual_clock);
    ASSERT_EQ(r->measurements.size(), 1u);
    EXPECT_EQ(r->measurements[0].batch_size, 256u);
    EXPECT_EQ(r->measurements[0].latency_ns, 2'000'000 + 500'000 * 256);
    EXPECT_EQ(r->trace_id, s.request.trace_id);
    EXPECT_GT(stack_->traces().span_count(s.request.trace_id), 3u);

    const auto summary = stack_->server().job_summary(job.job_id);
    EXPECT_EQ(summary.at("state"), "completed");
    ASSERT_EQ(summary.at("results").size(), 1u);
    EXPECT_DOUBLE_EQ(summary["results"][0]["throughput"].get<double>(), 256 * 1e9 / 130'000'000.0);
}

TEST_F(DevStackTest, FanOutAllRunsOnEveryCapableAgent) {
    start(3);
    auto s = batched(2, 2);
    s.fan_out = FanOut::all;
    const auto job = run(stack_->server(), s);
    ASSERT_EQ(job.state, JobState::completed) << job.error;
    ASSERT_EQ(job.result_ids.size(), 3u);
    std::set<std::string> agents;
    for (const auto& id : job.result_ids) agents.insert(stack_->server().evaldb().get(id)->agent.agent_id);
    EXPECT_EQ(agents, (std::set<std::string>{"dev-agent-1", "dev-agent-2", "dev-agent-3"}));
    EXPECT_EQ(std::set<std::string>(job.agents.begin(), job.agents.end()), agents);
}

TEST_F(DevStackTest, ImpossibleHardwareFailsWithNoCapableAgent) {
    start();
    auto s = batched(1, 1);
    s.hw.device_kind = DeviceKind::fpga;
    const auto job = run(stack_->server(), s);
    EXPECT_EQ(job.state, JobState::failed);
    EXPECT_EQ(job.error.rfind("NoCapableAgent", 0), 0u) << job.error;
    EXPECT_TRUE(job.result_ids.empty());
}

TEST_F(DevStackTest, SubmitValidates) {
    start();
    auto s = batched(1, 1);
    s.request.model_name.clear();
    EXPECT_ERRC(stack_->server().submit(s), Errc::validation);
    s = batched(0, 1);
    EXPECT_ERRC(stack_->server().submit(s), Errc::validation);
    s = batched(1, 1);
    s.request.framework_version = ">=banana";
    EXPECT_ERRC(stack_->server().submit(s), Errc::syntax);
    s = batched(1, 1);
    s.workload.record_file = (dir_.path() / "missing.rec").string();
    EXPECT_ERRC(stack_->server().submit(s), Errc::validation);
}

TEST_F(DevStackTest, RecordFileSuppliesItems) {
    start();
    WorkloadSpec w;
    w.items = 5;
    w.image_side = 6;
    const auto path = dir_.path() / "items.rec";
    write_record_file(path, synthesize_items(w, "image"));
    auto s = batched(2, 3);
    s.workload.record_file = path.string();
    const auto job = run(stack_->server(), s);
    ASSERT_EQ(job.state, JobState::completed) << job.error;
}

TEST_F(DevStackTest, TwoServersProduceEquivalentOutcomes) {
    start();
    auto second = stack_->make_server();
    std::vector<Json> summaries;
    for (int i = 0; i < 4; ++i) {
        Server& s = i % 2 == 0 ? stack_->server() : *second;
        const auto job = run(s, batched(4, 3, TraceLevel::model));
        ASSERT_EQ(job.state, JobState::completed) << job.error;
        summaries.push_back(s.job_summary(job.job_id));
    }
    for (const auto& j : summaries) EXPECT_EQ(j, summaries[0]);
    // Both see all four results through the shared store.
    EXPECT_EQ(stack_->server().evaldb().size(), 4u);
    EXPECT_EQ(second->evaldb().size(), 4u);
    const auto report_id = second->submit_analysis({}, {}, {});
    EXPECT_TRUE(stack_->server().analysis(report_id).has_value());
}

TEST_F(DevStackTest, VirtualClockSummaryIsDeterministic) {
    start();
    auto s = batched(8, 4, TraceLevel::framework);
    s.request.benchmark_scenario.warmup_count = 1;
    const auto a = run(stack_->server(), s);
    const auto b = run(stack_->server(), s);
    ASSERT_EQ(a.state, JobState::completed) << a.error;
    EXPECT_EQ(stack_->server().job_summary(a.job_id).dump(), stack_->server().job_summary(b.job_id).dump());

    EvaluationSubmission online = batched(1, 20);
    online.request.benchmark_scenario = BenchmarkScenario{};
    online.request.benchmark_scenario.kind = ScenarioKind::online;
    online.request.benchmark_scenario.arrival = Arrival{ArrivalDistribution::poisson, 200.0};
    online.request.benchmark_scenario.count = 20;
    online.request.benchmark_scenario.seed = 7;
    const auto c = run(stack_->server(), online);
    const auto d = run(stack_->server(), online);
    ASSERT_EQ(c.state, JobState::completed) << c.error;
    EXPECT_EQ(stack_->server().job_summary(c.job_id).dump(), stack_->server().job_summary(d.job_id).dump());
}

TEST_F(DevStackTest, RetriesOnAnotherAgentAfterConnectionFailure) {
    start();
    // A record whose endpoint refuses connections and that sorts first.
    AgentRecord ghost = stack_->agent(0).core().record();
    ghost.agent_id = "a-ghost";
    ghost.endpoint = "127.0.0.1:1";
    stack_->registry().register_agent(ghost, std::chrono::minutes(1));
    const auto job = run(stack_->server(), batched(2, 2));
    ASSERT_EQ(job.state, JobState::completed) << job.error;
    EXPECT_EQ(job.agents, (std::vector<std::string>{"dev-agent-1"}));
    EXPECT_EQ(stack_->server().evaldb().get(job.result_ids[0])->agent.agent_id, "dev-agent-1");
}

TEST_F(DevStackTest, RestEndpoints) {
    start();
    httplib::Client http(stack_->server().base_url());
    http.set_read_timeout(60, 0);

    auto s = batched(4, 2, TraceLevel::full);
    auto res = http.Post("/api/v1/evaluations", Json(s).dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 202) << res->body;
    const auto id = Json::parse(res->body).at("job_id").get<std::string>();
    ASSERT_TRUE(stack_->server().wait(id, kWait).has_value());

    res = http.Get("/api/v1/evaluations/" + id);
    ASSERT_TRUE(res);
    const Json job = Json::parse(res->body);
    EXPECT_EQ(job.at("state"), "completed");
    EXPECT_EQ(job.at("progress"), (Json{{"completed", 1}, {"total", 1}}));

    res = http.Get("/api/v1/evaluations/" + id + "/summary");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, stack_->server().job_summary(id).dump());

    res = http.Get("/api/v1/agents");
    ASSERT_TRUE(res);
    EXPECT_EQ(Json::parse(res->body).size(), 1u);

    res = http.Get("/api/v1/models?attr.task=image_classification");
    ASSERT_TRUE(res);
    const Json models = Json::parse(res->body);
    ASSERT_EQ(models.size(), 1u);
    EXPECT_EQ(models[0].at("name"), "MLPerf_ResNet50_v1.5");
    EXPECT_EQ(models[0].at("source"), "catalog");

    const auto result = stack_->server().evaldb().get(job.at("result_ids")[0].get<std::string>());
    ASSERT_TRUE(result && result->trace_id);
    res = http.Get("/api/v1/traces/" + *result->trace_id);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const Json full = Json::parse(res->body);
    res = http.Get("/api/v1/traces/" + *result->trace_id + "?level=model");
    ASSERT_TRUE(res);
    EXPECT_LT(res->body.size(), full.dump().size());
    res = http.Get("/api/v1/traces/ffffffffffffffffffffffffffffffff");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);

    res = http.Post("/api/v1/analyses", R"({"filter": {"model_name": "MLPerf_ResNet50_v1.5"}})", "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 201) << res->body;
    const auto report = Json::parse(res->body).at("report_id").get<std::string>();
    res = http.Get("/api/v1/analyses/" + report);
    ASSERT_TRUE(res);
    EXPECT_EQ(Json::parse(res->body).at("report_id"), report);
    EXPECT_FALSE(Json::parse(res->body).at("layers").empty());
    res = http.Get("/api/v1/analyses/" + report + "/html");
    ASSERT_TRUE(res);
    EXPECT_NE(res->body.find("<html"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir_.path() / "db" / "reports" / (report + ".html")));

    // Job ids expand to their stored results; unknown ids are 404.
    res = http.Post("/api/v1/analyses", Json{{"evaluation_ids", {id}}}.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201) << res->body;
    res = http.Post("/api/v1/analyses", R"({"evaluation_ids": ["missing"]})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);

    res = http.Post("/api/v1/analyses", R"({"filter": {"model_name": "nothing"}})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 409);
    EXPECT_EQ(Json::parse(res->body).at("error").at("code"), "NoData");

    res = http.Post("/api/v1/evaluations", "{not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    res = http.Get("/api/v1/evaluations/NOPE");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
    EXPECT_EQ(Json::parse(res->body).at("error").at("code"), "NotFound");
}

} // namespace
} // namespace evalbench
