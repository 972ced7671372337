// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Orchestrator: accepts evaluation jobs over REST, resolves them against the
// registry, drives agents, stores results and builds analysis reports.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evalbench/analysis.hpp"
#include "evalbench/evaldb.hpp"
#include "evalbench/net.hpp"
#include "evalbench/registry.hpp"
#include "evalbench/tracer.hpp"

namespace httplib {
class Server;
}

namespace evalbench {

/// 26-character Crockford base32 ULID: 48-bit millisecond time, 80 random bits.
std::string new_ulid();

enum class JobState { pending, resolving, dispatched, running, completed, failed };
std::string_view to_string(JobState s) noexcept;
/// pending -> resolving -> dispatched -> running -> completed, and any
/// non-terminal state -> failed.
bool legal_transition(JobState from, JobState to) noexcept;

enum class FanOut { one, all };
std::string_view to_string(FanOut f) noexcept;

/// Where input items come from. A record file wins over the generator.
struct WorkloadSpec {
    std::optional<std::string> record_file;
    /// Distinct synthetic items; requests reuse them cyclically.
    std::size_t items = 64;
    /// Side of the generated square PPM images for image models.
    std::uint32_t image_side = 32;
    /// float32 values per generated item for raw-input models.
    std::uint32_t raw_elements = 4;
    std::uint64_t seed = 1;
};

struct EvaluationSubmission {
    OpenRequest request;
    HardwareConstraint hw;
    FanOut fan_out = FanOut::one;
    WorkloadSpec workload;
};

void to_json(Json& j, const WorkloadSpec& v);
void from_json(const Json& j, WorkloadSpec& v);
void to_json(Json& j, const EvaluationSubmission& v);
void from_json(const Json& j, EvaluationSubmission& v);

/// Deterministic synthetic items for a given input format ("image" or "raw").
std::vector<std::string> synthesize_items(const WorkloadSpec& w, const std::string& input_format);

struct EvaluationJob {
    std::string job_id;
    EvaluationSubmission submission;
    JobState state = JobState::pending;
    std::vector<JobState> history;
    /// Agents chosen at dispatch, in dispatch order.
    std::vector<std::string> agents;
    std::vector<std::string> result_ids;
    /// "<ErrorName>: message" once failed.
    std::string error;
    std::int64_t created_ms = 0;
};

/// Job status document; "progress" counts stored results over dispatched agents.
Json job_to_json(const EvaluationJob& job);

struct ServerConfig {
    net::Endpoint listen{"127.0.0.1", 0};
    net::Endpoint registry;
    std::optional<net::Endpoint> tracer;
    std::filesystem::path evaldb_dir = "evalbench-db";
    /// Connect and open attempts per dispatch before the job fails.
    int dispatch_attempts = 2;
};

/// EVALBENCH_REGISTRY, EVALBENCH_TRACER, EVALBENCH_EVALDB and
/// EVALBENCH_SERVER_LISTEN override the corresponding fields when set.
void apply_env_overrides(ServerConfig& config);

class Server {
public:
    explicit Server(ServerConfig config);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and serves REST under /api/v1 on a background thread.
    void start();
    void stop();
    /// "host:port" once started.
    net::Endpoint endpoint() const;
    std::string base_url() const;

    /// Validates and queues the job. Throws Error(Errc::validation) (or
    /// syntax for a bad constraint); resolution failures surface as a
    /// failed job.
    std::string submit(const EvaluationSubmission& submission);
    std::optional<EvaluationJob> job(const std::string& id) const;
    /// Jobs known to this instance, oldest first.
    std::vector<std::string> job_ids() const;
    /// Blocks until the job reaches a terminal state or the timeout passes.
    std::optional<EvaluationJob> wait(const std::string& id, std::chrono::milliseconds timeout) const;
    /// Condensed, id- and timestamp-free summary. Throws Error(Errc::not_found).
    Json job_summary(const std::string& id) const;

    /// Runs the analysis over matching results and persists the report.
    /// `evaluation_ids` may name results or jobs of this instance.
    /// Throws Error(Errc::no_data) when nothing matches.
    std::string submit_analysis(const QueryFilter& filter, const std::vector<std::string>& evaluation_ids,
                                const ReportOptions& options);
    std::optional<Report> analysis(const std::string& id) const;

    EvalDb& evaldb() { return *db_; }

private:
    void run_job(const std::string& id);
    void set_state(const std::string& id, JobState s, const std::string& error = {});
    EvaluationResult run_on_agent(const EvaluationJob& job, const AgentRecord& agent, const std::string& trace_id);
    std::optional<Timeline> fetch_timeline(const std::string& trace_id);
    void install_routes();

    ServerConfig config_;
    std::shared_ptr<EvalDb> db_;
    std::unique_ptr<RegistryClient> registry_;
    std::unique_ptr<TracerClient> tracer_;
    std::unique_ptr<httplib::Server> http_;
    std::thread http_thread_;
    int port_ = 0;

    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::map<std::string, EvaluationJob> jobs_;
    std::map<std::string, Report> reports_;
    std::vector<std::thread> workers_;
    bool stopping_ = false;
};

} // namespace evalbench
