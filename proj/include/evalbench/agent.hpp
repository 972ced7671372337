// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Evaluation worker: resolves manifests, fetches assets, runs pipelines and
// keeps itself registered.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "evalbench/data.hpp"
#include "evalbench/net.hpp"
#include "evalbench/pipeline.hpp"
#include "evalbench/predictor.hpp"
#include "evalbench/registry.hpp"
#include "evalbench/tracer.hpp"

namespace evalbench {

struct AgentConfig {
    /// Defaults to "<hostname>-<pid>".
    std::string agent_id;
    net::Endpoint listen{"127.0.0.1", 0};
    std::optional<net::Endpoint> registry;
    std::optional<net::Endpoint> tracer;
    std::filesystem::path cache_root;
    /// Defaults to the machine architecture reported by the kernel.
    std::string architecture;
    std::optional<std::string> interconnect;
    /// Defaults to one CPU device.
    std::vector<DeviceInfo> devices;
    std::vector<PredictorConfig> predictors;
    std::vector<ModelManifest> builtin_models;
    std::chrono::milliseconds lease_ttl{3000};
};

/// Reads the YAML config file. Model manifest paths are relative to it.
/// Throws Error(Errc::validation) with a field path.
AgentConfig load_agent_config(const std::filesystem::path& path);
AgentConfig parse_agent_config(std::string_view yaml, const std::filesystem::path& base_dir = {});

/// EVALBENCH_REGISTRY, EVALBENCH_TRACER, EVALBENCH_AGENT_LISTEN and
/// EVALBENCH_CACHE override the corresponding fields when set.
void apply_env_overrides(AgentConfig& config);

/// Fills unset agent_id, architecture, devices and cache_root.
void fill_defaults(AgentConfig& config);

std::string detect_architecture();

/// Looks a model up outside the agent (normally the registry's catalog).
using ModelLookup = std::function<std::vector<ModelManifest>(const std::string& name)>;

/// Agent logic without the network: open, predict, close.
class AgentCore {
public:
    AgentCore(AgentConfig config, std::shared_ptr<SpanSink> spans, ModelLookup lookup = {},
              std::shared_ptr<AssetCache> cache = nullptr);
    ~AgentCore();

    /// Errors: NotFound (no model or predictor), IncompatibleManifest,
    /// ChecksumMismatch, FetchFailed, AssetMissing, ValidationError.
    PredictorHandle open(const OpenRequest& request);
    /// Runs requests through the handle's pipeline. Errors: HandleClosed.
    std::uint64_t predict(const PredictorHandle& handle, const std::function<std::optional<UserInput>()>& next,
                          const std::function<void(const FeaturesResponse&)>& emit);
    /// Unloads the model and publishes the evaluation root span.
    CloseResponse close(const PredictorHandle& handle);

    AgentRecord record() const;
    std::uint32_t in_flight() const;
    const AgentConfig& config() const noexcept { return config_; }
    /// Overrides the advertised endpoint once the service is listening.
    void set_endpoint(const std::string& endpoint);

private:
    struct Session;
    struct Backend {
        PredictorConfig config;
        std::unique_ptr<Predictor> predictor;
        PredictorSpec spec;
    };

    ModelManifest resolve_manifest(const OpenRequest& request) const;
    Backend& choose_backend(const OpenRequest& request, const ModelManifest& manifest);
    std::shared_ptr<Session> session(const std::string& id) const;

    AgentConfig config_;
    std::shared_ptr<SpanSink> spans_;
    ModelLookup lookup_;
    std::shared_ptr<AssetCache> cache_;
    std::vector<Backend> backends_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::string endpoint_;
    std::uint64_t next_session_ = 1;
};

/// Exposes an AgentCore over the frame protocol with methods open,
/// predict (streamed) and close, plus info.
class AgentService {
public:
    AgentService(std::shared_ptr<AgentCore> core, net::Endpoint bind = {});
    void start() { server_.start(); }
    void stop() { server_.stop(); }
    net::Endpoint endpoint() const { return server_.endpoint(); }

private:
    std::shared_ptr<AgentCore> core_;
    net::RpcServer server_;
};

/// A running agent: service, tracer publication, registration and heartbeats.
class Agent {
public:
    explicit Agent(AgentConfig config);
    ~Agent();

    Agent(const Agent&) = delete;
    Agent& operator=(const Agent&) = delete;

    /// Starts serving and, when a registry is configured, registers in the
    /// background. Registration failures are retried with backoff.
    void start();
    void stop();

    /// Blocks until registered or the timeout passes.
    bool wait_registered(std::chrono::milliseconds timeout);
    bool registered() const;
    net::Endpoint endpoint() const;
    AgentCore& core() { return *core_; }

private:
    void lease_loop();

    AgentConfig config_;
    std::shared_ptr<AsyncPublisher> publisher_;
    std::shared_ptr<RegistryClient> registry_;
    std::shared_ptr<AgentCore> core_;
    std::unique_ptr<AgentService> service_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<std::string> lease_;
    bool stopping_ = false;
    std::thread lease_thread_;
};

/// Client side of an agent's service.
class AgentClient {
public:
    /// Throws Error(Errc::transport) when the agent cannot be reached.
    explicit AgentClient(const net::Endpoint& ep);

    PredictorHandle open(const OpenRequest& request);
    /// Streamed predict; send UserInput items and read FeaturesResponse items.
    std::unique_ptr<net::CallStream> predict_stream(const PredictorHandle& handle);
    /// Sends every request up front and collects the responses.
    std::vector<FeaturesResponse> predict(const PredictorHandle& handle, const std::vector<UserInput>& requests);
    CloseResponse close(const PredictorHandle& handle);
    Json info();

private:
    std::shared_ptr<net::RpcClient> client_;
};

} // namespace evalbench
