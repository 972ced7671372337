// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// A complete platform in one process: registry, tracer, server and agents
// backed by the synthetic predictor. Used for demos and end-to-end tests.
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evalbench/agent.hpp"
#include "evalbench/server.hpp"

namespace evalbench {

/// ResNet-50 style manifest served by the dev stack. It runs on the
/// synthetic backend, so it names no labels file and no checksum.
std::string dev_model_manifest_text();

struct DevStackOptions {
    std::filesystem::path evaldb_dir;
    std::size_t agents = 1;
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    std::uint16_t server_port = 0;
    /// Passed to every synthetic predictor ("synthetic.base_ms" and friends).
    std::map<std::string, std::string> predictor_options;
};

class DevStack {
public:
    explicit DevStack(DevStackOptions options);
    ~DevStack();

    DevStack(const DevStack&) = delete;
    DevStack& operator=(const DevStack&) = delete;

    /// Starts everything and waits until every agent is registered.
    void start();
    void stop();

    /// Starts another agent against the running registry and tracer.
    Agent& add_agent();

    Server& server() { return *server_; }
    Registry& registry() { return registry_service_->registry(); }
    TraceStore& traces() { return tracer_service_->store(); }
    net::Endpoint registry_endpoint() const { return registry_service_->endpoint(); }
    net::Endpoint tracer_endpoint() const { return tracer_service_->endpoint(); }
    std::size_t agent_count() const { return agents_.size(); }
    Agent& agent(std::size_t i) { return *agents_.at(i); }

    /// A second server over the same registry, tracer and result directory.
    std::unique_ptr<Server> make_server() const;

private:
    DevStackOptions options_;
    std::unique_ptr<RegistryService> registry_service_;
    std::unique_ptr<TracerService> tracer_service_;
    std::unique_ptr<Server> server_;
    std::vector<std::unique_ptr<Agent>> agents_;
    bool started_ = false;
};

} // namespace evalbench
