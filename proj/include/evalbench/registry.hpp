// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evalbench/clock.hpp"
#include "evalbench/manifest.hpp"
#include "evalbench/net.hpp"
#include "evalbench/protocol.hpp"

namespace evalbench {

struct DeviceInfo {
    DeviceKind kind = DeviceKind::cpu;
    std::string name;
    std::uint64_t memory_bytes = 0;
    std::uint32_t count = 1;
    friend bool operator==(const DeviceInfo&, const DeviceInfo&) = default;
};

struct NamedVersion {
    std::string name;
    SemVer version;
    friend bool operator==(const NamedVersion&, const NamedVersion&) = default;
};

struct AgentRecord {
    std::string agent_id;
    /// host:port of the agent's predict service
    std::string endpoint;
    std::string architecture;
    std::vector<DeviceInfo> devices;
    std::optional<std::string> interconnect;
    std::vector<NamedVersion> frameworks;
    std::vector<NamedVersion> builtin_models;
    /// Filled in by the registry.
    std::int64_t lease_expiry_ms = 0;
    /// Evaluations currently running on the agent, reported via heartbeat.
    std::uint32_t in_flight = 0;

    friend bool operator==(const AgentRecord&, const AgentRecord&) = default;
};

/// All fields optional; an empty constraint matches every agent.
struct HardwareConstraint {
    std::optional<DeviceKind> device_kind;
    std::optional<std::string> architecture;
    std::optional<std::uint64_t> min_memory_bytes;
    std::optional<std::string> interconnect;
    friend bool operator==(const HardwareConstraint&, const HardwareConstraint&) = default;
};

struct ResolveQuery {
    std::string framework_name;
    VersionConstraint framework_constraint;
    std::string model_name;
    VersionConstraint model_constraint;
    /// The request carries its own manifest, so built-in models are not required.
    bool inline_manifest = false;
    HardwareConstraint hw;
};

struct ModelFilter {
    std::optional<std::string> name;
    std::optional<std::string> framework_name;
    std::map<std::string, std::string> attributes;
};

void to_json(Json& j, const DeviceInfo& v);
void from_json(const Json& j, DeviceInfo& v);
void to_json(Json& j, const NamedVersion& v);
void from_json(const Json& j, NamedVersion& v);
void to_json(Json& j, const AgentRecord& v);
void from_json(const Json& j, AgentRecord& v);
void to_json(Json& j, const HardwareConstraint& v);
void from_json(const Json& j, HardwareConstraint& v);
void to_json(Json& j, const ResolveQuery& v);
void from_json(const Json& j, ResolveQuery& v);
void to_json(Json& j, const ModelFilter& v);
void from_json(const Json& j, ModelFilter& v);

/// Leased agent directory and model catalog.
///
/// Expired leases are invisible to every read and cannot be renewed; the
/// agent must register again. resolve() returns agents ordered by
/// (in_flight ascending, agent_id ascending).
class Registry {
public:
    explicit Registry(std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>());

    /// Returns the lease id. Throws DuplicateAgentId or ValidationError.
    std::string register_agent(AgentRecord record, std::chrono::milliseconds ttl);
    /// Extends the lease by its original ttl; returns the new expiry. Throws UnknownLease.
    std::int64_t heartbeat(const std::string& lease_id, std::optional<std::uint32_t> in_flight = std::nullopt);
    void deregister(const std::string& lease_id);

    std::vector<AgentRecord> list_agents() const;
    std::vector<AgentRecord> resolve(const ResolveQuery& query) const;

    /// Key is "name:version". Same key with different content throws VersionConflict.
    std::string publish_model(const ModelManifest& manifest);
    std::vector<ModelManifest> list_models(const ModelFilter& filter = {}) const;
    std::optional<ModelManifest> get_model(const std::string& name, const SemVer& version) const;
    /// Highest version among published manifests and live agents' built-in models.
    std::optional<SemVer> latest_model_version(const std::string& name) const;

private:
    struct Lease {
        AgentRecord record;
        std::chrono::milliseconds ttl;
    };
    void purge_expired() const;

    std::shared_ptr<const Clock> clock_;
    mutable std::mutex mu_;
    mutable std::map<std::string, Lease> leases_;
    std::map<std::string, ModelManifest> models_;
    std::uint64_t next_lease_ = 1;
};

/// Exposes a Registry over the frame protocol.
class RegistryService {
public:
    RegistryService(std::shared_ptr<Registry> registry, net::Endpoint bind = {});
    void start() { server_.start(); }
    void stop() { server_.stop(); }
    net::Endpoint endpoint() const { return server_.endpoint(); }
    Registry& registry() { return *registry_; }

private:
    std::shared_ptr<Registry> registry_;
    net::RpcServer server_;
};

class RegistryClient {
public:
    explicit RegistryClient(net::Endpoint ep);

    std::string register_agent(const AgentRecord& record, std::chrono::milliseconds ttl);
    std::int64_t heartbeat(const std::string& lease_id, std::optional<std::uint32_t> in_flight = std::nullopt);
    void deregister(const std::string& lease_id);
    std::vector<AgentRecord> list_agents();
    std::vector<AgentRecord> resolve(const ResolveQuery& query);
    std::string publish_model(const ModelManifest& manifest);
    std::vector<ModelManifest> list_models(const ModelFilter& filter = {});
    std::optional<ModelManifest> get_model(const std::string& name, const SemVer& version);
    std::optional<SemVer> latest_model_version(const std::string& name);

private:
    Json call(const std::string& method, const Json& params);

    net::Endpoint endpoint_;
    std::mutex mu_;
    std::shared_ptr<net::RpcClient> client_;
};

} // namespace evalbench
