// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/registry.hpp"

#include <algorithm>

#include "evalbench/error.hpp"

namespace evalbench {

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const DeviceInfo& v) {
    j = Json{{"kind", to_string(v.kind)}, {"name", v.name}, {"memory_bytes", v.memory_bytes}, {"count", v.count}};
}

void from_json(const Json& j, DeviceInfo& v) {
    auto kind = device_kind_from(j.value("kind", std::string("cpu")));
    if (!kind) throw Error(Errc::validation, "unknown device kind", "devices.kind");
    v.kind = *kind;
    v.name = j.value("name", std::string{});
    v.memory_bytes = j.value("memory_bytes", std::uint64_t{0});
    v.count = j.value("count", std::uint32_t{1});
}

void to_json(Json& j, const NamedVersion& v) { j = Json{{"name", v.name}, {"version", v.version.to_string()}}; }

void from_json(const Json& j, NamedVersion& v) {
    v.name = j.at("name").get<std::string>();
    v.version = SemVer::parse(j.at("version").get<std::string>());
}

void to_json(Json& j, const AgentRecord& v) {
    j = Json{{"agent_id", v.agent_id},
             {"endpoint", v.endpoint},
             {"architecture", v.architecture},
             {"devices", v.devices},
             {"frameworks", v.frameworks},
             {"builtin_models", v.builtin_models},
             {"lease_expiry_ms", v.lease_expiry_ms},
             {"in_flight", v.in_flight}};
    if (v.interconnect) j["interconnect"] = *v.interconnect;
}

void from_json(const Json& j, AgentRecord& v) {
    v.agent_id = j.at("agent_id").get<std::string>();
    v.endpoint = j.value("endpoint", std::string{});
    v.architecture = j.value("architecture", std::string{});
    v.devices = j.value("devices", std::vector<DeviceInfo>{});
    v.interconnect.reset();
    if (j.contains("interconnect") && j["interconnect"].is_string()) v.interconnect = j["interconnect"].get<std::string>();
    v.frameworks = j.value("frameworks", std::vector<NamedVersion>{});
    v.builtin_models = j.value("builtin_models", std::vector<NamedVersion>{});
    v.lease_expiry_ms = j.value("lease_expiry_ms", std::int64_t{0});
    v.in_flight = j.value("in_flight", std::uint32_t{0});
}

void to_json(Json& j, const HardwareConstraint& v) {
    j = Json::object();
    if (v.device_kind) j["device_kind"] = to_string(*v.device_kind);
    if (v.architecture) j["architecture"] = *v.architecture;
    if (v.min_memory_bytes) j["min_memory_bytes"] = *v.min_memory_bytes;
    if (v.interconnect) j["interconnect"] = *v.interconnect;
}

void from_json(const Json& j, HardwareConstraint& v) {
    v = HardwareConstraint{};
    if (j.contains("device_kind")) {
        auto kind = device_kind_from(j["device_kind"].get<std::string>());
        if (!kind) throw Error(Errc::validation, "unknown device kind", "hw.device_kind");
        v.device_kind = kind;
    }
    if (j.contains("architecture")) v.architecture = j["architecture"].get<std::string>();
    if (j.contains("min_memory_bytes")) v.min_memory_bytes = j["min_memory_bytes"].get<std::uint64_t>();
    if (j.contains("interconnect")) v.interconnect = j["interconnect"].get<std::string>();
}

void to_json(Json& j, const ResolveQuery& v) {
    j = Json{{"framework_name", v.framework_name},
             {"framework_constraint", v.framework_constraint.to_string()},
             {"model_name", v.model_name},
             {"model_constraint", v.model_constraint.to_string()},
             {"inline_manifest", v.inline_manifest},
             {"hw", v.hw}};
}

void from_json(const Json& j, ResolveQuery& v) {
    v.framework_name = j.value("framework_name", std::string{});
    v.framework_constraint = parse_constraint(j.value("framework_constraint", std::string{}));
    v.model_name = j.value("model_name", std::string{});
    v.model_constraint = parse_constraint(j.value("model_constraint", std::string{}));
    v.inline_manifest = j.value("inline_manifest", false);
    v.hw = j.value("hw", Json::object()).get<HardwareConstraint>();
}

void to_json(Json& j, const ModelFilter& v) {
    j = Json{{"attributes", v.attributes}};
    if (v.name) j["name"] = *v.name;
    if (v.framework_name) j["framework_name"] = *v.framework_name;
}

void from_json(const Json& j, ModelFilter& v) {
    v = ModelFilter{};
    if (j.contains("name")) v.name = j["name"].get<std::string>();
    if (j.contains("framework_name")) v.framework_name = j["framework_name"].get<std::string>();
    v.attributes = j.value("attributes", std::map<std::string, std::string>{});
}

// ---------------------------------------------------------------------------
// Registry

namespace {

bool matches(const AgentRecord& a, const ResolveQuery& q) {
    if (!q.framework_name.empty()) {
        bool ok = std::any_of(a.frameworks.begin(), a.frameworks.end(), [&](const NamedVersion& f) {
            return f.name == q.framework_name && satisfies(f.version, q.framework_constraint);
        });
        if (!ok) return false;
    }
    if (!q.inline_manifest && !q.model_name.empty()) {
        bool ok = std::any_of(a.builtin_models.begin(), a.builtin_models.end(), [&](const NamedVersion& m) {
            return m.name == q.model_name && satisfies(m.version, q.model_constraint);
        });
        if (!ok) return false;
    }
    const auto& hw = q.hw;
    if (hw.architecture && a.architecture != *hw.architecture) return false;
    if (hw.interconnect && a.interconnect != hw.interconnect) return false;
    if (hw.device_kind || hw.min_memory_bytes) {
        bool ok = std::any_of(a.devices.begin(), a.devices.end(), [&](const DeviceInfo& d) {
            if (hw.device_kind && d.kind != *hw.device_kind) return false;
            if (hw.min_memory_bytes && d.memory_bytes < *hw.min_memory_bytes) return false;
            return true;
        });
        if (!ok) return false;
    }
    return true;
}

std::string model_key(const std::string& name, const SemVer& v) { return name + ":" + v.to_string(); }

} // namespace

Registry::Registry(std::shared_ptr<const Clock> clock) : clock_(std::move(clock)) {}

void Registry::purge_expired() const {
    const auto now = clock_->now_ms();
    std::erase_if(leases_, [now](const auto& kv) { return kv.second.record.lease_expiry_ms <= now; });
}

std::string Registry::register_agent(AgentRecord record, std::chrono::milliseconds ttl) {
    if (record.agent_id.empty()) throw Error(Errc::validation, "agent_id must be nonempty", "agent_id");
    net::Endpoint::parse(record.endpoint);
    if (ttl.count() <= 0) throw Error(Errc::validation, "ttl must be positive", "ttl");
    std::lock_guard lock(mu_);
    purge_expired();
    for (const auto& [id, lease] : leases_) {
        if (lease.record.agent_id == record.agent_id) {
            throw Error(Errc::duplicate_agent_id, "agent '" + record.agent_id + "' is already registered");
        }
    }
    record.lease_expiry_ms = clock_->now_ms() + ttl.count();
    std::string lease_id = "lease-" + std::to_string(next_lease_++);
    leases_.emplace(lease_id, Lease{std::move(record), ttl});
    return lease_id;
}

std::int64_t Registry::heartbeat(const std::string& lease_id, std::optional<std::uint32_t> in_flight) {
    std::lock_guard lock(mu_);
    purge_expired();
    auto it = leases_.find(lease_id);
    if (it == leases_.end()) throw Error(Errc::unknown_lease, "lease '" + lease_id + "' is unknown or expired");
    it->second.record.lease_expiry_ms = clock_->now_ms() + it->second.ttl.count();
    if (in_flight) it->second.record.in_flight = *in_flight;
    return it->second.record.lease_expiry_ms;
}

void Registry::deregister(const std::string& lease_id) {
    std::lock_guard lock(mu_);
    leases_.erase(lease_id);
}

std::vector<AgentRecord> Registry::list_agents() const {
    std::lock_guard lock(mu_);
    purge_expired();
    std::vector<AgentRecord> out;
    for (const auto& [id, lease] : leases_) out.push_back(lease.record);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.agent_id < b.agent_id; });
    return out;
}

std::vector<AgentRecord> Registry::resolve(const ResolveQuery& query) const {
    std::vector<AgentRecord> out;
    {
        std::lock_guard lock(mu_);
        purge_expired();
        for (const auto& [id, lease] : leases_) {
            if (matches(lease.record, query)) out.push_back(lease.record);
        }
    }
    std::sort(out.begin(), out.end(), [](const AgentRecord& a, const AgentRecord& b) {
        return std::tie(a.in_flight, a.agent_id) < std::tie(b.in_flight, b.agent_id);
    });
    return out;
}

std::string Registry::publish_model(const ModelManifest& manifest) {
    validate(manifest);
    const auto key = model_key(manifest.name, manifest.version);
    std::lock_guard lock(mu_);
    auto [it, inserted] = models_.emplace(key, manifest);
    if (!inserted && !(it->second == manifest)) {
        throw Error(Errc::version_conflict, "model " + key + " already published with different content; bump the version");
    }
    return key;
}

std::vector<ModelManifest> Registry::list_models(const ModelFilter& filter) const {
    std::lock_guard lock(mu_);
    std::vector<ModelManifest> out;
    for (const auto& [key, m] : models_) {
        if (filter.name && m.name != *filter.name) continue;
        if (filter.framework_name && m.framework.name != *filter.framework_name) continue;
        bool attrs_ok = std::all_of(filter.attributes.begin(), filter.attributes.end(), [&](const auto& kv) {
            auto it = m.attributes.find(kv.first);
            return it != m.attributes.end() && it->second == kv.second;
        });
        if (attrs_ok) out.push_back(m);
    }
    return out;
}

std::optional<ModelManifest> Registry::get_model(const std::string& name, const SemVer& version) const {
    std::lock_guard lock(mu_);
    auto it = models_.find(model_key(name, version));
    if (it == models_.end()) return std::nullopt;
    return it->second;
}

std::optional<SemVer> Registry::latest_model_version(const std::string& name) const {
    std::lock_guard lock(mu_);
    purge_expired();
    std::optional<SemVer> best;
    auto consider = [&](const SemVer& v) {
        if (!best || v > *best) best = v;
    };
    for (const auto& [key, m] : models_) {
        if (m.name == name) consider(m.version);
    }
    for (const auto& [id, lease] : leases_) {
        for (const auto& m : lease.record.builtin_models) {
            if (m.name == name) consider(m.version);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Service

RegistryService::RegistryService(std::shared_ptr<Registry> registry, net::Endpoint bind)
    : registry_(std::move(registry)), server_(std::move(bind)) {
    auto reg = registry_;
    server_.handle("register", [reg](net::CallContext& c) {
        auto record = c.params().at("record").get<AgentRecord>();
        auto ttl = std::chrono::milliseconds(c.params().at("ttl_ms").get<std::int64_t>());
        return Json{{"lease_id", reg->register_agent(std::move(record), ttl)}};
    });
    server_.handle("heartbeat", [reg](net::CallContext& c) {
        std::optional<std::uint32_t> in_flight;
        if (c.params().contains("in_flight")) in_flight = c.params()["in_flight"].get<std::uint32_t>();
        return Json{{"expiry_ms", reg->heartbeat(c.params().at("lease_id").get<std::string>(), in_flight)}};
    });
    server_.handle("deregister", [reg](net::CallContext& c) {
        reg->deregister(c.params().at("lease_id").get<std::string>());
        return Json::object();
    });
    server_.handle("list_agents", [reg](net::CallContext&) { return Json{{"agents", reg->list_agents()}}; });
    server_.handle("resolve", [reg](net::CallContext& c) {
        return Json{{"agents", reg->resolve(c.params().at("query").get<ResolveQuery>())}};
    });
    server_.handle("publish_model", [reg](net::CallContext& c) {
        auto manifest = parse_model_manifest(c.params().at("manifest").get<std::string>());
        return Json{{"key", reg->publish_model(manifest)}};
    });
    server_.handle("list_models", [reg](net::CallContext& c) {
        Json models = Json::array();
        for (const auto& m : reg->list_models(c.params().value("filter", Json::object()).get<ModelFilter>())) {
            models.push_back(render_model_manifest(m));
        }
        return Json{{"manifests", models}};
    });
    server_.handle("get_model", [reg](net::CallContext& c) {
        auto m = reg->get_model(c.params().at("name").get<std::string>(),
                                SemVer::parse(c.params().at("version").get<std::string>()));
        return m ? Json{{"manifest", render_model_manifest(*m)}} : Json::object();
    });
    server_.handle("latest_model_version", [reg](net::CallContext& c) {
        auto v = reg->latest_model_version(c.params().at("name").get<std::string>());
        return v ? Json{{"version", v->to_string()}} : Json::object();
    });
}

RegistryClient::RegistryClient(net::Endpoint ep) : endpoint_(std::move(ep)) {}

Json RegistryClient::call(const std::string& method, const Json& params) {
    std::shared_ptr<net::RpcClient> client;
    {
        std::lock_guard lock(mu_);
        if (!client_ || !client_->connected()) client_ = net::RpcClient::connect(endpoint_);
        client = client_;
    }
    return client->call(method, params);
}

std::string RegistryClient::register_agent(const AgentRecord& record, std::chrono::milliseconds ttl) {
    return call("register", Json{{"record", record}, {"ttl_ms", ttl.count()}}).at("lease_id").get<std::string>();
}

std::int64_t RegistryClient::heartbeat(const std::string& lease_id, std::optional<std::uint32_t> in_flight) {
    Json params{{"lease_id", lease_id}};
    if (in_flight) params["in_flight"] = *in_flight;
    return call("heartbeat", params).at("expiry_ms").get<std::int64_t>();
}

void RegistryClient::deregister(const std::string& lease_id) { call("deregister", Json{{"lease_id", lease_id}}); }

std::vector<AgentRecord> RegistryClient::list_agents() {
    return call("list_agents", Json::object()).at("agents").get<std::vector<AgentRecord>>();
}

std::vector<AgentRecord> RegistryClient::resolve(const ResolveQuery& query) {
    return call("resolve", Json{{"query", query}}).at("agents").get<std::vector<AgentRecord>>();
}

std::string RegistryClient::publish_model(const ModelManifest& manifest) {
    return call("publish_model", Json{{"manifest", render_model_manifest(manifest)}}).at("key").get<std::string>();
}

std::vector<ModelManifest> RegistryClient::list_models(const ModelFilter& filter) {
    std::vector<ModelManifest> out;
    const auto reply = call("list_models", Json{{"filter", filter}});
    for (const auto& text : reply.at("manifests")) {
        out.push_back(parse_model_manifest(text.get<std::string>()));
    }
    return out;
}

std::optional<ModelManifest> RegistryClient::get_model(const std::string& name, const SemVer& version) {
    auto r = call("get_model", Json{{"name", name}, {"version", version.to_string()}});
    if (!r.contains("manifest")) return std::nullopt;
    return parse_model_manifest(r["manifest"].get<std::string>());
}

std::optional<SemVer> RegistryClient::latest_model_version(const std::string& name) {
    auto r = call("latest_model_version", Json{{"name", name}});
    if (!r.contains("version")) return std::nullopt;
    return SemVer::parse(r["version"].get<std::string>());
}

} // namespace evalbench
