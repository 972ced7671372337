// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/agent.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "evalbench/error.hpp"
#include "evalbench/image.hpp"

namespace evalbench {

// ---------------------------------------------------------------------------
// Configuration

std::string detect_architecture() {
    utsname u{};
    if (uname(&u) != 0) return "unknown";
    return u.machine;
}

namespace {

std::string hostname() {
    char buf[256] = {};
    if (gethostname(buf, sizeof buf - 1) != 0) return "agent";
    return buf;
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::not_found, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class T>
T scalar(const YAML::Node& n, const std::string& path) {
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw Error(Errc::validation, "invalid value", path);
    }
}

DeviceKind device_kind(const std::string& s, const std::string& path) {
    if (s == "cpu" || s == "CPU") return DeviceKind::cpu;
    if (s == "gpu" || s == "GPU") return DeviceKind::gpu;
    if (s == "fpga" || s == "FPGA") return DeviceKind::fpga;
    throw Error(Errc::validation, "unknown device kind '" + s + "'", path);
}

} // namespace

AgentConfig parse_agent_config(std::string_view yaml, const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml));
    } catch (const YAML::Exception& e) {
        throw Error(Errc::syntax, std::string("agent config: ") + e.what());
    }
    AgentConfig c;
    if (!root || root.IsNull()) return c;
    if (!root.IsMap()) throw Error(Errc::validation, "agent config must be a mapping", "");
    if (auto n = root["agent_id"]) c.agent_id = scalar<std::string>(n, "agent_id");
    if (auto n = root["listen"]) c.listen = net::Endpoint::parse(scalar<std::string>(n, "listen"));
    if (auto n = root["registry"]) c.registry = net::Endpoint::parse(scalar<std::string>(n, "registry"));
    if (auto n = root["tracer"]) c.tracer = net::Endpoint::parse(scalar<std::string>(n, "tracer"));
    if (auto n = root["cache_root"]) c.cache_root = scalar<std::string>(n, "cache_root");
    if (auto n = root["architecture"]) c.architecture = scalar<std::string>(n, "architecture");
    if (auto n = root["interconnect"]) c.interconnect = scalar<std::string>(n, "interconnect");
    if (auto n = root["lease_ttl_ms"]) {
        const auto ms = scalar<std::int64_t>(n, "lease_ttl_ms");
        if (ms <= 0) throw Error(Errc::validation, "must be positive", "lease_ttl_ms");
        c.lease_ttl = std::chrono::milliseconds(ms);
    }
    if (auto devs = root["devices"]) {
        for (std::size_t i = 0; i < devs.size(); ++i) {
            const std::string p = "devices[" + std::to_string(i) + "]";
            const auto d = devs[i];
            DeviceInfo info;
            info.kind = device_kind(scalar<std::string>(d["kind"], p + ".kind"), p + ".kind");
            if (d["name"]) info.name = scalar<std::string>(d["name"], p + ".name");
            if (d["memory_bytes"]) info.memory_bytes = scalar<std::uint64_t>(d["memory_bytes"], p + ".memory_bytes");
            if (d["count"]) info.count = scalar<std::uint32_t>(d["count"], p + ".count");
            c.devices.push_back(info);
        }
    }
    if (auto preds = root["predictors"]) {
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const std::string p = "predictors[" + std::to_string(i) + "]";
            const auto n = preds[i];
            PredictorConfig pc;
            pc.backend = scalar<std::string>(n["backend"], p + ".backend");
            pc.framework_name = scalar<std::string>(n["framework"], p + ".framework");
            try {
                pc.framework_version = SemVer::parse(scalar<std::string>(n["version"], p + ".version"));
            } catch (const Error&) {
                throw Error(Errc::validation, "invalid framework version", p + ".version");
            }
            if (auto opts = n["options"]) {
                for (const auto& kv : opts) pc.options[kv.first.as<std::string>()] = kv.second.as<std::string>();
            }
            c.predictors.push_back(std::move(pc));
        }
    }
    if (auto models = root["models"]) {
        for (std::size_t i = 0; i < models.size(); ++i) {
            const auto rel = scalar<std::string>(models[i], "models[" + std::to_string(i) + "]");
            const std::filesystem::path p(rel);
            const std::filesystem::path path = p.is_absolute() ? p : base_dir / p;
            c.builtin_models.push_back(parse_model_manifest(read_text(path)));
        }
    }
    return c;
}

AgentConfig load_agent_config(const std::filesystem::path& path) {
    return parse_agent_config(read_text(path), path.parent_path());
}

void apply_env_overrides(AgentConfig& config) {
    if (const char* v = std::getenv("EVALBENCH_REGISTRY"); v && *v) config.registry = net::Endpoint::parse(v);
    if (const char* v = std::getenv("EVALBENCH_TRACER"); v && *v) config.tracer = net::Endpoint::parse(v);
    if (const char* v = std::getenv("EVALBENCH_AGENT_LISTEN"); v && *v) config.listen = net::Endpoint::parse(v);
    if (const char* v = std::getenv("EVALBENCH_CACHE"); v && *v) config.cache_root = v;
}

void fill_defaults(AgentConfig& config) {
    if (config.agent_id.empty()) config.agent_id = hostname() + "-" + std::to_string(::getpid());
    if (config.architecture.empty()) config.architecture = detect_architecture();
    if (config.devices.empty()) config.devices.push_back(DeviceInfo{DeviceKind::cpu, "cpu", 0, 1});
    if (config.cache_root.empty()) config.cache_root = std::filesystem::temp_directory_path() / "evalbench-cache";
}

// ---------------------------------------------------------------------------
// AgentCore

struct AgentCore::Session {
    std::string id;
    Predictor* predictor = nullptr;
    ModelHandle model;
    std::shared_ptr<ModelManifest> manifest;
    std::unique_ptr<SpanRecorder> spans;
    std::unique_ptr<Pipeline> pipeline;
    std::string root_span;
    ClockDomain domain = ClockDomain::wall;
    std::int64_t open_ns = 0;
    std::int64_t load_end_ns = 0;
    std::uint64_t requests = 0;
    std::mutex run_mu;
};

AgentCore::AgentCore(AgentConfig config, std::shared_ptr<SpanSink> spans, ModelLookup lookup,
                     std::shared_ptr<AssetCache> cache)
    : config_(std::move(config)), spans_(std::move(spans)), lookup_(std::move(lookup)), cache_(std::move(cache)) {
    fill_defaults(config_);
    if (!cache_) cache_ = std::make_shared<AssetCache>(config_.cache_root);
    for (const auto& pc : config_.predictors) {
        auto p = make_predictor(pc);
        auto spec = p->spec();
        backends_.push_back(Backend{pc, std::move(p), std::move(spec)});
    }
    endpoint_ = config_.listen.to_string();
}

AgentCore::~AgentCore() = default;

void AgentCore::set_endpoint(const std::string& endpoint) {
    std::lock_guard lock(mu_);
    endpoint_ = endpoint;
}

AgentRecord AgentCore::record() const {
    AgentRecord r;
    r.agent_id = config_.agent_id;
    {
        std::lock_guard lock(mu_);
        r.endpoint = endpoint_;
        r.in_flight = static_cast<std::uint32_t>(sessions_.size());
    }
    r.architecture = config_.architecture;
    r.devices = config_.devices;
    r.interconnect = config_.interconnect;
    for (const auto& b : backends_) {
        NamedVersion nv{b.spec.framework_name, b.spec.framework_version};
        if (std::find(r.frameworks.begin(), r.frameworks.end(), nv) == r.frameworks.end()) r.frameworks.push_back(nv);
    }
    for (const auto& m : config_.builtin_models) r.builtin_models.push_back(NamedVersion{m.name, m.version});
    return r;
}

std::uint32_t AgentCore::in_flight() const {
    std::lock_guard lock(mu_);
    return static_cast<std::uint32_t>(sessions_.size());
}

namespace {

/// "" matches everything; a bare version is exact; anything else is a constraint.
VersionConstraint version_filter(const std::string& text) {
    if (text.empty()) return {};
    try {
        const auto v = SemVer::parse(text);
        return VersionConstraint{{VersionClause{Comparator::eq, v}}};
    } catch (const Error&) {
        return parse_constraint(text);
    }
}

} // namespace

ModelManifest AgentCore::resolve_manifest(const OpenRequest& request) const {
    if (!request.model_manifest.empty()) return parse_model_manifest(request.model_manifest);
    if (request.model_name.empty()) throw Error(Errc::validation, "model name or manifest required", "model_name");
    const auto filter = version_filter(request.model_version);
    std::optional<ModelManifest> best;
    auto consider = [&](const ModelManifest& m) {
        if (m.name != request.model_name || !satisfies(m.version, filter)) return;
        if (!best || best->version < m.version) best = m;
    };
    for (const auto& m : config_.builtin_models) consider(m);
    if (!best && lookup_) {
        for (const auto& m : lookup_(request.model_name)) consider(m);
    }
    if (!best) {
        throw Error(Errc::not_found, "model " + request.model_name +
                                         (request.model_version.empty() ? "" : " " + request.model_version) +
                                         " is not available on agent " + config_.agent_id);
    }
    return *best;
}

AgentCore::Backend& AgentCore::choose_backend(const OpenRequest& request, const ModelManifest& manifest) {
    const auto wanted = version_filter(request.framework_version);
    Backend* best = nullptr;
    std::string why = "no predictor configured";
    for (auto& b : backends_) {
        if (!request.framework_name.empty() && b.spec.framework_name != request.framework_name) continue;
        if (!satisfies(b.spec.framework_version, wanted)) continue;
        try {
            check_compatible(b.spec, manifest);
        } catch (const Error& e) {
            why = e.what();
            continue;
        }
        if (!best || best->spec.framework_version < b.spec.framework_version) best = &b;
    }
    if (!best) throw Error(Errc::incompatible_manifest, "no predictor on agent " + config_.agent_id + " can run " +
                                                            manifest.name + ": " + why);
    return *best;
}

PredictorHandle AgentCore::open(const OpenRequest& request) {
    auto manifest = std::make_shared<ModelManifest>(resolve_manifest(request));
    auto& backend = choose_backend(request, *manifest);
    request.benchmark_scenario.validate();

    auto s = std::make_shared<Session>();
    s->predictor = backend.predictor.get();
    s->manifest = manifest;
    s->domain = backend.spec.virtual_clock ? ClockDomain::virtual_time : ClockDomain::wall;
    const bool tracing = !request.trace_id.empty() && request.predict_options.trace_level != TraceLevel::none;
    s->spans = std::make_unique<SpanRecorder>(request.trace_id, tracing ? request.predict_options.trace_level
                                                                        : TraceLevel::none,
                                              s->domain, spans_);
    s->root_span = span_id_for("evaluation");

    // Assets.
    ModelAssets assets;
    const auto& src = manifest->model_source;
    if (backend.spec.needs_assets) {
        if (src.graph_path.empty()) throw Error(Errc::asset_missing, "manifest has no graph_path");
        assets.graph = cache_->fetch(join_url(src.base_url, src.graph_path), src.checksum.value_or("")).path;
        if (src.weights_path) assets.weights = cache_->fetch(join_url(src.base_url, *src.weights_path)).path;
    }
    std::vector<std::string> labels;
    if (!manifest->outputs.empty()) {
        for (const auto& step : manifest->outputs.front().steps) {
            if (const auto* a = std::get_if<ArgsortParams>(&step.params); a && !a->labels_url.empty()) {
                const auto entry = cache_->fetch(join_url(src.base_url, a->labels_url));
                std::ifstream in(entry.path, std::ios::binary);
                std::ostringstream ss;
                ss << in.rdbuf();
                labels = parse_labels(ss.str());
                while (!labels.empty() && labels.back().empty()) labels.pop_back();
            }
        }
    }

    // Load.
    s->open_ns = s->domain == ClockDomain::virtual_time ? 0 : wall_now_ns();
    ExecContext load_ctx(s->spans.get(), s->domain, s->open_ns, s->root_span, "model_load");
    s->model = backend.predictor->model_load(*manifest, assets, request.predict_options, load_ctx);
    s->load_end_ns = s->domain == ClockDomain::virtual_time ? load_ctx.now_ns() : wall_now_ns();
    s->spans->record("model_load", "model_load", SpanLevel::model, s->open_ns, s->load_end_ns, s->root_span,
                     {{"model", manifest->name + ":" + manifest->version.to_string()},
                      {"framework", backend.spec.framework_name + ":" + backend.spec.framework_version.to_string()}});

    PipelineOptions po;
    po.batch_size = request.benchmark_scenario.batch_size.value_or(1);
    if (auto it = request.predict_options.options.find("top_k"); it != request.predict_options.options.end()) {
        try {
            po.top_k = std::stoul(it->second);
        } catch (const std::exception&) {
            throw Error(Errc::validation, "top_k must be a non-negative integer", "predict_options.top_k");
        }
    }
    s->pipeline = std::make_unique<Pipeline>(*backend.predictor, s->model, *manifest, request.predict_options, po,
                                             s->spans.get(), s->root_span, std::move(labels), s->load_end_ns);

    std::lock_guard lock(mu_);
    s->id = config_.agent_id + "/" + std::to_string(next_session_++);
    sessions_.emplace(s->id, s);
    PredictorHandle h{s->id, s->domain == ClockDomain::virtual_time};
    h.model_name = manifest->name;
    h.model_version = manifest->version.to_string();
    h.framework_name = backend.spec.framework_name;
    h.framework_version = backend.spec.framework_version.to_string();
    const bool image = !manifest->inputs.empty() &&
                       std::any_of(manifest->inputs.front().steps.begin(), manifest->inputs.front().steps.end(),
                                   [](const ProcessingStep& p) { return p.op() == StepOp::decode; });
    h.input_format = image ? "image" : "raw";
    return h;
}

std::shared_ptr<AgentCore::Session> AgentCore::session(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(Errc::handle_closed, "predictor handle " + id + " is not open");
    return it->second;
}

std::uint64_t AgentCore::predict(const PredictorHandle& handle,
                                 const std::function<std::optional<UserInput>()>& next,
                                 const std::function<void(const FeaturesResponse&)>& emit) {
    auto s = session(handle.id);
    std::lock_guard run(s->run_mu);
    const auto n = s->pipeline->run(next, emit);
    s->requests += n;
    return n;
}

CloseResponse AgentCore::close(const PredictorHandle& handle) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(handle.id);
        if (it == sessions_.end()) throw Error(Errc::handle_closed, "predictor handle " + handle.id + " is not open");
        s = it->second;
        sessions_.erase(it);
    }
    std::lock_guard run(s->run_mu);
    s->predictor->model_unload(s->model);
    const std::int64_t end = s->domain == ClockDomain::virtual_time
                                 ? std::max(s->load_end_ns, s->pipeline->last_end_ns())
                                 : wall_now_ns();
    s->spans->record("evaluation", "evaluation", SpanLevel::model, s->open_ns, end, std::nullopt,
                     {{"model", s->manifest->name + ":" + s->manifest->version.to_string()},
                      {"requests", std::to_string(s->requests)},
                      {"items", std::to_string(s->pipeline->items_processed())}});
    s->spans->flush();
    if (spans_) spans_->flush();
    return CloseResponse{s->requests};
}

// ---------------------------------------------------------------------------
// Service

AgentService::AgentService(std::shared_ptr<AgentCore> core, net::Endpoint bind)
    : core_(std::move(core)), server_(std::move(bind)) {
    server_.handle("open", [this](net::CallContext& ctx) {
        return Json(core_->open(ctx.params().get<OpenRequest>()));
    });
    server_.handle(
        "predict",
        [this](net::CallContext& ctx) {
            const auto req = ctx.params().get<PredictRequest>();
            const auto n = core_->predict(
                req.handle,
                [&]() -> std::optional<UserInput> {
                    auto item = ctx.next_input();
                    if (!item) return std::nullopt;
                    return item->get<UserInput>();
                },
                [&](const FeaturesResponse& r) { ctx.send_item(Json(r)); });
            return Json{{"requests", n}};
        },
        true);
    server_.handle("close", [this](net::CallContext& ctx) {
        return Json(core_->close(ctx.params().get<PredictorHandle>()));
    });
    server_.handle("info", [this](net::CallContext&) { return Json(core_->record()); });
}

// ---------------------------------------------------------------------------
// Agent runtime

Agent::Agent(AgentConfig config) : config_(std::move(config)) {
    fill_defaults(config_);
    std::shared_ptr<SpanSink> sink;
    if (config_.tracer) {
        publisher_ = std::make_shared<AsyncPublisher>(std::make_shared<TracerClient>(*config_.tracer));
        sink = publisher_;
    }
    ModelLookup lookup;
    if (config_.registry) {
        registry_ = std::make_shared<RegistryClient>(*config_.registry);
        lookup = [reg = registry_](const std::string& name) {
            ModelFilter f;
            f.name = name;
            return reg->list_models(f);
        };
    }
    core_ = std::make_shared<AgentCore>(config_, sink, lookup);
    service_ = std::make_unique<AgentService>(core_, config_.listen);
}

Agent::~Agent() { stop(); }

void Agent::start() {
    service_->start();
    core_->set_endpoint(service_->endpoint().to_string());
    if (!registry_) return;
    {
        std::lock_guard lock(mu_);
        stopping_ = false;
    }
    lease_thread_ = std::thread([this] { lease_loop(); });
}

void Agent::lease_loop() {
    auto backoff = std::chrono::milliseconds(50);
    std::unique_lock lock(mu_);
    while (!stopping_) {
        std::optional<std::string> lease = lease_;
        lock.unlock();
        std::chrono::milliseconds wait = config_.lease_ttl / 3;
        try {
            if (!lease) {
                lease = registry_->register_agent(core_->record(), config_.lease_ttl);
                backoff = std::chrono::milliseconds(50);
            } else {
                registry_->heartbeat(*lease, core_->in_flight());
            }
        } catch (const Error& e) {
            // A lapsed lease means registering again; anything else is retried with backoff.
            if (e.code() == Errc::unknown_lease || e.code() == Errc::duplicate_agent_id) lease.reset();
            if (e.code() == Errc::unknown_lease) {
                wait = std::chrono::milliseconds(0);
            } else {
                wait = backoff;
                backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
            }
        }
        lock.lock();
        lease_ = lease;
        cv_.notify_all();
        cv_.wait_for(lock, wait, [&] { return stopping_; });
    }
}

void Agent::stop() {
    std::optional<std::string> lease;
    {
        std::lock_guard lock(mu_);
        if (stopping_ && !lease_thread_.joinable()) return;
        stopping_ = true;
        cv_.notify_all();
    }
    if (lease_thread_.joinable()) lease_thread_.join();
    {
        std::lock_guard lock(mu_);
        lease.swap(lease_);
    }
    if (lease && registry_) {
        try {
            registry_->deregister(*lease);
        } catch (const Error&) {
            // The lease will lapse on its own.
        }
    }
    service_->stop();
    if (publisher_) publisher_->flush();
}

bool Agent::wait_registered(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return lease_.has_value(); });
}

bool Agent::registered() const {
    std::lock_guard lock(mu_);
    return lease_.has_value();
}

net::Endpoint Agent::endpoint() const { return service_->endpoint(); }

// ---------------------------------------------------------------------------
// Client

AgentClient::AgentClient(const net::Endpoint& ep) : client_(net::RpcClient::connect(ep)) {}

PredictorHandle AgentClient::open(const OpenRequest& request) {
    return client_->call("open", Json(request)).get<PredictorHandle>();
}

std::unique_ptr<net::CallStream> AgentClient::predict_stream(const PredictorHandle& handle) {
    return client_->open_stream("predict", Json(PredictRequest{handle}));
}

std::vector<FeaturesResponse> AgentClient::predict(const PredictorHandle& handle,
                                                   const std::vector<UserInput>& requests) {
    auto stream = predict_stream(handle);
    std::vector<FeaturesResponse> out;
    std::thread reader([&] {
        while (auto item = stream->next_item()) out.push_back(item->get<FeaturesResponse>());
    });
    for (const auto& r : requests) stream->send(Json(r));
    stream->finish();
    reader.join();
    stream->result();
    return out;
}

CloseResponse AgentClient::close(const PredictorHandle& handle) {
    return client_->call("close", Json(handle)).get<CloseResponse>();
}

Json AgentClient::info() { return client_->call("info", Json::object()); }

} // namespace evalbench
