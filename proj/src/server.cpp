// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/server.hpp"

#include <httplib.h>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "evalbench/agent.hpp"
#include "evalbench/data.hpp"
#include "evalbench/error.hpp"
#include "evalbench/predictor.hpp"

namespace evalbench {

namespace fs = std::filesystem;

std::string new_ulid() {
    static constexpr char kAlphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}() ^ (std::uint64_t(std::random_device{}()) << 32)};
    std::uint64_t r1, r2;
    {
        std::lock_guard lock(mu);
        r1 = rng();
        r2 = rng();
    }
    const auto ms = static_cast<unsigned __int128>(static_cast<std::uint64_t>(wall_now_ns() / 1'000'000) &
                                                   0xFFFF'FFFF'FFFFULL);
    // 48 bits of time, then 16 + 64 random bits.
    unsigned __int128 v = (ms << 80) | (static_cast<unsigned __int128>(r1 & 0xFFFF) << 64) | r2;
    std::string out(26, '0');
    for (int k = 25; k >= 0; --k) {
        out[static_cast<std::size_t>(k)] = kAlphabet[static_cast<unsigned>(v & 31)];
        v >>= 5;
    }
    return out;
}

std::string_view to_string(JobState s) noexcept {
    switch (s) {
    case JobState::pending: return "pending";
    case JobState::resolving: return "resolving";
    case JobState::dispatched: return "dispatched";
    case JobState::running: return "running";
    case JobState::completed: return "completed";
    case JobState::failed: return "failed";
    }
    return "unknown";
}

bool legal_transition(JobState from, JobState to) noexcept {
    if (from == JobState::completed || from == JobState::failed) return false;
    if (to == JobState::failed) return true;
    return static_cast<int>(to) == static_cast<int>(from) + 1;
}

std::string_view to_string(FanOut f) noexcept { return f == FanOut::all ? "all" : "one"; }

void to_json(Json& j, const WorkloadSpec& v) {
    j = Json{{"items", v.items}, {"image_side", v.image_side}, {"raw_elements", v.raw_elements}, {"seed", v.seed}};
    if (v.record_file) j["record_file"] = *v.record_file;
}

void from_json(const Json& j, WorkloadSpec& v) {
    v = WorkloadSpec{};
    if (j.contains("record_file") && !j.at("record_file").is_null()) v.record_file = j.at("record_file").get<std::string>();
    v.items = j.value("items", v.items);
    v.image_side = j.value("image_side", v.image_side);
    v.raw_elements = j.value("raw_elements", v.raw_elements);
    v.seed = j.value("seed", v.seed);
}

void to_json(Json& j, const EvaluationSubmission& v) {
    j = Json{{"request", v.request},
             {"hw", v.hw},
             {"fan_out", std::string(to_string(v.fan_out))},
             {"workload", v.workload}};
}

void from_json(const Json& j, EvaluationSubmission& v) {
    if (!j.is_object()) throw Error(Errc::validation, "submission must be an object");
    v = EvaluationSubmission{};
    v.request = j.at("request").get<OpenRequest>();
    v.hw = j.value("hw", Json::object()).get<HardwareConstraint>();
    const auto fan = j.value("fan_out", std::string("one"));
    if (fan == "one") v.fan_out = FanOut::one;
    else if (fan == "all") v.fan_out = FanOut::all;
    else throw Error(Errc::validation, "fan_out must be one or all", "fan_out");
    v.workload = j.value("workload", Json::object()).get<WorkloadSpec>();
}

std::vector<std::string> synthesize_items(const WorkloadSpec& w, const std::string& input_format) {
    std::vector<std::string> out;
    out.reserve(w.items);
    for (std::size_t i = 0; i < w.items; ++i) {
        SplitMix64 rng(w.seed ^ (0x9E3779B97F4A7C15ULL * (i + 1)));
        std::string item;
        if (input_format == "image") {
            const auto side = std::to_string(w.image_side);
            item = "P6\n" + side + " " + side + "\n255\n";
            const std::size_t n = std::size_t{w.image_side} * w.image_side * 3;
            item.reserve(item.size() + n);
            for (std::size_t k = 0; k < n; ++k) item.push_back(static_cast<char>(rng.next() & 0xFF));
        } else {
            std::vector<float> v(w.raw_elements);
            for (auto& x : v) x = static_cast<float>(rng.next_double());
            item.resize(v.size() * sizeof(float));
            std::memcpy(item.data(), v.data(), item.size());
        }
        out.push_back(std::move(item));
    }
    return out;
}

Json job_to_json(const EvaluationJob& job) {
    Json history = Json::array();
    for (auto s : job.history) history.push_back(std::string(to_string(s)));
    Json j{{"job_id", job.job_id},
           {"state", std::string(to_string(job.state))},
           {"history", history},
           {"fan_out", std::string(to_string(job.submission.fan_out))},
           {"agents", job.agents},
           {"result_ids", job.result_ids},
           {"progress", Json{{"completed", job.result_ids.size()}, {"total", job.agents.size()}}},
           {"created_ms", job.created_ms},
           {"submission", job.submission}};
    if (!job.error.empty()) j["error"] = job.error;
    return j;
}

void apply_env_overrides(ServerConfig& config) {
    if (const char* v = std::getenv("EVALBENCH_REGISTRY"); v && *v) config.registry = net::Endpoint::parse(v);
    if (const char* v = std::getenv("EVALBENCH_TRACER"); v && *v) config.tracer = net::Endpoint::parse(v);
    if (const char* v = std::getenv("EVALBENCH_EVALDB"); v && *v) config.evaldb_dir = v;
    if (const char* v = std::getenv("EVALBENCH_SERVER_LISTEN"); v && *v) config.listen = net::Endpoint::parse(v);
}

namespace {

VersionConstraint selector(const std::string& text) {
    return text.empty() ? VersionConstraint{} : parse_constraint(text);
}

std::string describe(const Error& e) { return std::string(errc_name(e.code())) + ": " + e.what(); }

/// The newest published manifest matching the request, if any.
std::optional<ModelManifest> catalog_model(RegistryClient& reg, const OpenRequest& r) {
    ModelFilter f;
    f.name = r.model_name;
    const auto wanted = selector(r.model_version);
    std::optional<ModelManifest> best;
    for (auto& m : reg.list_models(f)) {
        if (satisfies(m.version, wanted) && (!best || best->version < m.version)) best = std::move(m);
    }
    return best;
}

int http_status(Errc c) {
    switch (c) {
    case Errc::syntax:
    case Errc::validation:
    case Errc::decode:
    case Errc::empty_workload: return 400;
    case Errc::not_found:
    case Errc::unknown_trace: return 404;
    case Errc::no_capable_agent:
    case Errc::no_data:
    case Errc::missing_baseline: return 409;
    case Errc::transport: return 502;
    default: return 500;
    }
}

void send_json(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, Errc code, const std::string& message) {
    send_json(res, Json{{"error", Json{{"code", std::string(errc_name(code))}, {"message", message}}}},
              http_status(code));
}

/// Runs a handler and maps exceptions to error documents.
httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const Json::parse_error& e) {
            send_error(res, Errc::syntax, e.what());
        } catch (const Json::exception& e) {
            send_error(res, Errc::validation, e.what());
        } catch (const std::exception& e) {
            send_error(res, Errc::internal, e.what());
        }
    };
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& data) {
    const auto tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << data;
        if (!out) throw Error(Errc::internal, "cannot write " + tmp);
    }
    fs::rename(tmp, p);
}

} // namespace

Server::Server(ServerConfig config) : config_(std::move(config)) {
    db_ = std::make_shared<EvalDb>(config_.evaldb_dir);
    registry_ = std::make_unique<RegistryClient>(config_.registry);
    if (config_.tracer) tracer_ = std::make_unique<TracerClient>(*config_.tracer);
    http_ = std::make_unique<httplib::Server>();
    install_routes();
}

Server::~Server() { stop(); }

void Server::start() {
    {
        std::lock_guard lock(mu_);
        stopping_ = false;
    }
    if (config_.listen.port == 0) {
        port_ = http_->bind_to_any_port(config_.listen.host);
    } else {
        port_ = http_->bind_to_port(config_.listen.host, config_.listen.port) ? config_.listen.port : -1;
    }
    if (port_ <= 0) throw Error(Errc::transport, "cannot listen on " + config_.listen.to_string());
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

void Server::stop() {
    if (http_thread_.joinable()) {
        http_->stop();
        http_thread_.join();
    }
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
        workers.swap(workers_);
    }
    for (auto& w : workers) w.join();
}

net::Endpoint Server::endpoint() const {
    return net::Endpoint{config_.listen.host, static_cast<std::uint16_t>(port_)};
}

std::string Server::base_url() const { return "http://" + endpoint().to_string(); }

std::string Server::submit(const EvaluationSubmission& submission) {
    const auto& r = submission.request;
    r.benchmark_scenario.validate();
    if (r.model_name.empty() && r.model_manifest.empty()) {
        throw Error(Errc::validation, "a model name or an inline manifest is required", "request.model_name");
    }
    if (!r.model_manifest.empty()) parse_model_manifest(r.model_manifest);
    selector(r.model_version);
    selector(r.framework_version);
    const auto& w = submission.workload;
    if (w.record_file) {
        if (!fs::is_regular_file(*w.record_file)) {
            throw Error(Errc::validation, "record file " + *w.record_file + " does not exist", "workload.record_file");
        }
    } else if (w.items == 0 || w.image_side == 0 || w.raw_elements == 0) {
        throw Error(Errc::validation, "synthetic items, image_side and raw_elements must be positive", "workload");
    }

    EvaluationJob job;
    job.job_id = new_ulid();
    job.submission = submission;
    job.history.push_back(JobState::pending);
    job.created_ms = wall_now_ns() / 1'000'000;
    const auto id = job.job_id;
    std::lock_guard lock(mu_);
    if (stopping_ && http_thread_.joinable()) throw Error(Errc::internal, "server is stopping");
    jobs_.emplace(id, std::move(job));
    workers_.emplace_back([this, id] { run_job(id); });
    return id;
}

std::optional<EvaluationJob> Server::job(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> Server::job_ids() const {
    std::lock_guard lock(mu_);
    std::vector<const EvaluationJob*> jobs;
    for (const auto& [id, j] : jobs_) jobs.push_back(&j);
    std::stable_sort(jobs.begin(), jobs.end(),
                     [](const auto* a, const auto* b) { return a->created_ms < b->created_ms; });
    std::vector<std::string> out;
    for (const auto* j : jobs) out.push_back(j->job_id);
    return out;
}

std::optional<EvaluationJob> Server::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    auto done = [&] {
        auto it = jobs_.find(id);
        return it == jobs_.end() || it->second.state == JobState::completed || it->second.state == JobState::failed;
    };
    cv_.wait_for(lock, timeout, done);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

Json Server::job_summary(const std::string& id) const {
    auto j = job(id);
    if (!j) throw Error(Errc::not_found, "no job " + id);
    Json results = Json::array();
    for (const auto& rid : j->result_ids) {
        if (auto r = db_->get(rid)) results.push_back(summarize_evaluation(*r));
    }
    Json out{{"state", std::string(to_string(j->state))},
             {"fan_out", std::string(to_string(j->submission.fan_out))},
             {"results", results}};
    if (!j->error.empty()) out["error"] = j->error;
    return out;
}

void Server::set_state(const std::string& id, JobState s, const std::string& error) {
    std::lock_guard lock(mu_);
    auto& job = jobs_.at(id);
    if (!legal_transition(job.state, s)) {
        throw Error(Errc::internal, "illegal job transition " + std::string(to_string(job.state)) + " -> " +
                                        std::string(to_string(s)));
    }
    job.state = s;
    job.history.push_back(s);
    if (!error.empty()) job.error = error;
    cv_.notify_all();
}

void Server::run_job(const std::string& id) {
    EvaluationJob job;
    {
        std::lock_guard lock(mu_);
        job = jobs_.at(id);
    }
    try {
        set_state(id, JobState::resolving);
        const auto& r = job.submission.request;
        ResolveQuery q;
        q.model_name = r.model_name;
        q.model_constraint = selector(r.model_version);
        q.framework_name = r.framework_name;
        q.framework_constraint = selector(r.framework_version);
        q.hw = job.submission.hw;
        std::optional<ModelManifest> manifest;
        if (!r.model_manifest.empty()) manifest = parse_model_manifest(r.model_manifest);
        else manifest = catalog_model(*registry_, r);
        if (manifest) {
            // Agents fetch catalog models themselves, so built-ins are not required.
            q.inline_manifest = true;
            if (q.framework_name.empty()) {
                q.framework_name = manifest->framework.name;
                q.framework_constraint = manifest->framework.constraint;
            }
        }
        const auto candidates = registry_->resolve(q);
        if (candidates.empty()) {
            throw Error(Errc::no_capable_agent, "no registered agent satisfies the model, framework and hardware "
                                                "constraints");
        }
        std::vector<AgentRecord> chosen;
        if (job.submission.fan_out == FanOut::all) chosen = candidates;
        else chosen.push_back(candidates.front());
        {
            std::lock_guard lock(mu_);
            for (const auto& a : chosen) jobs_.at(id).agents.push_back(a.agent_id);
        }
        set_state(id, JobState::dispatched);
        set_state(id, JobState::running);

        for (std::size_t i = 0; i < chosen.size(); ++i) {
            std::string trace;
            if (r.predict_options.trace_level != TraceLevel::none) {
                trace = chosen.size() == 1 && !r.trace_id.empty() ? r.trace_id : new_trace_id();
            }
            AgentRecord agent = chosen[i];
            std::optional<EvaluationResult> result;
            for (int attempt = 1; !result; ++attempt) {
                try {
                    result = run_on_agent(job, agent, trace);
                } catch (const Error& e) {
                    if (e.code() != Errc::transport || attempt >= config_.dispatch_attempts) throw;
                    // One more try, on another candidate when a single agent was asked for.
                    if (job.submission.fan_out == FanOut::one) {
                        for (const auto& c : candidates) {
                            if (c.agent_id != agent.agent_id) {
                                agent = c;
                                break;
                            }
                        }
                        std::lock_guard lock(mu_);
                        jobs_.at(id).agents[i] = agent.agent_id;
                    }
                }
            }
            db_->store(*result);
            std::lock_guard lock(mu_);
            jobs_.at(id).result_ids.push_back(result->evaluation_id);
        }
        set_state(id, JobState::completed);
    } catch (const Error& e) {
        set_state(id, JobState::failed, describe(e));
    } catch (const std::exception& e) {
        set_state(id, JobState::failed, std::string("internal: ") + e.what());
    }
}

EvaluationResult Server::run_on_agent(const EvaluationJob& job, const AgentRecord& agent, const std::string& trace_id) {
    AgentClient client(net::Endpoint::parse(agent.endpoint));
    OpenRequest req = job.submission.request;
    req.trace_id = trace_id;

    EvaluationResult result;
    result.evaluation_id = new_ulid();
    result.request = req;
    result.agent = agent;
    result.started_at_ms = wall_now_ns() / 1'000'000;
    const PredictorHandle handle = client.open(req);
    result.virtual_clock = handle.virtual_clock;
    result.model_name = handle.model_name;
    result.model_version = SemVer::parse(handle.model_version);
    result.framework_name = handle.framework_name;
    result.framework_version = SemVer::parse(handle.framework_version);
    if (!trace_id.empty()) result.trace_id = trace_id;

    try {
        const auto& w = job.submission.workload;
        const auto items = w.record_file ? read_record_file(*w.record_file) : synthesize_items(w, handle.input_format);
        const auto plan = plan_scenario(req.benchmark_scenario, items.size());
        result.measurements = execute_plan(plan, [&](std::size_t i) { return items[i]; }, client, handle);
    } catch (const Error& e) {
        try {
            client.close(handle);
        } catch (const Error&) {
            // The agent is already failing; report the first error.
        }
        throw Error(e.code() == Errc::transport ? Errc::agent_error : e.code(),
                    "agent " + agent.agent_id + ": " + e.what());
    }
    client.close(handle);
    result.finished_at_ms = wall_now_ns() / 1'000'000;
    return result;
}

std::optional<Timeline> Server::fetch_timeline(const std::string& trace_id) {
    if (!tracer_) return std::nullopt;
    auto spans = tracer_->spans(trace_id);
    if (spans.empty()) return std::nullopt;
    return assemble_spans(trace_id, std::move(spans));
}

std::string Server::submit_analysis(const QueryFilter& filter, const std::vector<std::string>& evaluation_ids,
                                    const ReportOptions& options) {
    std::vector<EvaluationResult> results;
    if (evaluation_ids.empty()) {
        results = db_->query(filter);
    } else {
        // A job id stands for every result the job stored.
        std::vector<std::string> ids;
        {
            std::lock_guard lock(mu_);
            for (const auto& eid : evaluation_ids) {
                const auto it = jobs_.find(eid);
                if (it == jobs_.end()) {
                    ids.push_back(eid);
                } else {
                    ids.insert(ids.end(), it->second.result_ids.begin(), it->second.result_ids.end());
                }
            }
        }
        for (const auto& eid : ids) {
            auto r = db_->get(eid);
            if (!r) throw Error(Errc::not_found, "no evaluation " + eid);
            if (filter.matches(*r)) results.push_back(std::move(*r));
        }
    }
    Report report = generate_report(results, options, [this](const std::string& t) { return fetch_timeline(t); });
    const auto id = new_ulid();
    report.json["report_id"] = id;
    const auto dir = config_.evaldb_dir / "reports";
    fs::create_directories(dir);
    write_file(dir / (id + ".json"), report.json.dump(2) + "\n");
    write_file(dir / (id + ".html"), report.html);
    std::lock_guard lock(mu_);
    reports_.emplace(id, std::move(report));
    return id;
}

std::optional<Report> Server::analysis(const std::string& id) const {
    {
        std::lock_guard lock(mu_);
        if (auto it = reports_.find(id); it != reports_.end()) return it->second;
    }
    // Another instance may have produced it.
    if (id.find_first_of("/.") != std::string::npos) return std::nullopt;
    const auto dir = config_.evaldb_dir / "reports";
    const auto json_path = dir / (id + ".json");
    if (!fs::is_regular_file(json_path)) return std::nullopt;
    Report r;
    r.json = Json::parse(read_file(json_path));
    r.html = read_file(dir / (id + ".html"));
    return r;
}

void Server::install_routes() {
    auto& s = *http_;
    s.Post("/api/v1/evaluations", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto sub = Json::parse(req.body).get<EvaluationSubmission>();
               const auto id = submit(sub);
               send_json(res, job_to_json(*job(id)), 202);
           }));
    s.Get(R"(/api/v1/evaluations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto j = job(req.matches[1]);
              if (!j) throw Error(Errc::not_found, "no job " + std::string(req.matches[1]));
              send_json(res, job_to_json(*j));
          }));
    s.Get(R"(/api/v1/evaluations/([^/]+)/summary)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, job_summary(req.matches[1]));
          }));
    s.Post("/api/v1/analyses", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const Json body = req.body.empty() ? Json::object() : Json::parse(req.body);
               if (!body.is_object()) throw Error(Errc::validation, "analysis request must be an object");
               const auto filter = body.value("filter", Json::object()).get<QueryFilter>();
               const auto ids = body.value("evaluation_ids", std::vector<std::string>{});
               ReportOptions opts;
               const Json o = body.value("options", Json::object());
               opts.title = o.value("title", opts.title);
               opts.top_layers = o.value("top_layers", opts.top_layers);
               opts.trim_fraction = o.value("trim_fraction", opts.trim_fraction);
               const auto id = submit_analysis(filter, ids, opts);
               send_json(res, Json{{"report_id", id}}, 201);
           }));
    s.Get(R"(/api/v1/analyses/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto r = analysis(req.matches[1]);
              if (!r) throw Error(Errc::not_found, "no report " + std::string(req.matches[1]));
              send_json(res, r->json);
          }));
    s.Get(R"(/api/v1/analyses/([^/]+)/html)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto r = analysis(req.matches[1]);
              if (!r) throw Error(Errc::not_found, "no report " + std::string(req.matches[1]));
              res.set_content(r->html, "text/html; charset=utf-8");
          }));
    s.Get("/api/v1/agents", guarded([this](const httplib::Request&, httplib::Response& res) {
              send_json(res, Json(registry_->list_agents()));
          }));
    s.Get("/api/v1/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
              ModelFilter f;
              if (req.has_param("name")) f.name = req.get_param_value("name");
              if (req.has_param("framework")) f.framework_name = req.get_param_value("framework");
              for (const auto& [k, v] : req.params) {
                  if (k.rfind("attr.", 0) == 0) f.attributes[k.substr(5)] = v;
              }
              Json models = Json::array();
              for (const auto& m : registry_->list_models(f)) {
                  models.push_back(Json{{"name", m.name},
                                        {"version", m.version.to_string()},
                                        {"description", m.description},
                                        {"framework", Json{{"name", m.framework.name},
                                                           {"constraint", m.framework.constraint.to_string()}}},
                                        {"attributes", m.attributes},
                                        {"source", "catalog"}});
              }
              // Built-in models advertised by live agents.
              std::map<std::pair<std::string, std::string>, std::vector<std::string>> builtins;
              if (f.attributes.empty()) {
                  for (const auto& a : registry_->list_agents()) {
                      for (const auto& m : a.builtin_models) {
                          if (f.name && m.name != *f.name) continue;
                          if (f.framework_name &&
                              std::none_of(a.frameworks.begin(), a.frameworks.end(),
                                           [&](const NamedVersion& fw) { return fw.name == *f.framework_name; })) {
                              continue;
                          }
                          builtins[{m.name, m.version.to_string()}].push_back(a.agent_id);
                      }
                  }
              }
              for (const auto& [key, agents] : builtins) {
                  models.push_back(
                      Json{{"name", key.first}, {"version", key.second}, {"agents", agents}, {"source", "builtin"}});
              }
              send_json(res, models);
          }));
    s.Get(R"(/api/v1/traces/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const std::string trace_id = req.matches[1];
              if (!tracer_) throw Error(Errc::not_found, "no tracer is configured");
              auto spans = tracer_->spans(trace_id);
              if (spans.empty()) throw Error(Errc::unknown_trace, "no spans for trace " + trace_id);
              Timeline t = assemble_spans(trace_id, std::move(spans));
              if (req.has_param("level")) {
                  const auto level = trace_level_from(req.get_param_value("level"));
                  if (!level) throw Error(Errc::validation, "unknown trace level", "level");
                  t = filter_level(t, *level);
              }
              send_json(res, timeline_to_json(t));
          }));
}

} // namespace evalbench
