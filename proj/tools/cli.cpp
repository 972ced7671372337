// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "cli.hpp"

#include <httplib.h>
#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include "evalbench/agent.hpp"
#include "evalbench/devstack.hpp"
#include "evalbench/error.hpp"
#include "evalbench/server.hpp"

namespace evalbench::cli {

namespace fs = std::filesystem;

std::string normalize_server_url(const std::string& url) {
    std::string u = url;
    while (!u.empty() && u.back() == '/') u.pop_back();
    if (u.rfind("http://", 0) == 0 || u.rfind("https://", 0) == 0) return u;
    return "http://" + u;
}

namespace {

std::string default_server() {
    const char* v = std::getenv("EVALBENCH_SERVER");
    return v && *v ? v : "http://127.0.0.1:8080";
}

/// Raised for failures that end the command with exit code 1.
struct Failure {
    std::string message;
};

/// Thin REST client that turns transport and HTTP errors into Failure.
class Api {
public:
    explicit Api(const std::string& server) : url_(normalize_server_url(server)), http_(url_) {
        http_.set_connection_timeout(5, 0);
        http_.set_read_timeout(300, 0);
    }

    std::string get(const std::string& path, const httplib::Params& params = {}) {
        return check(http_.Get(path, params, httplib::Headers{}));
    }
    std::string post(const std::string& path, const Json& body) {
        return check(http_.Post(path, body.dump(), "application/json"));
    }

private:
    std::string check(const httplib::Result& res) {
        if (!res) throw Failure{"cannot reach server " + url_ + ": " + httplib::to_string(res.error())};
        if (res->status >= 300) {
            std::string msg = "HTTP " + std::to_string(res->status);
            try {
                const auto e = Json::parse(res->body).at("error");
                msg = e.at("code").get<std::string>() + ": " + e.at("message").get<std::string>();
            } catch (const std::exception&) {
                if (!res->body.empty()) msg += ": " + res->body;
            }
            throw Failure{msg};
        }
        return res->body;
    }

    std::string url_;
    httplib::Client http_;
};

std::pair<std::string, std::string> split_once(const std::string& s, char sep) {
    const auto p = s.find(sep);
    if (p == std::string::npos) return {s, ""};
    return {s.substr(0, p), s.substr(p + 1)};
}

std::string fmt(const Json& v, int digits = 3) {
    if (v.is_null()) return "-";
    if (!v.is_number()) return v.is_string() ? v.get<std::string>() : v.dump();
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v.get<double>();
    return s.str();
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            out << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
            out << (c + 1 < cells.size() ? "  " : "\n");
        }
    };
    line(header);
    for (const auto& r : rows) line(r);
}

/// Blocks SIGINT and SIGTERM (inherited by threads started afterwards) and
/// returns a function that waits for either.
std::function<void()> prepare_signal_wait() {
    auto set = std::make_shared<sigset_t>();
    sigemptyset(set.get());
    sigaddset(set.get(), SIGINT);
    sigaddset(set.get(), SIGTERM);
    pthread_sigmask(SIG_BLOCK, set.get(), nullptr);
    return [set] {
        int sig = 0;
        sigwait(set.get(), &sig);
    };
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure{"cannot read " + path};
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateFlags {
    std::string server = default_server();
    std::string model;
    std::string framework;
    std::string manifest;
    std::string scenario = "batched";
    std::uint32_t batch_size = 1;
    double rate = 10.0;
    std::string dist = "poisson";
    std::uint64_t count = 10;
    std::optional<double> duration;
    std::uint64_t warmup = 0;
    std::string trace_level = "none";
    std::string hw_device;
    std::optional<std::uint64_t> hw_min_memory;
    std::string hw_arch;
    std::string hw_interconnect;
    std::string fan_out = "one";
    std::uint64_t seed = 0;
    std::string output = "table";
    std::string record_file;
    std::size_t items = 64;
    double timeout_s = 600;
};

Json build_submission(const EvaluateFlags& f) {
    EvaluationSubmission s;
    auto& r = s.request;
    std::tie(r.model_name, r.model_version) = split_once(f.model, ':');
    std::tie(r.framework_name, r.framework_version) = split_once(f.framework, ':');
    if (!f.manifest.empty()) r.model_manifest = read_text(f.manifest);
    auto& sc = r.benchmark_scenario;
    sc.kind = f.scenario == "online" ? ScenarioKind::online : ScenarioKind::batched;
    if (sc.kind == ScenarioKind::batched) {
        sc.batch_size = f.batch_size;
    } else {
        Arrival a;
        a.rate = f.rate;
        a.distribution = f.dist == "fixed"     ? ArrivalDistribution::fixed
                         : f.dist == "uniform" ? ArrivalDistribution::uniform
                                               : ArrivalDistribution::poisson;
        sc.arrival = a;
    }
    if (f.duration) sc.duration_s = *f.duration;
    else sc.count = f.count;
    sc.warmup_count = f.warmup;
    sc.seed = f.seed;
    r.predict_options.trace_level = *trace_level_from(f.trace_level);
    if (!f.hw_device.empty()) s.hw.device_kind = device_kind_from(f.hw_device);
    s.hw.min_memory_bytes = f.hw_min_memory;
    if (!f.hw_arch.empty()) s.hw.architecture = f.hw_arch;
    if (!f.hw_interconnect.empty()) s.hw.interconnect = f.hw_interconnect;
    s.fan_out = f.fan_out == "all" ? FanOut::all : FanOut::one;
    if (!f.record_file.empty()) s.workload.record_file = fs::absolute(f.record_file).string();
    s.workload.items = f.items;
    return Json(s);
}

void print_summary_table(std::ostream& out, const Json& summary) {
    out << "state: " << summary.at("state").get<std::string>() << "\n";
    if (summary.contains("error")) out << "error: " << summary.at("error").get<std::string>() << "\n";
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : summary.at("results")) {
        const auto& lat = r.at("latency");
        rows.push_back({r.at("model").at("name").get<std::string>() + ":" + r.at("model").at("version").get<std::string>(),
                        r.at("framework").at("name").get<std::string>() + ":" +
                            r.at("framework").at("version").get<std::string>(),
                        r.at("architecture").get<std::string>(), std::to_string(r.at("requests").get<std::uint64_t>()),
                        lat.is_null() ? "-" : fmt(lat.at("trimmed_mean_ms")),
                        lat.is_null() ? "-" : fmt(lat.at("p90_ms")), fmt(r.at("throughput"), 1)});
    }
    if (!rows.empty()) {
        print_table(out, {"MODEL", "FRAMEWORK", "ARCH", "REQUESTS", "TRIMMED MEAN (ms)", "P90 (ms)", "THROUGHPUT (items/s)"},
                    rows);
    }
}

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out, std::ostream& err) {
    Api api(f.server);
    const auto created = Json::parse(api.post("/api/v1/evaluations", build_submission(f)));
    const auto id = created.at("job_id").get<std::string>();
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(f.timeout_s);
    std::string state = created.at("state").get<std::string>();
    while (state != "completed" && state != "failed") {
        if (std::chrono::steady_clock::now() > deadline) throw Failure{"timed out waiting for job " + id};
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        state = Json::parse(api.get("/api/v1/evaluations/" + id)).at("state").get<std::string>();
    }
    const std::string body = api.get("/api/v1/evaluations/" + id + "/summary");
    const Json summary = Json::parse(body);
    if (f.output == "json") out << body << "\n";
    else print_summary_table(out, summary);
    if (state != "completed") {
        err << "error: job " << id << " failed: " << summary.value("error", std::string("unknown error")) << "\n";
        return kExitFailed;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze, agents, models

struct AnalyzeFlags {
    std::string server = default_server();
    std::string model;
    std::string framework;
    std::string architecture;
    std::string scenario;
    std::optional<std::int64_t> since_ms;
    std::optional<std::int64_t> until_ms;
    std::vector<std::string> ids;
    std::string title = "Evaluation report";
    std::size_t top_layers = 5;
    std::string out_dir = ".";
};

int cmd_analyze(const AnalyzeFlags& f, std::ostream& out) {
    Json filter = Json::object();
    if (!f.model.empty()) {
        auto [name, version] = split_once(f.model, ':');
        filter["model_name"] = name;
        if (!version.empty()) filter["model_version"] = version;
    }
    if (!f.framework.empty()) {
        auto [name, version] = split_once(f.framework, ':');
        filter["framework_name"] = name;
        if (!version.empty()) filter["framework_version"] = version;
    }
    if (!f.architecture.empty()) filter["architecture"] = f.architecture;
    if (!f.scenario.empty()) filter["scenario_kind"] = f.scenario;
    if (f.since_ms) filter["started_after_ms"] = *f.since_ms;
    if (f.until_ms) filter["started_before_ms"] = *f.until_ms;
    Api api(f.server);
    const Json body{{"filter", filter},
                    {"evaluation_ids", f.ids},
                    {"options", Json{{"title", f.title}, {"top_layers", f.top_layers}}}};
    const auto id = Json::parse(api.post("/api/v1/analyses", body)).at("report_id").get<std::string>();
    fs::create_directories(f.out_dir);
    const auto json_path = fs::path(f.out_dir) / ("report-" + id + ".json");
    const auto html_path = fs::path(f.out_dir) / ("report-" + id + ".html");
    std::ofstream(json_path, std::ios::binary) << api.get("/api/v1/analyses/" + id) << "\n";
    std::ofstream(html_path, std::ios::binary) << api.get("/api/v1/analyses/" + id + "/html");
    out << "report " << id << "\n" << json_path.string() << "\n" << html_path.string() << "\n";
    return kExitOk;
}

int cmd_agents(const std::string& server, const std::string& output, std::ostream& out) {
    const std::string body = Api(server).get("/api/v1/agents");
    if (output == "json") {
        out << body << "\n";
        return kExitOk;
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& a : Json::parse(body)) {
        std::string fws;
        for (const auto& fw : a.at("frameworks")) {
            if (!fws.empty()) fws += ",";
            fws += fw.at("name").get<std::string>() + ":" + fw.at("version").get<std::string>();
        }
        rows.push_back({a.at("agent_id").get<std::string>(), a.at("endpoint").get<std::string>(),
                        a.at("architecture").get<std::string>(), fws,
                        std::to_string(a.value("in_flight", 0u))});
    }
    print_table(out, {"AGENT", "ENDPOINT", "ARCH", "FRAMEWORKS", "IN FLIGHT"}, rows);
    return kExitOk;
}

int cmd_models(const std::string& server, const std::string& output, const std::string& framework,
               const std::vector<std::string>& attrs, std::ostream& out) {
    httplib::Params params;
    if (!framework.empty()) params.emplace("framework", framework);
    for (const auto& kv : attrs) {
        auto [k, v] = split_once(kv, '=');
        params.emplace("attr." + k, v);
    }
    const std::string body = Api(server).get("/api/v1/models", params);
    if (output == "json") {
        out << body << "\n";
        return kExitOk;
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : Json::parse(body)) {
        std::string fw = "-";
        if (m.contains("framework")) {
            fw = m["framework"].at("name").get<std::string>() + " " + m["framework"].at("constraint").get<std::string>();
        }
        std::string attr;
        const Json attributes = m.value("attributes", Json::object());
        for (const auto& [k, v] : attributes.items()) {
            if (!attr.empty()) attr += ",";
            attr += k + "=" + v.get<std::string>();
        }
        rows.push_back({m.at("name").get<std::string>(), m.at("version").get<std::string>(), fw,
                        m.at("source").get<std::string>(), attr.empty() ? "-" : attr});
    }
    print_table(out, {"MODEL", "VERSION", "FRAMEWORK", "SOURCE", "ATTRIBUTES"}, rows);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// long-running services

int cmd_dev_up(const std::string& listen, std::size_t agents, const std::string& db,
               const std::map<std::string, std::string>& options, std::ostream& out) {
    const auto wait = prepare_signal_wait();
    const auto ep = net::Endpoint::parse(listen);
    DevStackOptions o;
    o.host = ep.host;
    o.server_port = ep.port;
    o.agents = agents;
    o.evaldb_dir = db;
    o.predictor_options = options;
    DevStack stack(o);
    stack.start();
    out << "server   " << stack.server().base_url() << "\n"
        << "registry " << stack.registry_endpoint().to_string() << "\n"
        << "tracer   " << stack.tracer_endpoint().to_string() << "\n"
        << "results  " << fs::absolute(db).string() << "\n"
        << "agents   " << stack.agent_count() << " (synthetic TensorFlow 1.13.1)\n"
        << "press Ctrl-C to stop" << std::endl;
    wait();
    stack.stop();
    return kExitOk;
}

int cmd_serve(ServerConfig config, std::ostream& out) {
    const auto wait = prepare_signal_wait();
    apply_env_overrides(config);
    if (config.registry.host.empty()) throw Failure{"a registry endpoint is required (--registry or EVALBENCH_REGISTRY)"};
    Server server(config);
    server.start();
    out << "server " << server.base_url() << std::endl;
    wait();
    server.stop();
    return kExitOk;
}

int cmd_agent(const std::string& config_path, std::ostream& out) {
    const auto wait = prepare_signal_wait();
    auto config = load_agent_config(config_path);
    apply_env_overrides(config);
    Agent agent(config);
    agent.start();
    out << "agent " << agent.endpoint().to_string() << std::endl;
    wait();
    agent.stop();
    return kExitOk;
}

int cmd_registry(const std::string& listen, std::ostream& out) {
    const auto wait = prepare_signal_wait();
    RegistryService service(std::make_shared<Registry>(), net::Endpoint::parse(listen));
    service.start();
    out << "registry " << service.endpoint().to_string() << std::endl;
    wait();
    service.stop();
    return kExitOk;
}

int cmd_tracer(const std::string& listen, const std::string& snapshot, std::ostream& out) {
    const auto wait = prepare_signal_wait();
    std::optional<fs::path> snap;
    if (!snapshot.empty()) snap = snapshot;
    TracerService service(std::make_shared<TraceStore>(snap), net::Endpoint::parse(listen));
    service.start();
    out << "tracer " << service.endpoint().to_string() << std::endl;
    wait();
    service.stop();
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"evalbench: distributed benchmarking of model evaluations", "evalbench"};
    app.require_subcommand(1);
    const auto output_check = CLI::IsMember({"json", "table"});

    EvaluateFlags ev;
    auto* evaluate = app.add_subcommand("evaluate", "Submit an evaluation and print its summary");
    evaluate->add_option("--server", ev.server, "Server URL (default $EVALBENCH_SERVER or http://127.0.0.1:8080)");
    evaluate->add_option("--model", ev.model, "Model NAME[:VERSION]");
    evaluate->add_option("--framework", ev.framework, "Framework NAME[:CONSTRAINT] (default: from the manifest)");
    evaluate->add_option("--manifest", ev.manifest, "Model manifest YAML to send inline");
    evaluate->add_option("--scenario", ev.scenario, "batched or online")->check(CLI::IsMember({"batched", "online"}))
        ->capture_default_str();
    evaluate->add_option("--batch-size", ev.batch_size, "Items per batched request")->capture_default_str();
    evaluate->add_option("--rate", ev.rate, "Online arrivals per second")->capture_default_str();
    evaluate->add_option("--dist", ev.dist, "Online arrival process")
        ->check(CLI::IsMember({"poisson", "uniform", "fixed"}))
        ->capture_default_str();
    auto* count_opt = evaluate->add_option("--count", ev.count, "Measured requests")->capture_default_str();
    evaluate->add_option("--duration", ev.duration, "Run for this many seconds instead of --count")
        ->excludes(count_opt);
    evaluate->add_option("--warmup", ev.warmup, "Unmeasured requests issued first")->capture_default_str();
    evaluate->add_option("--trace-level", ev.trace_level, "none, model, framework, system or full")
        ->check(CLI::IsMember({"none", "model", "framework", "system", "full"}, CLI::ignore_case))
        ->capture_default_str();
    evaluate->add_option("--hw-device", ev.hw_device, "Require a device kind")
        ->check(CLI::IsMember({"cpu", "gpu", "fpga"}));
    evaluate->add_option("--hw-min-memory", ev.hw_min_memory, "Require a device with this many bytes");
    evaluate->add_option("--hw-arch", ev.hw_arch, "Require an architecture, such as x86_64");
    evaluate->add_option("--hw-interconnect", ev.hw_interconnect, "Require an interconnect, such as nvlink");
    evaluate->add_option("--fan-out", ev.fan_out, "one agent or all capable agents")
        ->check(CLI::IsMember({"one", "all"}))
        ->capture_default_str();
    evaluate->add_option("--seed", ev.seed, "Arrival process seed")->capture_default_str();
    evaluate->add_option("--output", ev.output, "json prints the server summary verbatim")
        ->check(output_check)
        ->capture_default_str();
    evaluate->add_option("--record-file", ev.record_file, "Input items as a record file on the server host");
    evaluate->add_option("--items", ev.items, "Distinct synthetic items when no record file is given")
        ->capture_default_str();
    evaluate->add_option("--timeout", ev.timeout_s, "Seconds to wait for the job")->capture_default_str();

    AnalyzeFlags an;
    auto* analyze = app.add_subcommand("analyze", "Build a report over stored evaluations");
    analyze->add_option("--server", an.server, "Server URL");
    analyze->add_option("--model", an.model, "Model NAME[:CONSTRAINT]");
    analyze->add_option("--framework", an.framework, "Framework NAME[:CONSTRAINT]");
    analyze->add_option("--arch", an.architecture, "Agent architecture");
    analyze->add_option("--scenario", an.scenario, "batched or online")->check(CLI::IsMember({"batched", "online"}));
    analyze->add_option("--since-ms", an.since_ms, "Earliest start, Unix milliseconds");
    analyze->add_option("--until-ms", an.until_ms, "Latest start, Unix milliseconds");
    analyze->add_option("--id", an.ids, "Evaluation id; repeat to select several");
    analyze->add_option("--title", an.title, "Report title")->capture_default_str();
    analyze->add_option("--top-layers", an.top_layers, "Layers listed per trace")->capture_default_str();
    analyze->add_option("--out-dir", an.out_dir, "Where report JSON and HTML are written")->capture_default_str();

    std::string list_server = default_server();
    std::string list_output = "table";
    auto* agents = app.add_subcommand("agents", "List registered agents");
    agents->add_option("--server", list_server, "Server URL");
    agents->add_option("--output", list_output, "json or table")->check(output_check)->capture_default_str();

    std::string models_framework;
    std::vector<std::string> models_attrs;
    auto* models = app.add_subcommand("models", "List available models");
    models->add_option("--server", list_server, "Server URL");
    models->add_option("--output", list_output, "json or table")->check(output_check)->capture_default_str();
    models->add_option("--framework", models_framework, "Only models for this framework");
    models->add_option("--attr", models_attrs, "KEY=VALUE attribute filter; repeatable");

    std::string dev_listen = "127.0.0.1:8080";
    std::size_t dev_agents = 1;
    std::string dev_db = "evalbench-dev";
    double dev_base_ms = 2.0;
    double dev_per_item_ms = 0.5;
    auto* dev = app.add_subcommand("dev", "Local development helpers");
    dev->require_subcommand(1);
    auto* dev_up = dev->add_subcommand("up", "Run registry, tracer, server and agents in this process");
    dev_up->add_option("--listen", dev_listen, "Server address")->capture_default_str();
    dev_up->add_option("--agents", dev_agents, "Synthetic agents to start")->capture_default_str();
    dev_up->add_option("--db", dev_db, "Result directory")->capture_default_str();
    dev_up->add_option("--base-ms", dev_base_ms, "Synthetic fixed cost per batch")->capture_default_str();
    dev_up->add_option("--per-item-ms", dev_per_item_ms, "Synthetic cost per item")->capture_default_str();

    ServerConfig serve_config;
    std::string serve_listen = "127.0.0.1:8080";
    std::string serve_registry;
    std::string serve_tracer;
    std::string serve_db = "evalbench-db";
    auto* serve = app.add_subcommand("serve", "Run the evaluation server");
    serve->add_option("--listen", serve_listen, "REST address")->capture_default_str();
    serve->add_option("--registry", serve_registry, "Registry host:port");
    serve->add_option("--tracer", serve_tracer, "Tracer host:port");
    serve->add_option("--db", serve_db, "Result directory")->capture_default_str();

    std::string agent_config;
    auto* agent = app.add_subcommand("agent", "Run an agent from a YAML config");
    agent->add_option("--config", agent_config, "Agent config file")->required();

    std::string registry_listen = "127.0.0.1:7000";
    auto* registry = app.add_subcommand("registry", "Run the registry");
    registry->add_option("--listen", registry_listen, "Address")->capture_default_str();

    std::string tracer_listen = "127.0.0.1:7001";
    std::string tracer_snapshot;
    auto* tracer = app.add_subcommand("tracer", "Run the tracing server");
    tracer->add_option("--listen", tracer_listen, "Address")->capture_default_str();
    tracer->add_option("--snapshot", tracer_snapshot, "Append-only span log to restore from and write to");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (*evaluate) {
            if (ev.model.empty() && ev.manifest.empty()) {
                err << "error: --model or --manifest is required\n" << evaluate->help();
                return kExitUsage;
            }
            return cmd_evaluate(ev, out, err);
        }
        if (*analyze) return cmd_analyze(an, out);
        if (*agents) return cmd_agents(list_server, list_output, out);
        if (*models) return cmd_models(list_server, list_output, models_framework, models_attrs, out);
        if (*dev_up) {
            std::ostringstream base, per;
            base << dev_base_ms;
            per << dev_per_item_ms;
            return cmd_dev_up(dev_listen, dev_agents, dev_db,
                              {{"synthetic.base_ms", base.str()}, {"synthetic.per_item_ms", per.str()}}, out);
        }
        if (*serve) {
            serve_config.listen = net::Endpoint::parse(serve_listen);
            if (!serve_registry.empty()) serve_config.registry = net::Endpoint::parse(serve_registry);
            if (!serve_tracer.empty()) serve_config.tracer = net::Endpoint::parse(serve_tracer);
            serve_config.evaldb_dir = serve_db;
            return cmd_serve(serve_config, out);
        }
        if (*agent) return cmd_agent(agent_config, out);
        if (*registry) return cmd_registry(registry_listen, out);
        if (*tracer) return cmd_tracer(tracer_listen, tracer_snapshot, out);
    } catch (const Failure& f) {
        err << "error: " << f.message << "\n";
        return kExitFailed;
    } catch (const Error& e) {
        err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
        return kExitFailed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailed;
    }
    return kExitUsage;
}

} // namespace evalbench::cli
