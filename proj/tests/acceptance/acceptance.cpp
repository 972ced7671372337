// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Oracles here are written from the
// definitions, independently of the library code they check.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "evalbench/analysis.hpp"
#include "evalbench/clock.hpp"
#include "evalbench/devstack.hpp"
#include "evalbench/manifest.hpp"
#include "evalbench/pipeline.hpp"
#include "evalbench/predictor.hpp"
#include "evalbench/registry.hpp"
#include "evalbench/scenarios.hpp"
#include "evalbench/tracer.hpp"
#include "published_fixtures.hpp"

namespace fs = std::filesystem;
using namespace evalbench;
using Stopwatch = std::chrono::steady_clock;

namespace {

/// Collects failed checks for one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (!ok && failures_.size() < 8) failures_.push_back(what);
        if (!ok) ++failed_;
    }
    bool ok() const { return failed_ == 0; }
    std::size_t checks() const { return checks_; }
    std::size_t failed() const { return failed_; }
    const std::vector<std::string>& failures() const { return failures_; }
    std::string note;

private:
    std::size_t checks_ = 0;
    std::size_t failed_ = 0;
    std::vector<std::string> failures_;
};

std::string fmt(double v, int precision = 17) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("evalbench-acceptance-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// ---------------------------------------------------------------------------
// 1. Metric oracles

void metric_oracles(Check& c) {
    const auto t0 = Stopwatch::now();
    std::mt19937_64 rng(0x5eed0001);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 10000;
        std::vector<double> xs(n);
        // Alternate continuous draws with small integer ranges to force ties.
        const bool ties = trial % 3 == 0;
        std::uniform_real_distribution<double> u(-1e3, 1e3);
        for (auto& x : xs) x = ties ? double(rng() % 17) : u(rng);

        // Trim formula: mean(sorted[k : n - k]) with k = floor(0.2 n).
        std::vector<double> sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t k = n / 5;
        double sum = 0;
        for (std::size_t i = k; i < n - k; ++i) sum += sorted[i];
        const double want = sum / double(n - 2 * k);
        const double got = trimmed_mean(xs);
        c.expect(got == want, "trimmed_mean trial " + std::to_string(trial) + " n=" + std::to_string(n) + ": " +
                                  fmt(got) + " != " + fmt(want));

        // Nearest rank with an integer p: index ceil(p n / 100) - 1.
        for (int j = 0; j < 3; ++j) {
            const std::size_t p = j == 0 ? 90 : 1 + rng() % 100;
            const std::size_t rank = (p * n + 99) / 100;
            const double pw = sorted[rank - 1];
            const double pg = percentile(xs, double(p));
            c.expect(pg == pw, "percentile p=" + std::to_string(p) + " n=" + std::to_string(n) + ": " + fmt(pg) +
                                   " != " + fmt(pw));
        }
    }
    const double secs = std::chrono::duration<double>(Stopwatch::now() - t0).count();
    c.expect(secs < 5.0, "runtime " + fmt(secs, 3) + " s exceeds 5 s");
    c.note = "1000 lists, runtime " + fmt(secs, 3) + " s";
}

// ---------------------------------------------------------------------------
// 2. Layer report replay

void table3_replay(Check& c) {
    auto spans = fixtures::load_table3_spans();
    const auto trace_id = spans.front().trace_id;
    const auto timeline = assemble_spans(trace_id, std::move(spans));
    const auto rows = layer_report(timeline, 5);

    struct Row {
        std::int64_t index;
        std::string name, shape, kernel;
        double ms;
    };
    const std::vector<Row> published{
        {208, "conv2d_48/Conv2D", "<256, 512, 7, 7>", "volta_cgemm_32x32_tn", 7.59},
        {221, "conv2d_51/Conv2D", "<256, 512, 7, 7>", "volta_cgemm_32x32_tn", 7.57},
        {195, "conv2d_45/Conv2D", "<256, 512, 7, 7>", "volta_scudnn_128x128_relu_interior_nn_v1", 5.67},
        {3, "conv2d/Conv2D", "<256, 64, 112, 112>", "volta_scudnn_128x64_relu_interior_nn_v1", 5.08},
        {113, "conv2d_26/Conv2D", "<256, 256, 14, 14>", "volta_scudnn_128x64_relu_interior_nn_v1", 4.67},
    };
    c.expect(rows.size() == published.size(), "expected 5 rows, got " + std::to_string(rows.size()));
    for (std::size_t i = 0; i < std::min(rows.size(), published.size()); ++i) {
        const auto& r = rows[i];
        const auto& p = published[i];
        const std::string at = "row " + std::to_string(i + 1) + ": ";
        c.expect(r.layer_index == p.index, at + "index " + std::to_string(r.layer_index));
        c.expect(r.layer_name == p.name, at + "name " + r.layer_name);
        c.expect(r.layer_type == "Conv2D", at + "type " + r.layer_type);
        c.expect(r.layer_shape == p.shape, at + "shape " + r.layer_shape);
        c.expect(r.dominant_kernel == p.kernel, at + "kernel " + r.dominant_kernel);
        c.expect(r.latency_ms == p.ms, at + "latency " + fmt(r.latency_ms));
    }
    const std::vector<std::pair<std::string, double>> kernels{
        {"volta_cgemm_32x32_tn", 6.03}, {"flip_filter", 0.43},    {"fft2d_r2c_16x16", 0.42},
        {"fft2d_c2r_16x16", 0.25},      {"fft2d_r2c_16x16", 0.25}, {"ShuffleInTensor3Simple", 0.06},
        {"compute_gemm_pointers", 0.004}};
    if (!rows.empty()) {
        const auto& ks = rows[0].kernels;
        c.expect(ks.size() == kernels.size(), "layer 208 has " + std::to_string(ks.size()) + " kernels");
        for (std::size_t k = 0; k < std::min(ks.size(), kernels.size()); ++k) {
            c.expect(ks[k].name == kernels[k].first, "kernel " + std::to_string(k + 1) + " name " + ks[k].name);
            c.expect(ks[k].latency_ms == kernels[k].second,
                     "kernel " + std::to_string(k + 1) + " latency " + fmt(ks[k].latency_ms));
        }
    }
    c.note = std::to_string(timeline.span_count()) + " spans, top-5 layers and 7 kernels of layer 208";
}

// ---------------------------------------------------------------------------
// 3. Throughput replay

void table2_replay(Check& c) {
    const std::map<std::string, std::pair<double, std::uint32_t>> published{
        {"Inception_v3", {811.0, 64}}, {"MLPerf_ResNet50_v1.5", {930.7, 256}}};
    std::set<std::string> seen;
    for (const auto& m : fixtures::load_table2()) {
        const auto it = published.find(m.name);
        if (it == published.end()) continue;
        seen.insert(m.name);
        const auto curve = throughput_curve(m.samples);
        c.expect(curve.max_throughput == it->second.first, m.name + " max " + fmt(curve.max_throughput));
        c.expect(curve.optimal_batch_size == it->second.second,
                 m.name + " optimal batch " + std::to_string(curve.optimal_batch_size));
    }
    c.expect(seen.size() == published.size(), "fixture lacks a published model");
    c.note = "Inception_v3 811.0@64, MLPerf_ResNet50_v1.5 930.7@256";
}

// ---------------------------------------------------------------------------
// 4. Virtual-clock end to end over REST

Json rest_json(httplib::Client& http, const httplib::Result& res, int want_status) {
    if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
    if (res->status != want_status) {
        throw std::runtime_error("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    (void)http;
    return Json::parse(res->body);
}

void virtual_clock_end_to_end(Check& c) {
    const auto t0 = Stopwatch::now();
    TempDir dir;
    DevStackOptions o;
    o.evaldb_dir = dir.path / "db";
    o.predictor_options = {{"synthetic.base_ms", "2"}, {"synthetic.per_item_ms", "0.5"}};
    DevStack stack(o);
    stack.start();
    httplib::Client http(stack.server().base_url());
    http.set_read_timeout(30, 0);

    std::vector<std::string> result_ids;
    for (const std::uint32_t b : {1u, 8u, 64u}) {
        EvaluationSubmission s;
        s.request.model_name = "MLPerf_ResNet50_v1.5";
        s.request.benchmark_scenario.kind = ScenarioKind::batched;
        s.request.benchmark_scenario.batch_size = b;
        s.request.benchmark_scenario.count = 10;
        s.request.predict_options.trace_level = TraceLevel::none;
        const Json job = rest_json(http, http.Post("/api/v1/evaluations", Json(s).dump(), "application/json"), 202);
        const auto id = job.at("job_id").get<std::string>();

        std::string state;
        for (int i = 0; i < 3000; ++i) {
            state = rest_json(http, http.Get("/api/v1/evaluations/" + id), 200).at("state").get<std::string>();
            if (state == "completed" || state == "failed") break;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        const Json summary = rest_json(http, http.Get("/api/v1/evaluations/" + id + "/summary"), 200);
        for (const auto& r : rest_json(http, http.Get("/api/v1/evaluations/" + id), 200).at("result_ids")) {
            result_ids.push_back(r.get<std::string>());
        }
        c.expect(state == "completed", "b=" + std::to_string(b) + " ended " + state + " " + summary.dump());
        if (state != "completed") continue;
        const double got = summary.at("results").at(0).at("throughput").get<double>();
        // b / (2 + 0.5 b) items per ms, in items per second.
        const double want = double(b) * 1000.0 / (2.0 + 0.5 * double(b));
        c.expect(got == want, "b=" + std::to_string(b) + " throughput " + fmt(got) + " != " + fmt(want));
    }

    const Json created = rest_json(
        http, http.Post("/api/v1/analyses", Json{{"evaluation_ids", result_ids}}.dump(), "application/json"), 201);
    const auto report_id = created.at("report_id").get<std::string>();
    const Json report = rest_json(http, http.Get("/api/v1/analyses/" + report_id), 200);
    const Json& m = report.at("speedup");
    c.expect(m.is_object(), "report has no speedup matrix");
    if (m.is_object()) {
        const auto sizes = m.at("batch_sizes").get<std::vector<std::uint32_t>>();
        // One row per batch size, one column per model.
        const auto row = std::find(sizes.begin(), sizes.end(), 64u) - sizes.begin();
        c.expect(m.at("models").size() == 1, "expected one model column");
        c.expect(row < std::ptrdiff_t(sizes.size()), "no b=64 row");
        if (row < std::ptrdiff_t(sizes.size()) && !m.at("models").empty()) {
            const Json& cell = m.at("cells").at(std::size_t(row)).at(0);
            const double want = 64.0 * 2.5 / 34.0;
            c.expect(cell.is_number() && std::abs(cell.get<double>() - want) <= 1e-9,
                     "speedup at 64 is " + cell.dump() + ", want " + fmt(want));
        }
    }
    stack.stop();
    const double secs = std::chrono::duration<double>(Stopwatch::now() - t0).count();
    c.expect(secs < 30.0, "runtime " + fmt(secs, 3) + " s exceeds 30 s");
    c.note = "b in {1, 8, 64}, speedup(64) = 64*2.5/34, runtime " + fmt(secs, 3) + " s";
}

// ---------------------------------------------------------------------------
// 5. Poisson generator

void poisson_generator(Check& c) {
    const std::uint64_t seed = 20260416;
    const auto a = gen_poisson(100.0, 100000, seed);
    const auto b = gen_poisson(100.0, 100000, seed);
    c.expect(a.offsets.size() == 100000, "schedule has " + std::to_string(a.offsets.size()) + " arrivals");
    c.expect(a.offsets == b.offsets, "re-run with the same seed differs");

    std::vector<double> gaps;
    gaps.reserve(a.offsets.size());
    double prev = 0;
    for (double t : a.offsets) {
        gaps.push_back(t - prev);
        prev = t;
    }
    double mean = 0;
    for (double g : gaps) mean += g;
    mean /= double(gaps.size());
    double var = 0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    var /= double(gaps.size());
    const double cv = std::sqrt(var) / mean;
    c.expect(std::abs(mean - 0.01) <= 0.03 * 0.01, "mean gap " + fmt(mean, 6) + " s");
    c.expect(std::abs(cv - 1.0) <= 0.05, "CV " + fmt(cv, 6));
    c.note = "mean gap " + fmt(mean * 1e3, 5) + " ms, CV " + fmt(cv, 5);
}

// ---------------------------------------------------------------------------
// 6. Registry resolution

struct FleetGen {
    std::mt19937_64 rng;
    explicit FleetGen(std::uint64_t seed) : rng(seed) {}
    int pick(int n) { return int(rng() % std::uint64_t(n)); }
    SemVer version() { return SemVer{std::uint64_t(pick(3)), std::uint64_t(pick(3)), std::uint64_t(pick(2))}; }

    AgentRecord agent(int idx) {
        AgentRecord a;
        a.agent_id = "agent-" + std::to_string(100 + pick(900)) + "-" + std::to_string(idx);
        a.endpoint = "10.1.0." + std::to_string(idx) + ":7000";
        static const char* archs[] = {"amd64", "arm64", "ppc64le"};
        a.architecture = archs[pick(3)];
        for (int i = 0, n = 1 + pick(2); i < n; ++i) {
            a.devices.push_back(DeviceInfo{pick(3) ? DeviceKind::gpu : DeviceKind::cpu, "dev" + std::to_string(i),
                                           std::uint64_t(1 + pick(16)) << 30, 1});
        }
        if (pick(3)) a.interconnect = pick(2) ? "nvlink" : "pcie";
        for (int i = 0, n = pick(3); i < n; ++i) {
            a.frameworks.push_back({pick(2) ? "TensorFlow" : "MXNet", version()});
        }
        for (int i = 0, n = pick(3); i < n; ++i) {
            a.builtin_models.push_back({pick(2) ? "ResNet50" : "Inception_v3", version()});
        }
        return a;
    }

    VersionConstraint constraint() {
        static const char* ops[] = {">=", ">", "<=", "<", "="};
        std::string text;
        for (int i = 0, n = pick(3); i < n; ++i) {
            if (i) text += ' ';
            text += std::string(ops[pick(5)]) + version().to_string();
        }
        return parse_constraint(text);
    }

    ResolveQuery query() {
        ResolveQuery q;
        if (pick(5)) q.framework_name = pick(2) ? "TensorFlow" : "MXNet";
        q.framework_constraint = constraint();
        if (pick(3)) q.model_name = pick(2) ? "ResNet50" : "Inception_v3";
        q.model_constraint = constraint();
        q.inline_manifest = pick(5) == 0;
        if (pick(2)) q.hw.device_kind = pick(2) ? DeviceKind::gpu : DeviceKind::cpu;
        if (pick(4) == 0) q.hw.architecture = pick(2) ? "amd64" : "ppc64le";
        if (pick(3) == 0) q.hw.min_memory_bytes = std::uint64_t(1 + pick(16)) << 30;
        if (pick(4) == 0) q.hw.interconnect = pick(2) ? "nvlink" : "pcie";
        return q;
    }
};

int compare(const SemVer& a, const SemVer& b) {
    const auto x = std::tuple(a.major, a.minor, a.patch);
    const auto y = std::tuple(b.major, b.minor, b.patch);
    return x < y ? -1 : (y < x ? 1 : 0);
}

bool version_ok(const SemVer& v, const VersionConstraint& vc) {
    return std::all_of(vc.clauses.begin(), vc.clauses.end(), [&](const auto& cl) {
        const int d = compare(v, cl.version);
        switch (cl.cmp) {
        case Comparator::ge: return d >= 0;
        case Comparator::gt: return d > 0;
        case Comparator::le: return d <= 0;
        case Comparator::lt: return d < 0;
        case Comparator::eq: return d == 0;
        }
        return false;
    });
}

bool capable(const AgentRecord& a, const ResolveQuery& q) {
    const bool fw = q.framework_name.empty() || std::any_of(a.frameworks.begin(), a.frameworks.end(), [&](auto& f) {
                        return f.name == q.framework_name && version_ok(f.version, q.framework_constraint);
                    });
    const bool model = q.inline_manifest || q.model_name.empty() ||
                       std::any_of(a.builtin_models.begin(), a.builtin_models.end(), [&](auto& m) {
                           return m.name == q.model_name && version_ok(m.version, q.model_constraint);
                       });
    // One device must satisfy kind and memory together.
    const bool device = (!q.hw.device_kind && !q.hw.min_memory_bytes) ||
                        std::any_of(a.devices.begin(), a.devices.end(), [&](auto& d) {
                            return (!q.hw.device_kind || d.kind == *q.hw.device_kind) &&
                                   (!q.hw.min_memory_bytes || d.memory_bytes >= *q.hw.min_memory_bytes);
                        });
    const bool arch = !q.hw.architecture || *q.hw.architecture == a.architecture;
    const bool link = !q.hw.interconnect || (a.interconnect && *a.interconnect == *q.hw.interconnect);
    return fw && model && device && arch && link;
}

void registry_resolution(Check& c) {
    FleetGen g(0xacce97);
    std::size_t matched = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto clock = std::make_shared<ManualClock>(1000);
        Registry reg(clock);
        std::vector<std::pair<AgentRecord, std::int64_t>> fleet;  // record, expiry
        for (int i = 0, n = 1 + g.pick(10); i < n; ++i) {
            auto a = g.agent(i);
            const std::int64_t ttl = 50 + g.pick(100);
            const auto lease = reg.register_agent(a, std::chrono::milliseconds(ttl));
            a.in_flight = std::uint32_t(g.pick(3));
            reg.heartbeat(lease, a.in_flight);
            fleet.emplace_back(a, 1000 + ttl);
        }
        const std::int64_t now = 1000 + g.pick(150);
        clock->set(now);
        const auto q = g.query();

        std::vector<AgentRecord> want;
        for (const auto& [a, expiry] : fleet) {
            if (expiry > now && capable(a, q)) want.push_back(a);
        }
        std::sort(want.begin(), want.end(), [](const auto& x, const auto& y) {
            return std::tie(x.in_flight, x.agent_id) < std::tie(y.in_flight, y.agent_id);
        });
        const auto got = reg.resolve(q);
        matched += want.size();
        std::set<std::string> want_ids, got_ids;
        for (const auto& a : want) want_ids.insert(a.agent_id);
        for (const auto& a : got) got_ids.insert(a.agent_id);
        for (const auto& id : got_ids) c.expect(want_ids.count(id) == 1, "trial " + std::to_string(trial) + " unsound: " + id);
        for (const auto& id : want_ids) c.expect(got_ids.count(id) == 1, "trial " + std::to_string(trial) + " incomplete: " + id);
        bool ordered = got.size() == want.size();
        for (std::size_t i = 0; ordered && i < got.size(); ++i) ordered = got[i].agent_id == want[i].agent_id;
        c.expect(ordered, "trial " + std::to_string(trial) + " order differs");
    }

    // Lease expiry under an injected clock: visible until the deadline, then
    // gone; a heartbeat before the deadline extends it.
    auto clock = std::make_shared<ManualClock>(0);
    Registry reg(clock);
    AgentRecord a;
    a.agent_id = "lease-probe";
    a.endpoint = "127.0.0.1:9";
    a.architecture = "amd64";
    a.devices = {DeviceInfo{DeviceKind::cpu, "cpu0", 1ull << 30, 1}};
    a.frameworks = {{"TensorFlow", SemVer{1, 13, 1}}};
    const auto lease = reg.register_agent(a, std::chrono::milliseconds(100));
    ResolveQuery q;
    q.framework_name = "TensorFlow";
    clock->set(99);
    c.expect(reg.resolve(q).size() == 1, "agent gone before its lease expired");
    reg.heartbeat(lease);
    clock->set(150);
    c.expect(reg.resolve(q).size() == 1, "heartbeat did not extend the lease");
    clock->set(198);
    c.expect(reg.list_agents().size() == 1, "agent gone before the extended deadline");
    clock->set(199);
    c.expect(reg.resolve(q).empty(), "expired agent still resolves");
    c.expect(reg.list_agents().empty(), "expired agent still listed");
    bool renewed = true;
    try {
        reg.heartbeat(lease);
    } catch (const std::exception&) {
        renewed = false;
    }
    c.expect(!renewed, "expired lease accepted a heartbeat");
    c.note = "1000 cases, " + std::to_string(matched) + " expected matches, lease expiry at 100 ms";
}

// ---------------------------------------------------------------------------
// 7. Manifest round trip

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void manifest_round_trip(Check& c) {
    const auto m = parse_model_manifest(read_file(fixtures::fixture_path("listing1_model_manifest.yml")));
    c.expect(m.name == "MLPerf_ResNet50_v1.5", "name " + m.name);
    c.expect(m.version == SemVer{1, 0, 0}, "version " + m.version.to_string());
    c.expect(m.framework.name == "TensorFlow", "framework " + m.framework.name);
    const auto& cl = m.framework.constraint.clauses;
    c.expect(cl.size() == 2 && cl[0].cmp == Comparator::ge && cl[0].version == SemVer{1, 12, 0} &&
                 cl[1].cmp == Comparator::lt && cl[1].version == SemVer{2, 0, 0},
             "framework constraint is not >=1.12.0 <2.0");
    c.expect(m.framework.constraint == parse_constraint(">=1.12.0 <2.0"), "constraint differs from the listing text");
    bool mean_ok = false;
    if (!m.inputs.empty() && m.inputs[0].steps.size() == 3) {
        if (const auto* n = std::get_if<NormalizeParams>(&m.inputs[0].steps[2].params)) {
            mean_ok = n->mean == std::vector<double>{123.68, 116.78, 103.94};
        }
    }
    c.expect(mean_ok, "normalize mean is not [123.68, 116.78, 103.94]");
    const auto m2 = parse_model_manifest(render_model_manifest(m));
    c.expect(m2 == m, "reference model manifest changed across render and parse");

    const auto f = parse_framework_manifest(read_file(fixtures::fixture_path("listing2_framework_manifest.yml")));
    c.expect(f.name == "TensorFlow" && f.version == SemVer{1, 15, 0}, "framework manifest name or version");
    c.expect(f.containers.size() == 2 && f.containers.count("amd64") && f.containers.count("ppc64le"),
             "containers are not keyed by amd64 and ppc64le");
    for (const auto& [arch, by_device] : f.containers) {
        c.expect(by_device.size() == 2, arch + " lacks a cpu or gpu image");
    }
    if (f.containers.count("amd64") && f.containers.at("amd64").count(DeviceKind::gpu)) {
        c.expect(f.containers.at("amd64").at(DeviceKind::gpu) == "carml/tensorflow:1-15-0_amd64-gpu", "amd64 gpu image");
    }
    const auto f2 = parse_framework_manifest(render_framework_manifest(f));
    c.expect(f2.name == f.name && f2.version == f.version && f2.description == f.description &&
                 f2.containers == f.containers,
             "reference framework manifest changed across render and parse");
    c.note = "reference model and framework manifests";
}

// ---------------------------------------------------------------------------
// 8. Tracing

constexpr int kPublishers = 4;
constexpr int kPerPublisher = 2500;

/// Spans for publisher p: one MODEL stage span per publisher under a shared
/// root, MODEL item spans inside the stage, a FRAMEWORK span inside every
/// tenth item. Publisher 0 also owns the root.
std::vector<TraceSpan> publisher_spans(const std::string& trace, int p) {
    std::vector<TraceSpan> out;
    auto make = [&](std::string key, std::string name, SpanLevel level, std::int64_t s, std::int64_t e,
                    std::optional<std::string> parent) {
        TraceSpan sp;
        sp.trace_id = trace;
        sp.span_id = span_id_for(key);
        sp.parent_span_id = std::move(parent);
        sp.name = std::move(name);
        sp.level = level;
        sp.start_ns = s;
        sp.end_ns = e;
        sp.clock_domain = ClockDomain::virtual_time;
        out.push_back(sp);
        return out.back().span_id;
    };
    const std::string root_id = span_id_for("root");
    if (p == 0) make("root", "evaluation", SpanLevel::model, 0, kPublishers * 10'000'000, std::nullopt);
    const std::int64_t base = std::int64_t(p) * 10'000'000;
    const auto stage = make("stage:" + std::to_string(p), "stage", SpanLevel::model, base, base + 9'999'000, root_id);
    std::string item;
    for (int i = 0; int(out.size()) < kPerPublisher; ++i) {
        const std::int64_t s = base + std::int64_t(i) * 3'000;
        if (i % 10 == 9) {
            make("p" + std::to_string(p) + "/layer:" + std::to_string(i), "layer", SpanLevel::framework, s - 2'500,
                 s - 1'000, item);
        } else {
            item = make("p" + std::to_string(p) + "/item:" + std::to_string(i), "item", SpanLevel::model, s,
                        s + 2'800, stage);
        }
    }
    return out;
}

std::size_t total_spans(TraceStore& store) {
    std::size_t n = 0;
    for (const auto& id : store.trace_ids()) n += store.span_count(id);
    return n;
}

void tracing(Check& c) {
    const std::string trace = "acce97ace0000000000000000000beef";
    auto store = std::make_shared<TraceStore>();
    TracerService svc(store, net::Endpoint{"127.0.0.1", 0});
    svc.start();

    std::vector<std::vector<TraceSpan>> all(kPublishers);
    for (int p = 0; p < kPublishers; ++p) all[std::size_t(p)] = publisher_spans(trace, p);
    std::vector<std::thread> threads;
    std::vector<std::size_t> accepted(kPublishers, 0);
    for (int p = 0; p < kPublishers; ++p) {
        threads.emplace_back([&, p] {
            TracerClient client(svc.endpoint());
            auto spans = all[std::size_t(p)];
            std::mt19937_64 rng(std::uint64_t(p) + 1);
            std::shuffle(spans.begin(), spans.end(), rng);
            for (std::size_t i = 0; i < spans.size(); i += 125) {
                std::vector<TraceSpan> batch(spans.begin() + std::ptrdiff_t(i),
                                             spans.begin() + std::ptrdiff_t(std::min(i + 125, spans.size())));
                accepted[std::size_t(p)] += client.publish_checked(batch).accepted;
            }
        });
    }
    for (auto& t : threads) t.join();
    std::size_t accepted_total = 0;
    for (auto a : accepted) accepted_total += a;
    c.expect(accepted_total == 10000, "accepted " + std::to_string(accepted_total) + " of 10000");

    const auto tl = store->assemble(trace);
    c.expect(tl.span_count() == 10000, "timeline holds " + std::to_string(tl.span_count()) + " spans");
    c.expect(tl.roots.size() == 1 && !tl.nodes[tl.roots[0]].synthetic && tl.nodes[tl.roots[0]].span.name == "evaluation",
             "timeline is not a single tree under the evaluation root");

    std::size_t model_spans = 0;
    for (const auto& node : tl.nodes) {
        c.expect(!node.orphan && !node.overflow, "span " + node.span.span_id + " is orphaned or overflows");
        if (node.synthetic || node.span.level != SpanLevel::model || !node.parent) continue;
        ++model_spans;
        const auto& parent = tl.nodes[*node.parent].span;
        c.expect(parent.span_id == node.span.parent_span_id, "span " + node.span.span_id + " attached to wrong parent");
        c.expect(parent.start_ns <= node.span.start_ns && node.span.end_ns <= parent.end_ns,
                 "MODEL span " + node.span.span_id + " leaves its parent interval");
    }

    // Re-publishing everything changes nothing.
    TracerClient again(svc.endpoint());
    std::size_t dup = 0, acc = 0;
    for (const auto& spans : all) {
        const auto r = again.publish_checked(spans);
        dup += r.duplicates;
        acc += r.accepted;
    }
    c.expect(acc == 0 && dup == 10000, "republish accepted " + std::to_string(acc) + ", duplicates " + std::to_string(dup));
    c.expect(store->span_count(trace) == 10000, "republish changed the span count");
    c.expect(store->assemble(trace) == tl, "republish changed the timeline");
    svc.stop();

    // trace_level none: an end-to-end evaluation publishes no spans at all.
    TempDir dir;
    DevStackOptions o;
    o.evaldb_dir = dir.path / "db";
    DevStack stack(o);
    stack.start();
    const std::size_t before = total_spans(stack.traces());
    EvaluationSubmission s;
    s.request.model_name = "MLPerf_ResNet50_v1.5";
    s.request.benchmark_scenario.kind = ScenarioKind::batched;
    s.request.benchmark_scenario.batch_size = 4;
    s.request.benchmark_scenario.count = 5;
    s.request.predict_options.trace_level = TraceLevel::none;
    s.request.trace_id = "acce97ace0000000000000000000f00d";
    const auto job = stack.server().wait(stack.server().submit(s), std::chrono::seconds(20));
    c.expect(job && job->state == JobState::completed, "trace_level none evaluation did not complete");
    const std::size_t after = total_spans(stack.traces());
    c.expect(after == before, "trace_level none published " + std::to_string(after - before) + " spans");
    stack.stop();
    c.note = "10000 spans from 4 publishers, " + std::to_string(model_spans) + " MODEL spans contained";
}

// ---------------------------------------------------------------------------
// 9. Pipeline and linear predictor

std::string float_bytes(const std::vector<float>& v) {
    std::string out(v.size() * sizeof(float), '\0');
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

ModelManifest vector_manifest() {
    return parse_model_manifest(
        "name: vec\nversion: 1.0.0\nframework:\n  name: Synth\n  version: '>=1.0'\n"
        "inputs:\n  - type: vector\n    layer_name: x\noutputs:\n  - type: logits\n    layer_name: y\n"
        "model:\n  base_url: file:///tmp/\n  graph_path: w.bin\n");
}

/// Runs requests through a virtual-clock pipeline on the synthetic backend.
std::vector<FeaturesResponse> run_pipeline(const std::map<std::string, std::string>& predictor_opts,
                                           PipelineOptions po, const std::vector<UserInput>& reqs) {
    auto sink = std::make_shared<StoreSink>(std::make_shared<TraceStore>());
    SpanRecorder spans("acce97ace00000000000000000000009", TraceLevel::none, ClockDomain::virtual_time, sink);
    auto predictor = make_predictor(PredictorConfig{"synthetic", "Synth", SemVer{1, 0, 0}, predictor_opts});
    const auto manifest = vector_manifest();
    ExecContext ctx(&spans, ClockDomain::virtual_time, 0, std::nullopt, "load");
    const auto handle = predictor->model_load(manifest, {}, {}, ctx);
    Pipeline p(*predictor, handle, manifest, {}, std::move(po), &spans, std::nullopt);
    std::size_t next = 0;
    std::vector<FeaturesResponse> out;
    p.run([&]() -> std::optional<UserInput> { return next < reqs.size() ? std::optional(reqs[next++]) : std::nullopt; },
          [&](const FeaturesResponse& r) { out.push_back(r); });
    predictor->model_unload(handle);
    return out;
}

void pipeline_checks(Check& c) {
    std::mt19937_64 rng(0xacce9);

    // Order preservation on random request shapes, batch sizes and capacities.
    for (int trial = 0; trial < 50; ++trial) {
        PipelineOptions po;
        po.batch_size = 1 + std::uint32_t(rng() % 5);
        po.channel_capacity = 1 + rng() % 4;
        const std::int64_t source_cost = std::int64_t(rng() % 2'000'000);
        po.stage_cost = [source_cost](std::string_view op, std::uint64_t) { return op == "source" ? source_cost : 0; };
        std::vector<UserInput> reqs(1 + rng() % 30);
        std::int64_t t = 0;
        for (std::size_t i = 0; i < reqs.size(); ++i) {
            reqs[i].sequence = i;
            reqs[i].issue_ns = t;
            t += std::int64_t(rng() % 1'500'000);
            for (std::size_t k = 0, n = 1 + rng() % 7; k < n; ++k) reqs[i].items.push_back(float_bytes({float(i), float(k)}));
        }
        const auto out = run_pipeline({}, po, reqs);
        c.expect(out.size() == reqs.size(), "trial " + std::to_string(trial) + " lost responses");
        for (std::size_t i = 0; i < std::min(out.size(), reqs.size()); ++i) {
            const std::string at = "trial " + std::to_string(trial) + " response " + std::to_string(i);
            c.expect(out[i].sequence == reqs[i].sequence, at + " out of order");
            c.expect(out[i].success && out[i].features.size() == reqs[i].items.size(), at + " wrong item count");
            if (i > 0) c.expect(out[i].end_ns >= out[i - 1].end_ns, at + " completes before its predecessor");
        }
    }

    // Overlap: n single-item requests with source cost s and predict cost p
    // take at most s + n max(s, p) + p, and strictly less than serial n(s + p).
    for (int trial = 0; trial < 40; ++trial) {
        const std::int64_t s = 1 + std::int64_t(rng() % 4'000'000);
        const std::int64_t p = 1 + std::int64_t(rng() % 4'000'000);
        const std::int64_t n = 2 + std::int64_t(rng() % 30);
        PipelineOptions po;
        po.stage_cost = [s](std::string_view op, std::uint64_t) { return op == "source" ? s : 0; };
        const std::map<std::string, std::string> opts{{"synthetic.base_ms", fmt(double(p) / 1e6)},
                                                      {"synthetic.per_item_ms", "0"}};
        const std::int64_t p_ns = SyntheticModel::from_options(opts).latency_ns(1);
        std::vector<UserInput> reqs(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < reqs.size(); ++i) {
            reqs[i].sequence = i;
            reqs[i].items = {float_bytes({1.0f})};
        }
        const auto out = run_pipeline(opts, po, reqs);
        if (out.size() != reqs.size()) {
            c.expect(false, "overlap trial lost responses");
            continue;
        }
        const std::int64_t total = out.back().end_ns;
        const std::string at = "s=" + std::to_string(s) + " p=" + std::to_string(p) + " n=" + std::to_string(n);
        c.expect(total <= s + n * std::max(s, p_ns) + p_ns, at + " total " + std::to_string(total) + " over bound");
        c.expect(total < n * (s + p_ns), at + " no overlap, total " + std::to_string(total));
    }

    // Linear predictor against a triple-loop affine oracle.
    TempDir dir;
    auto linear = make_predictor(PredictorConfig{"linear", "Synth", SemVer{1, 0, 0}, {}});
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    double worst = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 1 + rng() % 6, k = 1 + rng() % 24, m = 1 + rng() % 10;
        Matrix w{std::uint32_t(k), std::uint32_t(m), {}};
        Matrix bias{1, std::uint32_t(m), {}};
        for (std::size_t i = 0; i < k * m; ++i) w.data.push_back(u(rng));
        for (std::size_t i = 0; i < m; ++i) bias.data.push_back(u(rng));
        write_matrix_file(dir.path / "w.bin", w);
        write_matrix_file(dir.path / "b.bin", bias);
        TensorValue x{ElementType::float32, {std::int64_t(n), std::int64_t(k)}, {}};
        for (std::size_t i = 0; i < n * k; ++i) x.data.push_back(u(rng));

        ExecContext ctx(nullptr, ClockDomain::wall, 0, std::nullopt, "linear");
        const auto h = linear->model_load(vector_manifest(), ModelAssets{dir.path / "w.bin", dir.path / "b.bin"}, {}, ctx);
        const auto y = linear->predict(h, x, {}, ctx);
        linear->model_unload(h);
        c.expect(y.data.size() == n * m, "instance " + std::to_string(inst) + " output size");
        if (y.data.size() != n * m) continue;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                double acc = 0;
                for (std::size_t t = 0; t < k; ++t) acc += double(x.data[i * k + t]) * double(w.data[t * m + j]);
                acc += double(bias.data[j]);
                const double rel = std::abs(double(y.data[i * m + j]) - acc) / std::max(std::abs(acc), 1e-6);
                worst = std::max(worst, rel);
                c.expect(rel <= 1e-6, "instance " + std::to_string(inst) + " relative error " + fmt(rel, 4));
            }
        }
    }
    c.note = "90 pipeline trials, 100 linear instances, worst relative error " + fmt(worst, 3);
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "metric oracles", metric_oracles},
        {2, "layer report replay", table3_replay},
        {3, "throughput replay", table2_replay},
        {4, "virtual-clock end to end", virtual_clock_end_to_end},
        {5, "Poisson arrival generator", poisson_generator},
        {6, "registry resolution", registry_resolution},
        {7, "manifest round trip", manifest_round_trip},
        {8, "tracing", tracing},
        {9, "pipeline and linear predictor", pipeline_checks},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check c;
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        std::cout << (c.ok() ? "PASS" : "FAIL") << "  " << cr.id << ". " << cr.name << " (" << c.checks() << " checks";
        if (!c.note.empty()) std::cout << "; " << c.note;
        std::cout << ")" << std::endl;
        if (!c.ok()) {
            ++failed;
            for (const auto& f : c.failures()) std::cout << "      " << f << "\n";
            if (c.failed() > c.failures().size()) {
                std::cout << "      ... " << c.failed() - c.failures().size() << " more\n";
            }
        }
    }
    std::cout << (failed ? "FAILED: " + std::to_string(failed) + " of 9 criteria" : std::string("all 9 criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
