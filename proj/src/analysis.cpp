// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "evalbench/error.hpp"

namespace evalbench {

double trimmed_mean(std::vector<double> xs, double fraction) {
    if (xs.empty()) throw Error(Errc::empty_input, "trimmed mean of an empty list");
    if (!(fraction >= 0 && fraction < 0.5)) throw Error(Errc::validation, "trim fraction must be in [0, 0.5)");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    double sum = 0;
    for (std::size_t i = k; i < n - k; ++i) sum += xs[i];
    return sum / static_cast<double>(n - 2 * k);
}

double percentile(std::vector<double> xs, double p) {
    if (xs.empty()) throw Error(Errc::empty_input, "percentile of an empty list");
    if (!(p > 0 && p <= 100)) throw Error(Errc::validation, "percentile must be in (0, 100]");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, xs.size());
    return xs[rank - 1];
}

LatencySummary summarize_latency(const std::vector<double>& latencies_ms) {
    if (latencies_ms.empty()) throw Error(Errc::empty_input, "no latencies to summarize");
    LatencySummary s;
    s.count = latencies_ms.size();
    s.trimmed_mean_ms = trimmed_mean(latencies_ms);
    s.p90_ms = percentile(latencies_ms, 90);
    const auto [lo, hi] = std::minmax_element(latencies_ms.begin(), latencies_ms.end());
    s.min_ms = *lo;
    s.max_ms = *hi;
    double sum = 0;
    for (double x : latencies_ms) sum += x;
    s.mean_ms = sum / static_cast<double>(s.count);
    return s;
}

std::vector<double> measured_latencies_ms(const std::vector<RequestMeasurement>& ms) {
    std::vector<double> out;
    for (const auto& m : ms) {
        if (!m.warmup && m.success) out.push_back(static_cast<double>(m.latency_ns) / 1e6);
    }
    return out;
}

ThroughputSample throughput_sample(std::uint32_t batch_size, const std::vector<RequestMeasurement>& ms) {
    ThroughputSample s{batch_size, 0, 0};
    std::optional<std::int64_t> first, last;
    for (const auto& m : ms) {
        if (m.warmup) continue;
        first = std::min(first.value_or(m.issue_ns), m.issue_ns);
        last = std::max(last.value_or(m.issue_ns + m.latency_ns), m.issue_ns + m.latency_ns);
        if (m.success) s.items += m.batch_size;
    }
    if (!first) throw Error(Errc::no_data, "the run has no measured requests");
    s.busy_ns = *last - *first;
    return s;
}

double throughput_of(const ThroughputSample& s) {
    if (s.busy_ns <= 0) return 0;
    return static_cast<double>(s.items) * 1e9 / static_cast<double>(s.busy_ns);
}

std::optional<double> ThroughputCurve::at(std::uint32_t batch_size) const {
    for (const auto& p : points) {
        if (p.batch_size == batch_size) return p.throughput;
    }
    return std::nullopt;
}

ThroughputCurve throughput_curve(const std::vector<ThroughputSample>& samples) {
    if (samples.empty()) throw Error(Errc::no_data, "no throughput samples");
    std::map<std::uint32_t, ThroughputSample> pooled;
    for (const auto& s : samples) {
        auto& p = pooled[s.batch_size];
        p.batch_size = s.batch_size;
        p.items += s.items;
        p.busy_ns += s.busy_ns;
    }
    ThroughputCurve c;
    for (const auto& [b, s] : pooled) {
        const double t = throughput_of(s);
        c.points.push_back({b, t});
        // Ascending iteration with a strict comparison keeps the smaller batch on ties.
        if (c.optimal_batch_size == 0 || t > c.max_throughput) {
            c.max_throughput = t;
            c.optimal_batch_size = b;
        }
    }
    return c;
}

SpeedupMatrix speedup_matrix(const std::vector<std::pair<std::string, ThroughputCurve>>& curves) {
    SpeedupMatrix m;
    std::set<std::uint32_t> batches;
    for (const auto& [name, curve] : curves) {
        const auto base = curve.at(1);
        if (!base || !(*base > 0)) {
            throw Error(Errc::missing_baseline, "model " + name + " has no batch size 1 throughput");
        }
        m.models.push_back(name);
        for (const auto& p : curve.points) batches.insert(p.batch_size);
    }
    m.batch_sizes.assign(batches.begin(), batches.end());
    for (auto b : m.batch_sizes) {
        std::vector<std::optional<double>> row;
        for (const auto& [name, curve] : curves) {
            if (auto t = curve.at(b)) row.push_back(b == 1 ? 1.0 : *t / *curve.at(1));
            else row.push_back(std::nullopt);
        }
        m.cells.push_back(std::move(row));
    }
    return m;
}

namespace {

std::string attribute_or(const TraceSpan& s, const std::string& key, const std::string& fallback) {
    auto it = s.attributes.find(key);
    return it == s.attributes.end() ? fallback : it->second;
}

double ns_to_ms(std::int64_t ns) { return static_cast<double>(ns) / 1e6; }

} // namespace

std::vector<LayerReportRow> layer_report(const Timeline& timeline, std::size_t top_k) {
    const auto corr = correlate(timeline, SpanLevel::framework, SpanLevel::system);
    std::vector<std::pair<std::int64_t, LayerReportRow>> rows;  // (duration, row)
    std::int64_t ordinal = 0;
    for (const auto& g : corr.groups) {
        const auto& s = g.parent;
        LayerReportRow r;
        const auto index = attribute_or(s, "layer_index", "");
        try {
            r.layer_index = index.empty() ? ordinal : std::stoll(index);
        } catch (const std::logic_error&) {
            r.layer_index = ordinal;
        }
        ++ordinal;
        r.layer_name = attribute_or(s, "layer_name", s.name);
        r.layer_type = attribute_or(s, "layer_type", "");
        r.layer_shape = attribute_or(s, "layer_shape", "");
        r.latency_ms = ns_to_ms(s.duration_ns());
        for (const auto& k : g.children) r.kernels.push_back({k.name, ns_to_ms(k.duration_ns())});
        if (auto d = dominant(g.children)) r.dominant_kernel = d->name;
        rows.emplace_back(s.duration_ns(), std::move(r));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second.layer_index < b.second.layer_index;
    });
    std::vector<LayerReportRow> out;
    for (std::size_t i = 0; i < rows.size() && i < top_k; ++i) out.push_back(std::move(rows[i].second));
    return out;
}

Json to_json_value(const LatencySummary& s) {
    return Json{{"trimmed_mean_ms", s.trimmed_mean_ms}, {"p90_ms", s.p90_ms}, {"min_ms", s.min_ms},
                {"max_ms", s.max_ms},                   {"mean_ms", s.mean_ms}, {"count", s.count}};
}

Json to_json_value(const ThroughputCurve& c) {
    Json points = Json::array();
    for (const auto& p : c.points) points.push_back(Json{{"batch_size", p.batch_size}, {"throughput", p.throughput}});
    return Json{{"points", points}, {"max_throughput", c.max_throughput}, {"optimal_batch_size", c.optimal_batch_size}};
}

Json to_json_value(const SpeedupMatrix& m) {
    Json cells = Json::array();
    for (const auto& row : m.cells) {
        Json r = Json::array();
        for (const auto& c : row) r.push_back(c ? Json(*c) : Json(nullptr));
        cells.push_back(std::move(r));
    }
    return Json{{"batch_sizes", m.batch_sizes}, {"models", m.models}, {"cells", cells}};
}

Json to_json_value(const std::vector<LayerReportRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        Json kernels = Json::array();
        for (const auto& k : r.kernels) kernels.push_back(Json{{"name", k.name}, {"latency_ms", k.latency_ms}});
        Json row{{"layer_index", r.layer_index}, {"layer_name", r.layer_name},
                 {"layer_type", r.layer_type},   {"latency_ms", r.latency_ms},
                 {"dominant_kernel", r.dominant_kernel}, {"kernels", kernels}};
        if (!r.layer_shape.empty()) row["layer_shape"] = r.layer_shape;
        out.push_back(std::move(row));
    }
    return out;
}

namespace {

std::optional<LatencySummary> maybe_summary(const std::vector<double>& xs) {
    if (xs.empty()) return std::nullopt;
    return summarize_latency(xs);
}

Json optional_json(const std::optional<LatencySummary>& s) { return s ? to_json_value(*s) : Json(nullptr); }

std::uint32_t batch_of(const EvaluationResult& r) {
    const auto& sc = r.request.benchmark_scenario;
    return sc.kind == ScenarioKind::batched && sc.batch_size ? *sc.batch_size : 1;
}

std::string group_key(const EvaluationResult& r) {
    return r.model_name + "@" + r.model_version.to_string() + " / " + r.framework_name + "@" +
           r.framework_version.to_string() + " / " + r.agent.architecture;
}

} // namespace

Json summarize_evaluation(const EvaluationResult& r) {
    std::size_t measured = 0, warmups = 0, failed = 0;
    std::vector<double> service;
    for (const auto& m : r.measurements) {
        if (m.warmup) {
            ++warmups;
            continue;
        }
        ++measured;
        if (!m.success) ++failed;
        else service.push_back(static_cast<double>(m.service_ns) / 1e6);
    }
    Json j{{"model", Json{{"name", r.model_name}, {"version", r.model_version.to_string()}}},
           {"framework", Json{{"name", r.framework_name}, {"version", r.framework_version.to_string()}}},
           {"architecture", r.agent.architecture},
           {"scenario", r.request.benchmark_scenario},
           {"trace_level", std::string(to_string(r.request.predict_options.trace_level))},
           {"virtual_clock", r.virtual_clock},
           {"success", r.success},
           {"requests", measured},
           {"warmup_requests", warmups},
           {"failed_requests", failed},
           {"latency", optional_json(maybe_summary(measured_latencies_ms(r.measurements)))},
           {"service_latency", optional_json(maybe_summary(service))}};
    if (measured > 0) {
        const auto s = throughput_sample(batch_of(r), r.measurements);
        j["items"] = s.items;
        j["busy_ns"] = s.busy_ns;
        j["throughput"] = throughput_of(s);
    } else {
        j["items"] = 0;
        j["busy_ns"] = 0;
        j["throughput"] = nullptr;
    }
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

Report generate_report(const std::vector<EvaluationResult>& input, const ReportOptions& options,
                       const TimelineLookup& timelines) {
    if (input.empty()) throw Error(Errc::no_data, "no evaluations to report on");
    std::vector<const EvaluationResult*> results;
    for (const auto& r : input) results.push_back(&r);
    std::sort(results.begin(), results.end(),
              [](const auto* a, const auto* b) { return a->evaluation_id < b->evaluation_id; });

    Json evaluations = Json::array();
    std::map<std::string, std::vector<const EvaluationResult*>> groups;
    std::map<std::string, Json> environment;
    for (const auto* r : results) {
        Json e = summarize_evaluation(*r);
        e["evaluation_id"] = r->evaluation_id;
        e["group"] = group_key(*r);
        evaluations.push_back(std::move(e));
        groups[group_key(*r)].push_back(r);
        Json agent{{"agent_id", r->agent.agent_id},
                   {"architecture", r->agent.architecture},
                   {"devices", r->agent.devices},
                   {"frameworks", r->agent.frameworks}};
        if (r->agent.interconnect) agent["interconnect"] = *r->agent.interconnect;
        environment.emplace(r->agent.agent_id, std::move(agent));
    }

    Json group_json = Json::array();
    std::vector<std::pair<std::string, ThroughputCurve>> curves;
    Json missing_baseline = Json::array();
    for (const auto& [key, members] : groups) {
        std::vector<double> online, batch_one;
        std::vector<ThroughputSample> samples;
        Json ids = Json::array();
        for (const auto* r : members) {
            ids.push_back(r->evaluation_id);
            if (!r->success) continue;
            const auto lat = measured_latencies_ms(r->measurements);
            if (r->request.benchmark_scenario.kind == ScenarioKind::online) {
                online.insert(online.end(), lat.begin(), lat.end());
                continue;
            }
            if (batch_of(*r) == 1) batch_one.insert(batch_one.end(), lat.begin(), lat.end());
            try {
                samples.push_back(throughput_sample(batch_of(*r), r->measurements));
            } catch (const Error&) {
                // Runs without measured requests add nothing to the curve.
            }
        }
        const auto& lat_source = online.empty() ? batch_one : online;
        Json latency = nullptr;
        if (!lat_source.empty()) {
            LatencySummary s = summarize_latency(lat_source);
            s.trimmed_mean_ms = trimmed_mean(lat_source, options.trim_fraction);
            latency = to_json_value(s);
            latency["source"] = online.empty() ? "batched_b1" : "online";
        }
        Json g{{"key", key},
               {"model", members.front()->model_name},
               {"model_version", members.front()->model_version.to_string()},
               {"framework", members.front()->framework_name},
               {"framework_version", members.front()->framework_version.to_string()},
               {"architecture", members.front()->agent.architecture},
               {"evaluations", ids},
               {"latency", latency},
               {"throughput_curve", nullptr}};
        if (!samples.empty()) {
            auto curve = throughput_curve(samples);
            g["throughput_curve"] = to_json_value(curve);
            if (curve.at(1)) curves.emplace_back(key, std::move(curve));
            else missing_baseline.push_back(key);
        }
        group_json.push_back(std::move(g));
    }

    Json layers = Json::array();
    if (timelines) {
        for (const auto* r : results) {
            if (!r->trace_id || r->request.predict_options.trace_level < TraceLevel::framework) continue;
            auto t = timelines(*r->trace_id);
            if (!t) continue;
            layers.push_back(Json{{"evaluation_id", r->evaluation_id},
                                  {"trace_id", *r->trace_id},
                                  {"rows", to_json_value(layer_report(*t, options.top_layers))}});
        }
    }

    Json env = Json::array();
    for (auto& [id, a] : environment) env.push_back(std::move(a));

    Report out;
    out.json = Json{{"report_version", 1},
                    {"title", options.title},
                    {"trim_fraction", options.trim_fraction},
                    {"percentile_method", "nearest-rank"},
                    {"evaluations", evaluations},
                    {"groups", group_json},
                    {"speedup", curves.empty() ? Json(nullptr) : to_json_value(speedup_matrix(curves))},
                    {"speedup_missing_baseline", missing_baseline},
                    {"layers", layers},
                    {"environment", env}};
    out.html = render_report_html(out.json);
    return out;
}

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fmt(const Json& v, int precision = 3) {
    if (v.is_null()) return "&ndash;";
    if (v.is_number_float()) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(precision);
        s << v.get<double>();
        return s.str();
    }
    if (v.is_string()) return escape(v.get<std::string>());
    return escape(v.dump());
}

/// Cell shade for a speedup value, white at 1x and deepening with the log.
std::string heat(double x, double max) {
    const double f = max > 1 ? std::clamp(std::log(x) / std::log(max), 0.0, 1.0) : 0.0;
    const int g = static_cast<int>(std::lround(255 - 140 * f));
    return "rgb(" + std::to_string(g) + "," + std::to_string(std::min(255, g + 40)) + ",255)";
}

} // namespace

std::string render_report_html(const Json& report) {
    std::ostringstream h;
    const std::string title = report.value("title", std::string("Report"));
    h << "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>" << escape(title)
      << "</title>\n<style>body{font-family:sans-serif;margin:2em;color:#222}"
         "table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #bbb;padding:4px 8px;text-align:right}"
         "th{background:#eee}td.l,th.l{text-align:left}h2{margin-top:2em}</style></head><body>\n";
    h << "<h1>" << escape(title) << "</h1>\n<p>Trimmed mean drops " << fmt(report.at("trim_fraction"), 2)
      << " of the samples at each end; percentiles use the nearest rank.</p>\n";

    h << "<h2>Evaluations</h2>\n<table><tr><th class=\"l\">id</th><th class=\"l\">model</th>"
         "<th class=\"l\">framework</th><th class=\"l\">scenario</th><th>batch</th><th>requests</th>"
         "<th>trimmed mean (ms)</th><th>p90 (ms)</th><th>throughput (items/s)</th></tr>\n";
    for (const auto& e : report.at("evaluations")) {
        const auto& sc = e.at("scenario");
        const auto& lat = e.at("latency");
        h << "<tr><td class=\"l\">" << fmt(e.at("evaluation_id")) << "</td><td class=\"l\">"
          << fmt(e.at("model").at("name")) << " " << fmt(e.at("model").at("version")) << "</td><td class=\"l\">"
          << fmt(e.at("framework").at("name")) << " " << fmt(e.at("framework").at("version"))
          << "</td><td class=\"l\">" << fmt(sc.at("kind")) << "</td><td>"
          << (sc.contains("batch_size") ? fmt(sc.at("batch_size")) : "1") << "</td><td>" << fmt(e.at("requests"))
          << "</td><td>" << (lat.is_null() ? fmt(lat) : fmt(lat.at("trimmed_mean_ms"))) << "</td><td>"
          << (lat.is_null() ? fmt(lat) : fmt(lat.at("p90_ms"))) << "</td><td>" << fmt(e.at("throughput"), 1)
          << "</td></tr>\n";
    }
    h << "</table>\n";

    h << "<h2>Models</h2>\n";
    for (const auto& g : report.at("groups")) {
        h << "<h3>" << fmt(g.at("key")) << "</h3>\n";
        if (const auto& lat = g.at("latency"); !lat.is_null()) {
            h << "<p>Latency over " << fmt(lat.at("count")) << " requests: trimmed mean "
              << fmt(lat.at("trimmed_mean_ms")) << " ms, p90 " << fmt(lat.at("p90_ms")) << " ms.</p>\n";
        }
        if (const auto& c = g.at("throughput_curve"); !c.is_null()) {
            h << "<table><tr><th>batch size</th><th>throughput (items/s)</th></tr>\n";
            for (const auto& p : c.at("points")) {
                h << "<tr><td>" << fmt(p.at("batch_size")) << "</td><td>" << fmt(p.at("throughput"), 1)
                  << "</td></tr>\n";
            }
            h << "</table>\n<p>Maximum " << fmt(c.at("max_throughput"), 1) << " items/s at batch size "
              << fmt(c.at("optimal_batch_size")) << ".</p>\n";
        }
    }

    if (const auto& m = report.at("speedup"); !m.is_null()) {
        double max = 1;
        for (const auto& row : m.at("cells")) {
            for (const auto& c : row) {
                if (!c.is_null()) max = std::max(max, c.get<double>());
            }
        }
        h << "<h2>Speedup over batch size 1</h2>\n<table><tr><th>batch</th>";
        for (const auto& name : m.at("models")) h << "<th class=\"l\">" << fmt(name) << "</th>";
        h << "</tr>\n";
        for (std::size_t r = 0; r < m.at("batch_sizes").size(); ++r) {
            h << "<tr><th>" << fmt(m.at("batch_sizes")[r]) << "</th>";
            for (const auto& c : m.at("cells")[r]) {
                if (c.is_null()) h << "<td>" << fmt(c) << "</td>";
                else h << "<td style=\"background:" << heat(c.get<double>(), max) << "\">" << fmt(c, 2) << "</td>";
            }
            h << "</tr>\n";
        }
        h << "</table>\n";
    }

    for (const auto& l : report.at("layers")) {
        h << "<h2>Slowest layers, evaluation " << fmt(l.at("evaluation_id")) << "</h2>\n"
          << "<table><tr><th>index</th><th class=\"l\">name</th><th class=\"l\">type</th><th class=\"l\">shape</th>"
             "<th class=\"l\">dominant kernel</th><th>latency (ms)</th><th>kernels</th></tr>\n";
        for (const auto& r : l.at("rows")) {
            h << "<tr><td>" << fmt(r.at("layer_index")) << "</td><td class=\"l\">" << fmt(r.at("layer_name"))
              << "</td><td class=\"l\">" << fmt(r.at("layer_type")) << "</td><td class=\"l\">"
              << (r.contains("layer_shape") ? fmt(r.at("layer_shape")) : "") << "</td><td class=\"l\">"
              << fmt(r.at("dominant_kernel")) << "</td><td>" << fmt(r.at("latency_ms"), 2) << "</td><td>"
              << r.at("kernels").size() << "</td></tr>\n";
        }
        h << "</table>\n";
    }

    h << "<h2>Systems</h2>\n<table><tr><th class=\"l\">agent</th><th class=\"l\">architecture</th>"
         "<th class=\"l\">interconnect</th><th>devices</th></tr>\n";
    for (const auto& a : report.at("environment")) {
        h << "<tr><td class=\"l\">" << fmt(a.at("agent_id")) << "</td><td class=\"l\">" << fmt(a.at("architecture"))
          << "</td><td class=\"l\">" << (a.contains("interconnect") ? fmt(a.at("interconnect")) : "")
          << "</td><td>" << a.at("devices").size() << "</td></tr>\n";
    }
    h << "</table>\n</body></html>\n";
    return h.str();
}

} // namespace evalbench
