// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/tracer.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "evalbench/error.hpp"

namespace evalbench {

std::string_view to_string(ClockDomain d) noexcept { return d == ClockDomain::wall ? "wall" : "virtual"; }

std::optional<ClockDomain> clock_domain_from(std::string_view s) noexcept {
    if (s == "wall") return ClockDomain::wall;
    if (s == "virtual") return ClockDomain::virtual_time;
    return std::nullopt;
}

void to_json(Json& j, const TraceSpan& v) {
    j = Json{{"trace_id", v.trace_id},
             {"span_id", v.span_id},
             {"name", v.name},
             {"level", to_string(v.level)},
             {"start_ns", v.start_ns},
             {"end_ns", v.end_ns},
             {"clock_domain", to_string(v.clock_domain)},
             {"attributes", v.attributes}};
    if (v.parent_span_id) j["parent_span_id"] = *v.parent_span_id;
}

void from_json(const Json& j, TraceSpan& v) {
    try {
        v.trace_id = j.at("trace_id").get<std::string>();
        v.span_id = j.at("span_id").get<std::string>();
        v.parent_span_id.reset();
        if (j.contains("parent_span_id") && !j["parent_span_id"].is_null()) {
            v.parent_span_id = j["parent_span_id"].get<std::string>();
        }
        v.name = j.at("name").get<std::string>();
        auto level = span_level_from(j.at("level").get<std::string>());
        if (!level) throw Error(Errc::malformed_span, "unknown span level");
        v.level = *level;
        v.start_ns = j.at("start_ns").get<std::int64_t>();
        v.end_ns = j.at("end_ns").get<std::int64_t>();
        auto domain = clock_domain_from(j.value("clock_domain", std::string("wall")));
        if (!domain) throw Error(Errc::malformed_span, "unknown clock domain");
        v.clock_domain = *domain;
        v.attributes = j.value("attributes", std::map<std::string, std::string>{});
    } catch (const Json::exception& e) {
        throw Error(Errc::malformed_span, e.what());
    }
}

namespace {

bool is_hex_of_length(std::string_view s, std::size_t n) {
    return s.size() == n && std::all_of(s.begin(), s.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

bool span_less(const TraceSpan& a, const TraceSpan& b) {
    return std::tie(a.start_ns, a.span_id) < std::tie(b.start_ns, b.span_id);
}

constexpr std::string_view kUnparented = "unparented";

} // namespace

void validate_span(const TraceSpan& s) {
    if (!is_hex_of_length(s.trace_id, 32)) throw Error(Errc::malformed_span, "trace_id must be 32 hex digits");
    if (!is_hex_of_length(s.span_id, 16)) throw Error(Errc::malformed_span, "span_id must be 16 hex digits");
    if (s.parent_span_id && *s.parent_span_id == s.span_id) {
        throw Error(Errc::malformed_span, "span " + s.span_id + " is its own parent");
    }
    if (s.end_ns < s.start_ns) throw Error(Errc::malformed_span, "span " + s.span_id + " ends before it starts");
}

std::string span_id_for(std::string_view key) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return hex64(h);
}

std::string new_trace_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}() ^ (std::uint64_t(std::random_device{}()) << 32)};
    return hex64(rng()) + hex64(rng());
}

std::size_t Timeline::span_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TimelineNode& n) { return !n.synthetic; }));
}

const TimelineNode* Timeline::find(std::string_view span_id) const {
    for (const auto& n : nodes) {
        if (n.span.span_id == span_id) return &n;
    }
    return nullptr;
}

namespace {

Json node_to_json(const Timeline& t, std::size_t i) {
    const auto& n = t.nodes[i];
    Json j = n.span;
    j["overflow"] = n.overflow;
    j["orphan"] = n.orphan;
    j["synthetic"] = n.synthetic;
    Json children = Json::array();
    for (auto c : n.children) children.push_back(node_to_json(t, c));
    j["children"] = std::move(children);
    return j;
}

} // namespace

Json timeline_to_json(const Timeline& t) {
    Json roots = Json::array();
    for (auto r : t.roots) roots.push_back(node_to_json(t, r));
    return Json{{"trace_id", t.trace_id},
                {"clock_domain", to_string(t.clock_domain)},
                {"start_ns", t.start_ns},
                {"end_ns", t.end_ns},
                {"total_duration_ns", t.total_duration_ns()},
                {"span_count", t.span_count()},
                {"roots", std::move(roots)}};
}

Timeline assemble_spans(const std::string& trace_id, std::vector<TraceSpan> spans) {
    Timeline t;
    t.trace_id = trace_id;
    if (spans.empty()) return t;
    t.clock_domain = spans.front().clock_domain;
    for (const auto& s : spans) {
        if (s.trace_id != trace_id) throw Error(Errc::malformed_span, "span " + s.span_id + " belongs to another trace");
        if (s.clock_domain != t.clock_domain) throw Error(Errc::malformed_span, "trace mixes clock domains");
    }
    std::sort(spans.begin(), spans.end(), span_less);
    {
        std::set<std::string> seen;
        std::erase_if(spans, [&](const TraceSpan& s) { return !seen.insert(s.span_id).second; });
    }

    const std::size_t n = spans.size();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(spans[i].span_id, i);

    std::vector<std::optional<std::size_t>> parent(n);
    std::vector<bool> orphan(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (!spans[i].parent_span_id) continue;
        auto it = index.find(*spans[i].parent_span_id);
        if (it == index.end() || it->second == i) orphan[i] = true;
        else parent[i] = it->second;
    }

    // Walk down from true roots; anything unreachable sits on a parent cycle.
    std::vector<std::vector<std::size_t>> kids(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (parent[i]) kids[*parent[i]].push_back(i);
    }
    std::vector<bool> visited(n, false);
    auto mark = [&](std::size_t from) {
        std::vector<std::size_t> stack{from};
        while (!stack.empty()) {
            auto k = stack.back();
            stack.pop_back();
            if (visited[k]) continue;
            visited[k] = true;
            for (auto c : kids[k]) stack.push_back(c);
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (!parent[i]) mark(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (visited[i]) continue;
        auto& siblings = kids[*parent[i]];
        siblings.erase(std::find(siblings.begin(), siblings.end(), i));
        parent[i].reset();
        orphan[i] = true;
        mark(i);
    }

    // Final node order including the synthetic root, if one is needed.
    std::vector<TimelineNode> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i].span = std::move(spans[i]);
        nodes[i].orphan = orphan[i];
    }
    std::vector<std::optional<std::size_t>> final_parent = parent;
    if (std::find(orphan.begin(), orphan.end(), true) != orphan.end()) {
        TimelineNode root;
        root.synthetic = true;
        root.span.trace_id = trace_id;
        root.span.span_id = std::string(kUnparented);
        root.span.name = std::string(kUnparented);
        root.span.clock_domain = t.clock_domain;
        bool first = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (!orphan[i]) continue;
            const auto& s = nodes[i].span;
            root.span.start_ns = first ? s.start_ns : std::min(root.span.start_ns, s.start_ns);
            root.span.end_ns = first ? s.end_ns : std::max(root.span.end_ns, s.end_ns);
            first = false;
        }
        nodes.push_back(std::move(root));
        final_parent.push_back(std::nullopt);
        for (std::size_t i = 0; i < n; ++i) {
            if (orphan[i]) final_parent[i] = n;
        }
    }

    std::vector<std::size_t> order(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return span_less(nodes[a].span, nodes[b].span); });
    std::vector<std::size_t> new_index(nodes.size());
    for (std::size_t k = 0; k < order.size(); ++k) new_index[order[k]] = k;

    t.nodes.resize(nodes.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        t.nodes[k] = std::move(nodes[order[k]]);
        if (final_parent[order[k]]) t.nodes[k].parent = new_index[*final_parent[order[k]]];
    }
    const auto eps = containment_epsilon_ns(t.clock_domain);
    t.start_ns = t.nodes.front().span.start_ns;
    t.end_ns = t.nodes.front().span.end_ns;
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        auto& node = t.nodes[k];
        t.start_ns = std::min(t.start_ns, node.span.start_ns);
        t.end_ns = std::max(t.end_ns, node.span.end_ns);
        if (!node.parent) {
            t.roots.push_back(k);
            continue;
        }
        auto& p = t.nodes[*node.parent];
        p.children.push_back(k);
        if (!p.synthetic) {
            node.overflow = node.span.start_ns < p.span.start_ns - eps || node.span.end_ns > p.span.end_ns + eps;
        }
    }
    return t;
}

Timeline filter_level(const Timeline& t, TraceLevel level) {
    std::vector<TraceSpan> kept;
    for (const auto& node : t.nodes) {
        if (node.synthetic || !captures(level, node.span.level)) continue;
        TraceSpan s = node.span;
        if (node.parent) {
            std::optional<std::size_t> p = node.parent;
            while (p && !t.nodes[*p].synthetic && !captures(level, t.nodes[*p].span.level)) p = t.nodes[*p].parent;
            if (!p) s.parent_span_id.reset();
            else if (!t.nodes[*p].synthetic) s.parent_span_id = t.nodes[*p].span.span_id;
        }
        kept.push_back(std::move(s));
    }
    Timeline out = assemble_spans(t.trace_id, std::move(kept));
    out.clock_domain = t.clock_domain;
    return out;
}

Correlation correlate(const Timeline& t, SpanLevel parent_level, SpanLevel child_level) {
    Correlation out;
    for (const auto& n : t.nodes) {
        if (!n.synthetic && n.span.level == parent_level) out.groups.push_back(CorrelatedGroup{n.span, {}});
    }
    for (const auto& n : t.nodes) {
        if (n.synthetic || n.span.level != child_level) continue;
        const auto& c = n.span;
        std::optional<std::size_t> best;
        std::int64_t best_overlap = 0;
        for (std::size_t g = 0; g < out.groups.size(); ++g) {
            const auto& p = out.groups[g].parent;
            if (&p == &c || p.span_id == c.span_id) continue;
            std::int64_t overlap = std::min(p.end_ns, c.end_ns) - std::max(p.start_ns, c.start_ns);
            bool instant_inside = c.start_ns == c.end_ns && p.start_ns <= c.start_ns && c.start_ns <= p.end_ns;
            if (overlap > best_overlap || (!best && instant_inside)) {
                best = g;
                best_overlap = std::max<std::int64_t>(overlap, 0);
            }
        }
        if (best) out.groups[*best].children.push_back(c);
        else out.unassigned.push_back(c);
    }
    return out;
}

std::optional<TraceSpan> dominant(const std::vector<TraceSpan>& spans) {
    std::optional<TraceSpan> best;
    for (const auto& s : spans) {
        if (!best || s.duration_ns() > best->duration_ns() ||
            (s.duration_ns() == best->duration_ns() && s.name < best->name)) {
            best = s;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// TraceStore

TraceStore::TraceStore(std::optional<std::filesystem::path> snapshot) : snapshot_path_(std::move(snapshot)) {
    if (!snapshot_path_) return;
    if (snapshot_path_->has_parent_path()) std::filesystem::create_directories(snapshot_path_->parent_path());
    std::ifstream in(*snapshot_path_);
    std::string line;
    std::vector<TraceSpan> loaded;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            loaded.push_back(Json::parse(line).get<TraceSpan>());
        } catch (const std::exception&) {
            // A torn final line from a crash is skipped.
        }
    }
    publish_locked(loaded, false);
    snapshot_.open(*snapshot_path_, std::ios::app);
}

PublishResult TraceStore::publish(const std::vector<TraceSpan>& spans) {
    std::lock_guard lock(mu_);
    return publish_locked(spans, true);
}

PublishResult TraceStore::publish_locked(const std::vector<TraceSpan>& spans, bool persist) {
    PublishResult r;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto& s = spans[i];
        try {
            validate_span(s);
        } catch (const Error& e) {
            r.rejected.emplace_back(i, e.what());
            continue;
        }
        auto [it, fresh] = traces_.try_emplace(s.trace_id);
        auto& data = it->second;
        if (fresh) data.domain = s.clock_domain;
        else if (data.domain != s.clock_domain) {
            r.rejected.emplace_back(i, "trace " + s.trace_id + " already uses the " +
                                           std::string(to_string(data.domain)) + " clock");
            continue;
        }
        if (!data.spans.emplace(s.span_id, s).second) {
            ++r.duplicates;
            continue;
        }
        ++r.accepted;
        if (persist && snapshot_.is_open()) snapshot_ << Json(s).dump() << '\n';
    }
    if (persist && snapshot_.is_open()) snapshot_.flush();
    return r;
}

std::vector<TraceSpan> TraceStore::spans(const std::string& trace_id) const {
    std::lock_guard lock(mu_);
    auto it = traces_.find(trace_id);
    if (it == traces_.end()) throw Error(Errc::unknown_trace, "no spans for trace " + trace_id);
    std::vector<TraceSpan> out;
    out.reserve(it->second.spans.size());
    for (const auto& [id, s] : it->second.spans) out.push_back(s);
    return out;
}

Timeline TraceStore::assemble(const std::string& trace_id) const { return assemble_spans(trace_id, spans(trace_id)); }

std::size_t TraceStore::span_count(const std::string& trace_id) const {
    std::lock_guard lock(mu_);
    auto it = traces_.find(trace_id);
    return it == traces_.end() ? 0 : it->second.spans.size();
}

std::vector<std::string> TraceStore::trace_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, data] : traces_) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// AsyncPublisher

AsyncPublisher::AsyncPublisher(std::shared_ptr<SpanSink> downstream)
    : downstream_(std::move(downstream)), worker_([this] { run(); }) {}

AsyncPublisher::~AsyncPublisher() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void AsyncPublisher::publish(std::vector<TraceSpan> spans) {
    if (spans.empty()) return;
    {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(spans));
    }
    cv_.notify_all();
}

void AsyncPublisher::flush() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

std::size_t AsyncPublisher::failures() const {
    std::lock_guard lock(mu_);
    return failures_;
}

void AsyncPublisher::run() {
    std::unique_lock lock(mu_);
    for (;;) {
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        auto batch = std::move(queue_.front());
        queue_.pop_front();
        busy_ = true;
        lock.unlock();
        bool ok = true;
        try {
            downstream_->publish(std::move(batch));
        } catch (const std::exception&) {
            ok = false;
        }
        lock.lock();
        if (!ok) ++failures_;
        busy_ = false;
        cv_.notify_all();
    }
}

// ---------------------------------------------------------------------------
// SpanRecorder

SpanRecorder::SpanRecorder(std::string trace_id, TraceLevel level, ClockDomain domain, std::shared_ptr<SpanSink> sink)
    : trace_id_(std::move(trace_id)), level_(level), domain_(domain), sink_(std::move(sink)) {}

bool SpanRecorder::enabled(SpanLevel level) const noexcept {
    return sink_ && !trace_id_.empty() && captures(level_, level);
}

std::string SpanRecorder::record(std::string_view key, std::string name, SpanLevel level, std::int64_t start_ns,
                                 std::int64_t end_ns, std::optional<std::string> parent,
                                 std::map<std::string, std::string> attributes) {
    std::string id = span_id_for(key);
    if (!enabled(level)) return id;
    TraceSpan s{trace_id_, id, std::move(parent), std::move(name), level, start_ns, end_ns, domain_,
                std::move(attributes)};
    std::vector<TraceSpan> ready;
    {
        std::lock_guard lock(mu_);
        buffer_.push_back(std::move(s));
        ++recorded_;
        if (buffer_.size() >= 512) ready.swap(buffer_);
    }
    if (!ready.empty() && sink_) sink_->publish(std::move(ready));
    return id;
}

void SpanRecorder::flush() {
    std::vector<TraceSpan> ready;
    {
        std::lock_guard lock(mu_);
        ready.swap(buffer_);
    }
    if (!sink_) return;
    if (!ready.empty()) sink_->publish(std::move(ready));
    sink_->flush();
}

std::size_t SpanRecorder::recorded() const {
    std::lock_guard lock(mu_);
    return recorded_;
}

// ---------------------------------------------------------------------------
// Service and client

namespace {

Json publish_result_json(const PublishResult& r) {
    Json rejected = Json::array();
    for (const auto& [i, why] : r.rejected) rejected.push_back(Json{{"index", i}, {"message", why}});
    return Json{{"accepted", r.accepted}, {"duplicates", r.duplicates}, {"rejected", rejected}};
}

Json correlation_json(const Correlation& c) {
    Json groups = Json::array();
    for (const auto& g : c.groups) {
        Json j{{"parent", g.parent}, {"children", g.children}};
        if (auto d = dominant(g.children)) j["dominant"] = d->name;
        groups.push_back(std::move(j));
    }
    return Json{{"groups", groups}, {"unassigned", c.unassigned}};
}

SpanLevel span_level_param(const Json& j, const char* key) {
    auto level = span_level_from(j.at(key).get<std::string>());
    if (!level) throw Error(Errc::validation, "unknown span level", key);
    return *level;
}

} // namespace

TracerService::TracerService(std::shared_ptr<TraceStore> store, net::Endpoint bind)
    : store_(std::move(store)), server_(std::move(bind)) {
    auto st = store_;
    server_.handle("publish", [st](net::CallContext& c) {
        std::vector<TraceSpan> spans;
        PublishResult pre;
        const auto& arr = c.params().at("spans");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            try {
                spans.push_back(arr[i].get<TraceSpan>());
            } catch (const Error& e) {
                pre.rejected.emplace_back(i, e.what());
            }
        }
        auto r = st->publish(spans);
        r.rejected.insert(r.rejected.end(), pre.rejected.begin(), pre.rejected.end());
        return publish_result_json(r);
    });
    server_.handle("spans", [st](net::CallContext& c) {
        return Json{{"spans", st->spans(c.params().at("trace_id").get<std::string>())}};
    });
    server_.handle("timeline", [st](net::CallContext& c) {
        auto t = st->assemble(c.params().at("trace_id").get<std::string>());
        if (c.params().contains("level")) {
            auto level = trace_level_from(c.params()["level"].get<std::string>());
            if (!level) throw Error(Errc::validation, "unknown trace level", "level");
            t = filter_level(t, *level);
        }
        return timeline_to_json(t);
    });
    server_.handle("correlate", [st](net::CallContext& c) {
        auto t = st->assemble(c.params().at("trace_id").get<std::string>());
        return correlation_json(
            correlate(t, span_level_param(c.params(), "parent_level"), span_level_param(c.params(), "child_level")));
    });
}

TracerClient::TracerClient(net::Endpoint ep) : endpoint_(std::move(ep)) {}

Json TracerClient::call(const std::string& method, const Json& params) {
    std::shared_ptr<net::RpcClient> client;
    {
        std::lock_guard lock(mu_);
        if (!client_ || !client_->connected()) client_ = net::RpcClient::connect(endpoint_);
        client = client_;
    }
    return client->call(method, params);
}

void TracerClient::publish(std::vector<TraceSpan> spans) { publish_checked(spans); }

PublishResult TracerClient::publish_checked(const std::vector<TraceSpan>& spans) {
    const auto reply = call("publish", Json{{"spans", spans}});
    PublishResult r;
    r.accepted = reply.at("accepted").get<std::size_t>();
    r.duplicates = reply.at("duplicates").get<std::size_t>();
    for (const auto& e : reply.at("rejected")) {
        r.rejected.emplace_back(e.at("index").get<std::size_t>(), e.at("message").get<std::string>());
    }
    return r;
}

std::vector<TraceSpan> TracerClient::spans(const std::string& trace_id) {
    return call("spans", Json{{"trace_id", trace_id}}).at("spans").get<std::vector<TraceSpan>>();
}

Json TracerClient::timeline(const std::string& trace_id, std::optional<TraceLevel> level) {
    Json params{{"trace_id", trace_id}};
    if (level) params["level"] = to_string(*level);
    return call("timeline", params);
}

} // namespace evalbench
