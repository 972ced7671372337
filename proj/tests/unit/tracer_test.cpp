// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <thread>

#include "evalbench/tracer.hpp"
#include "test_util.hpp"

namespace evalbench {
namespace {

const std::string kTrace = "0123456789abcdef0123456789abcdef";

TraceSpan span(const std::string& key, std::int64_t start, std::int64_t end, std::optional<std::string> parent_key = {},
               SpanLevel level = SpanLevel::model, ClockDomain domain = ClockDomain::wall) {
    TraceSpan s;
    s.trace_id = kTrace;
    s.span_id = span_id_for(key);
    if (parent_key) s.parent_span_id = span_id_for(*parent_key);
    s.name = key;
    s.level = level;
    s.start_ns = start;
    s.end_ns = end;
    s.clock_domain = domain;
    return s;
}

TEST(SpanIds, DeterministicHex) {
    EXPECT_EQ(span_id_for("root"), span_id_for("root"));
    EXPECT_NE(span_id_for("root"), span_id_for("root/"));
    EXPECT_EQ(span_id_for("").size(), 16u);
    // FNV-1a 64 of the empty string is the offset basis.
    EXPECT_EQ(span_id_for(""), "cbf29ce484222325");
    // Published FNV-1a 64 test vector for "a".
    EXPECT_EQ(span_id_for("a"), "af63dc4c8601ec8c");
    auto t = new_trace_id();
    EXPECT_EQ(t.size(), 32u);
    EXPECT_NE(t, new_trace_id());
}

TEST(Assemble, RootWithTwoChildren) {
    auto t = assemble_spans(kTrace, {span("root", 0, 100), span("A", 10, 40, "root"), span("B", 40, 90, "root")});
    ASSERT_EQ(t.roots.size(), 1u);
    const auto& root = t.nodes[t.roots[0]];
    EXPECT_EQ(root.span.name, "root");
    ASSERT_EQ(root.children.size(), 2u);
    EXPECT_EQ(t.nodes[root.children[0]].span.name, "A");
    EXPECT_EQ(t.nodes[root.children[1]].span.name, "B");
    EXPECT_EQ(t.total_duration_ns(), 100);
    EXPECT_EQ(t.span_count(), 3u);
}

TEST(Assemble, OrderIndependent) {
    std::vector<TraceSpan> spans{span("root", 0, 100), span("A", 10, 40, "root"), span("B", 40, 90, "root")};
    auto forward = assemble_spans(kTrace, spans);
    std::reverse(spans.begin(), spans.end());
    EXPECT_EQ(assemble_spans(kTrace, spans), forward);
}

TEST(Assemble, OrphansGoUnderSyntheticRoot) {
    auto t = assemble_spans(kTrace, {span("root", 0, 100), span("lost", 5, 7, "never-arrived")});
    EXPECT_EQ(t.span_count(), 2u);
    ASSERT_EQ(t.roots.size(), 2u);
    const auto* lost = t.find(span_id_for("lost"));
    ASSERT_TRUE(lost && lost->orphan && lost->parent);
    EXPECT_TRUE(t.nodes[*lost->parent].synthetic);
    EXPECT_EQ(t.nodes[*lost->parent].span.name, "unparented");
}

TEST(Assemble, ParentCyclesAreBroken) {
    auto a = span("a", 0, 10, "b");
    auto b = span("b", 0, 10, "a");
    auto t = assemble_spans(kTrace, {a, b, span("c", 1, 2, "a")});
    EXPECT_EQ(t.span_count(), 3u);
    std::size_t reachable = 0;
    std::vector<std::size_t> stack(t.roots.begin(), t.roots.end());
    while (!stack.empty()) {
        auto k = stack.back();
        stack.pop_back();
        ++reachable;
        for (auto c : t.nodes[k].children) stack.push_back(c);
    }
    EXPECT_EQ(reachable, t.nodes.size());
}

TEST(Assemble, ContainmentOverflowIsFlaggedNotFatal) {
    auto wall = assemble_spans(kTrace, {span("root", 1000, 2000), span("in", 1000 - 1000, 2000, "root"),
                                        span("out", 1500, 3001, "root")});
    EXPECT_FALSE(wall.find(span_id_for("in"))->overflow);  // within 1 us
    EXPECT_TRUE(wall.find(span_id_for("out"))->overflow);
    auto virt = assemble_spans(kTrace, {span("root", 1000, 2000, {}, SpanLevel::model, ClockDomain::virtual_time),
                                        span("late", 1000, 2001, "root", SpanLevel::model, ClockDomain::virtual_time)});
    EXPECT_TRUE(virt.find(span_id_for("late"))->overflow);
}

TEST(Assemble, MixedDomainsRejected) {
    EXPECT_ERRC(assemble_spans(kTrace, {span("a", 0, 1), span("b", 0, 1, {}, SpanLevel::model, ClockDomain::virtual_time)}),
                Errc::malformed_span);
}

std::vector<TraceSpan> full_fixture() {
    return {span("root", 0, 100),
            span("L1", 0, 50, "root", SpanLevel::framework),
            span("L2", 50, 100, "root", SpanLevel::framework),
            span("k1", 0, 20, "L1", SpanLevel::system),
            span("k2", 20, 50, "L1", SpanLevel::system),
            span("k3", 50, 70, "L2", SpanLevel::system),
            span("k4", 70, 100, "L2", SpanLevel::system)};
}

TEST(FilterLevel, CountsAndReparenting) {
    auto t = assemble_spans(kTrace, full_fixture());
    EXPECT_EQ(filter_level(t, TraceLevel::framework).span_count(), 3u);
    EXPECT_EQ(filter_level(t, TraceLevel::model).span_count(), 1u);
    EXPECT_EQ(filter_level(t, TraceLevel::none).span_count(), 0u);
    EXPECT_EQ(filter_level(t, TraceLevel::full), t);

    // Drop the framework layer: kernels climb to the root.
    std::vector<TraceSpan> no_framework;
    for (auto s : full_fixture()) {
        s.level = s.level == SpanLevel::framework ? SpanLevel::system : s.level == SpanLevel::system ? SpanLevel::framework : s.level;
        no_framework.push_back(s);
    }
    auto f = filter_level(assemble_spans(kTrace, no_framework), TraceLevel::framework);
    EXPECT_EQ(f.span_count(), 5u);
    ASSERT_EQ(f.roots.size(), 1u);
    EXPECT_EQ(f.nodes[f.roots[0]].children.size(), 4u);
}

TEST(Correlate, MaximalOverlapWins) {
    auto t = assemble_spans(kTrace, {span("P1", 0, 60, {}, SpanLevel::framework), span("P2", 60, 100, {}, SpanLevel::framework),
                                     span("k", 0, 100, {}, SpanLevel::system),
                                     span("inside", 70, 80, {}, SpanLevel::system),
                                     span("nowhere", 200, 300, {}, SpanLevel::system)});
    auto c = correlate(t, SpanLevel::framework, SpanLevel::system);
    ASSERT_EQ(c.groups.size(), 2u);
    ASSERT_EQ(c.groups[0].children.size(), 1u);
    EXPECT_EQ(c.groups[0].children[0].name, "k");
    ASSERT_EQ(c.groups[1].children.size(), 1u);
    EXPECT_EQ(c.groups[1].children[0].name, "inside");
    ASSERT_EQ(c.unassigned.size(), 1u);
    EXPECT_EQ(c.unassigned[0].name, "nowhere");
}

// Independent oracle: brute-force overlap arithmetic over random intervals.
TEST(Correlate, MatchesOverlapOracle) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TraceSpan> spans;
        std::vector<std::pair<std::int64_t, std::int64_t>> parents;
        for (int i = 0; i < 5; ++i) {
            std::int64_t a = rng() % 1000, b = a + 1 + rng() % 300;
            spans.push_back(span("p" + std::to_string(i), a, b, {}, SpanLevel::framework));
        }
        for (int i = 0; i < 10; ++i) {
            std::int64_t a = rng() % 1200, b = a + 1 + rng() % 200;
            spans.push_back(span("c" + std::to_string(i), a, b, {}, SpanLevel::system));
        }
        auto t = assemble_spans(kTrace, spans);
        auto c = correlate(t, SpanLevel::framework, SpanLevel::system);
        for (int i = 0; i < 10; ++i) {
            const auto& child = spans[5 + i];
            // Oracle: best overlap, ties to earliest (start, span_id).
            std::optional<TraceSpan> best;
            std::int64_t best_ov = 0;
            std::vector<TraceSpan> ps(spans.begin(), spans.begin() + 5);
            std::sort(ps.begin(), ps.end(), [](auto& x, auto& y) { return std::tie(x.start_ns, x.span_id) < std::tie(y.start_ns, y.span_id); });
            for (const auto& p : ps) {
                auto ov = std::min(p.end_ns, child.end_ns) - std::max(p.start_ns, child.start_ns);
                if (ov > best_ov) best_ov = ov, best = p;
            }
            std::optional<std::string> got;
            for (const auto& g : c.groups) {
                for (const auto& k : g.children) {
                    if (k.span_id == child.span_id) got = g.parent.name;
                }
            }
            EXPECT_EQ(got, best ? std::optional<std::string>(best->name) : std::nullopt);
        }
    }
}

TEST(Dominant, LongestThenName) {
    EXPECT_FALSE(dominant({}));
    EXPECT_EQ(dominant({span("b", 0, 10), span("a", 0, 10), span("c", 0, 5)})->name, "a");
    EXPECT_EQ(dominant({span("z", 0, 11), span("a", 0, 10)})->name, "z");
}

TEST(TraceStoreTest, IdempotentPublishAndValidation) {
    TraceStore store;
    auto spans = full_fixture();
    auto r = store.publish(spans);
    EXPECT_EQ(r.accepted, spans.size());
    auto before = store.assemble(kTrace);
    auto again = store.publish(spans);
    EXPECT_EQ(again.accepted, 0u);
    EXPECT_EQ(again.duplicates, spans.size());
    EXPECT_EQ(store.assemble(kTrace), before);

    auto bad = span("bad", 10, 5);
    auto short_id = span("x", 0, 1);
    short_id.trace_id = "abc";
    auto other_domain = span("v", 0, 1, {}, SpanLevel::model, ClockDomain::virtual_time);
    auto r2 = store.publish({bad, short_id, span("fine", 1, 2), other_domain});
    EXPECT_EQ(r2.accepted, 1u);
    ASSERT_EQ(r2.rejected.size(), 3u);
    EXPECT_EQ(r2.rejected[2].first, 3u);
    EXPECT_ERRC(store.assemble("ffffffffffffffffffffffffffffffff"), Errc::unknown_trace);
}

TEST(TraceStoreTest, SnapshotSurvivesRestart) {
    testing::TempDir dir;
    auto path = dir.path() / "spans.jsonl";
    Timeline before;
    {
        TraceStore store(path);
        store.publish(full_fixture());
        before = store.assemble(kTrace);
    }
    TraceStore reopened(path);
    EXPECT_EQ(reopened.assemble(kTrace), before);
}

TEST(SpanRecorderTest, LevelsAndFlush) {
    auto store = std::make_shared<TraceStore>();
    SpanRecorder none(kTrace, TraceLevel::none, ClockDomain::wall, std::make_shared<StoreSink>(store));
    none.record("x", "x", SpanLevel::model, 0, 1, std::nullopt);
    none.flush();
    EXPECT_EQ(store.get()->span_count(kTrace), 0u);

    SpanRecorder rec(kTrace, TraceLevel::framework, ClockDomain::wall,
                     std::make_shared<AsyncPublisher>(std::make_shared<StoreSink>(store)));
    auto root = rec.record("root", "root", SpanLevel::model, 0, 10, std::nullopt);
    rec.record("layer", "layer", SpanLevel::framework, 0, 5, root);
    rec.record("kernel", "kernel", SpanLevel::system, 0, 1, span_id_for("layer"));
    rec.flush();
    EXPECT_EQ(store->span_count(kTrace), 2u);
    EXPECT_EQ(rec.recorded(), 2u);
}

TEST(TracerServiceTest, ConcurrentPublishersOverTheWire) {
    auto store = std::make_shared<TraceStore>();
    TracerService svc(store, net::Endpoint{"127.0.0.1", 0});
    svc.start();
    constexpr int kPublishers = 4, kPer = 2500;
    std::vector<std::thread> threads;
    for (int p = 0; p < kPublishers; ++p) {
        threads.emplace_back([&, p] {
            TracerClient client(svc.endpoint());
            std::vector<TraceSpan> batch;
            for (int i = 0; i < kPer; ++i) {
                batch.push_back(span("p" + std::to_string(p) + "/" + std::to_string(i), i, i + 1));
                if (batch.size() == 250) {
                    client.publish(batch);
                    batch.clear();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    TracerClient client(svc.endpoint());
    EXPECT_EQ(client.spans(kTrace).size(), std::size_t(kPublishers * kPer));
    auto tl = client.timeline(kTrace);
    EXPECT_EQ(tl.at("span_count"), kPublishers * kPer);
    auto model_only = client.timeline(kTrace, TraceLevel::none);
    EXPECT_EQ(model_only.at("span_count"), 0);
    svc.stop();
}

} // namespace
} // namespace evalbench
