// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evalbench/predictor.hpp"
#include "test_util.hpp"

namespace evalbench {
namespace {

const std::string kTrace = "00000000000000000000000000000001";

ModelManifest manifest_for(const std::string& framework, const std::string& constraint) {
    return parse_model_manifest("name: m\nversion: 1.0.0\nframework:\n  name: " + framework + "\n  version: '" +
                                constraint + "'\ninputs:\n  - type: vector\n    layer_name: x\noutputs:\n  - type: logits\n"
                                "    layer_name: y\nmodel:\n  base_url: file:///tmp/\n  graph_path: w.bin\n");
}

PredictorConfig config(const std::string& backend) {
    return PredictorConfig{backend, "Synth", SemVer{1, 0, 0}, {}};
}

TensorValue batch_of(std::int64_t b, std::int64_t features, float fill = 1.0f) {
    TensorValue t;
    t.shape = {b, features};
    t.data.assign(static_cast<std::size_t>(b * features), fill);
    return t;
}

TEST(TensorTest, StackUnstackRoundTrip) {
    TensorValue a{ElementType::float32, {2, 2}, {1, 2, 3, 4}};
    TensorValue b{ElementType::float32, {2, 2}, {5, 6, 7, 8}};
    auto s = stack_batch({a, b});
    EXPECT_EQ(s.shape, (std::vector<std::int64_t>{2, 2, 2}));
    auto back = unstack_batch(s);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0], a);
    EXPECT_EQ(back[1], b);
    TensorValue c{ElementType::float32, {4}, {1, 2, 3, 4}};
    EXPECT_ERRC(stack_batch({a, c}), Errc::shape_mismatch);
    EXPECT_ERRC((TensorValue{ElementType::float32, {3}, {1}}.check()), Errc::shape_mismatch);
}

TEST(SyntheticModelTest, ClosedFormLatency) {
    SyntheticModel m;
    EXPECT_EQ(m.latency_ns(1), 2'500'000);
    EXPECT_EQ(m.latency_ns(64), 34'000'000);
    auto d = m.layer_durations(64);
    ASSERT_EQ(d.size(), 4u);
    std::int64_t sum = 0;
    for (auto x : d) sum += x;
    EXPECT_EQ(sum, 34'000'000);
    auto skewed = SyntheticModel::from_options({{"synthetic.layer_fractions", "1,2"}, {"synthetic.base_ms", "1"},
                                                {"synthetic.per_item_ms", "0"}});
    EXPECT_EQ(skewed.layer_durations(7), (std::vector<std::int64_t>{333'333, 666'667}));
    EXPECT_ERRC(SyntheticModel::from_options({{"synthetic.base_ms", "-1"}}), Errc::validation);
    EXPECT_ERRC(SyntheticModel::from_options({{"synthetic.layers", "0"}}), Errc::validation);
}

TEST(SyntheticPredictorTest, AdvancesVirtualClockAndEmitsLayers) {
    auto store = std::make_shared<TraceStore>();
    SpanRecorder spans(kTrace, TraceLevel::full, ClockDomain::virtual_time, std::make_shared<StoreSink>(store));
    auto p = make_predictor(config("synthetic"));
    EXPECT_TRUE(p->spec().virtual_clock);
    ExecContext load_ctx(&spans, ClockDomain::virtual_time, 0, std::nullopt, "load");
    auto h = p->model_load(manifest_for("Synth", ">=1.0"), {}, {}, load_ctx);

    std::int64_t t = 0;
    for (int call = 0; call < 2; ++call) {
        const auto parent = spans.record("predict:" + std::to_string(call), "predict", SpanLevel::model, t, t + 34'000'000, std::nullopt);
        ExecContext ctx(&spans, ClockDomain::virtual_time, t, parent, "predict:" + std::to_string(call));
        auto out = p->predict(h, batch_of(64, 3), {}, ctx);
        EXPECT_EQ(ctx.elapsed_ns(), 34'000'000);
        EXPECT_EQ(out.shape.front(), 64);
        t = ctx.now_ns();
    }
    spans.flush();
    auto tl = store->assemble(kTrace);
    // 2 predict roots, 4 layers each, 2 kernels per layer.
    EXPECT_EQ(tl.span_count(), 2u + 8u + 16u);
    std::vector<const TraceSpan*> layers;
    for (const auto& n : tl.nodes) {
        EXPECT_FALSE(n.overflow) << n.span.name;
        if (n.span.level == SpanLevel::framework) layers.push_back(&n.span);
    }
    ASSERT_EQ(layers.size(), 8u);
    for (std::size_t i = 1; i < layers.size(); ++i) EXPECT_LE(layers[i - 1]->end_ns, layers[i]->start_ns);
}

TEST(SyntheticPredictorTest, SpanTimelinesAreByteIdenticalAcrossRuns) {
    auto run = [] {
        auto store = std::make_shared<TraceStore>();
        SpanRecorder spans(kTrace, TraceLevel::full, ClockDomain::virtual_time, std::make_shared<StoreSink>(store));
        auto p = make_predictor(config("synthetic"));
        ExecContext load_ctx(&spans, ClockDomain::virtual_time, 0, std::nullopt, "load");
        auto h = p->model_load(manifest_for("Synth", ">=1.0"), {}, {}, load_ctx);
        ExecContext ctx(&spans, ClockDomain::virtual_time, 0, std::nullopt, "predict");
        p->predict(h, batch_of(8, 2), {}, ctx);
        spans.flush();
        return timeline_to_json(store->assemble(kTrace)).dump();
    };
    EXPECT_EQ(run(), run());
}

TEST(PredictorErrors, ShapeHandleAndCompatibility) {
    for (const char* backend : {"synthetic", "linear"}) {
        auto p = make_predictor(config(backend));
        ExecContext ctx(nullptr, ClockDomain::wall, 0, std::nullopt, "x");
        EXPECT_ERRC(p->model_load(manifest_for("Other", ">=1.0"), {}, {}, ctx), Errc::incompatible_manifest);
        EXPECT_ERRC(p->model_load(manifest_for("Synth", ">=2.0"), {}, {}, ctx), Errc::incompatible_manifest);
    }
    testing::TempDir dir;
    auto linear = make_predictor(config("linear"));
    ExecContext ctx(nullptr, ClockDomain::wall, 0, std::nullopt, "x");
    EXPECT_ERRC(linear->model_load(manifest_for("Synth", ">=1.0"), ModelAssets{dir.path() / "missing.bin", {}}, {}, ctx),
                Errc::asset_missing);
    write_matrix_file(dir.path() / "w.bin", Matrix{3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}});
    auto h = linear->model_load(manifest_for("Synth", ">=1.0"), ModelAssets{dir.path() / "w.bin", {}}, {}, ctx);
    TensorValue empty{ElementType::float32, {0, 3}, {}};
    EXPECT_ERRC(linear->predict(h, empty, {}, ctx), Errc::shape_mismatch);
    EXPECT_ERRC(linear->predict(h, batch_of(2, 4), {}, ctx), Errc::shape_mismatch);
    linear->model_unload(h);
    EXPECT_ERRC(linear->predict(h, batch_of(1, 3), {}, ctx), Errc::handle_closed);
    EXPECT_ERRC(make_predictor(PredictorConfig{"nope", "x", {}, {}}), Errc::not_found);
}

TEST(LinearPredictorTest, IdentityWeights) {
    testing::TempDir dir;
    write_matrix_file(dir.path() / "w.bin", Matrix{3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}});
    auto p = make_predictor(config("linear"));
    ExecContext ctx(nullptr, ClockDomain::wall, 0, std::nullopt, "x");
    auto h = p->model_load(manifest_for("Synth", ">=1.0"), ModelAssets{dir.path() / "w.bin", {}}, {}, ctx);
    auto out = p->predict(h, TensorValue{ElementType::float32, {1, 3}, {0.1f, 0.7f, 0.2f}}, {}, ctx);
    EXPECT_EQ(out.data, (std::vector<float>{0.1f, 0.7f, 0.2f}));
}

// Triple-loop oracle, written independently of the predictor.
std::vector<double> naive_affine(const std::vector<float>& x, const std::vector<float>& w, const std::vector<float>& c,
                                 std::size_t n, std::size_t k, std::size_t m) {
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0;
            for (std::size_t t = 0; t < k; ++t) s += double(x[i * k + t]) * double(w[t * m + j]);
            out[i * m + j] = s + c[j];
        }
    return out;
}

TEST(LinearPredictorTest, MatchesTripleLoopOracleOn100Instances) {
    testing::TempDir dir;
    std::mt19937_64 rng(100);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    auto p = make_predictor(config("linear"));
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 1 + rng() % 8, k = 1 + rng() % 16, m = 1 + rng() % 8;
        Matrix w{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(m), {}};
        Matrix c{1, static_cast<std::uint32_t>(m), {}};
        for (std::size_t i = 0; i < k * m; ++i) w.data.push_back(u(rng));
        for (std::size_t i = 0; i < m; ++i) c.data.push_back(u(rng));
        write_matrix_file(dir.path() / "w.bin", w);
        write_matrix_file(dir.path() / "c.bin", c);
        TensorValue x{ElementType::float32, {static_cast<std::int64_t>(n), static_cast<std::int64_t>(k)}, {}};
        for (std::size_t i = 0; i < n * k; ++i) x.data.push_back(u(rng));

        ExecContext ctx(nullptr, ClockDomain::wall, 0, std::nullopt, "x");
        auto h = p->model_load(manifest_for("Synth", ">=1.0"), ModelAssets{dir.path() / "w.bin", dir.path() / "c.bin"}, {}, ctx);
        auto out = p->predict(h, x, {}, ctx);
        p->model_unload(h);
        auto expected = naive_affine(x.data, w.data, c.data, n, k, m);
        ASSERT_EQ(out.data.size(), expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const double denom = std::max(std::abs(expected[i]), 1e-6);
            EXPECT_LE(std::abs(out.data[i] - expected[i]) / denom, 1e-6) << "instance " << inst << " index " << i;
        }
    }
}

TEST(MatrixFile, LittleEndianLayout) {
    testing::TempDir dir;
    write_matrix_file(dir.path() / "m.bin", Matrix{1, 1, {1.0f}});
    std::ifstream in(dir.path() / "m.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(bytes, std::string("\x01\0\0\0\x01\0\0\0\0\0\x80\x3f", 12));
    std::ofstream(dir.path() / "bad.bin", std::ios::binary) << std::string("\x02\0\0\0\x02\0\0\0", 8);
    EXPECT_ERRC(read_matrix_file(dir.path() / "bad.bin"), Errc::decode);
}

} // namespace
} // namespace evalbench
