// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/predictor.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "evalbench/error.hpp"

namespace evalbench {

// ---------------------------------------------------------------------------
// Tensors

std::size_t TensorValue::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d > 0 ? static_cast<std::size_t>(d) : 0;
    return n;
}

void TensorValue::check() const {
    for (auto d : shape) {
        if (d <= 0) throw Error(Errc::shape_mismatch, "tensor dimensions must be positive");
    }
    if (data.size() != element_count()) {
        throw Error(Errc::shape_mismatch, "tensor holds " + std::to_string(data.size()) + " values but its shape needs " +
                                              std::to_string(element_count()));
    }
}

TensorValue stack_batch(const std::vector<TensorValue>& items) {
    if (items.empty()) throw Error(Errc::shape_mismatch, "cannot stack an empty batch");
    TensorValue out;
    out.element_type = items.front().element_type;
    out.shape.push_back(static_cast<std::int64_t>(items.size()));
    out.shape.insert(out.shape.end(), items.front().shape.begin(), items.front().shape.end());
    out.data.reserve(items.size() * items.front().data.size());
    for (const auto& item : items) {
        if (item.shape != items.front().shape) throw Error(Errc::shape_mismatch, "batch items differ in shape");
        out.data.insert(out.data.end(), item.data.begin(), item.data.end());
    }
    return out;
}

std::vector<TensorValue> unstack_batch(const TensorValue& batch) {
    batch.check();
    if (batch.shape.empty()) throw Error(Errc::shape_mismatch, "a batch needs a leading dimension");
    std::vector<TensorValue> out;
    const auto n = static_cast<std::size_t>(batch.shape.front());
    const std::size_t per = batch.data.size() / n;
    std::vector<std::int64_t> item_shape(batch.shape.begin() + 1, batch.shape.end());
    if (item_shape.empty()) item_shape.push_back(1);
    for (std::size_t i = 0; i < n; ++i) {
        TensorValue t;
        t.element_type = batch.element_type;
        t.shape = item_shape;
        t.data.assign(batch.data.begin() + static_cast<std::ptrdiff_t>(i * per),
                      batch.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Context

std::int64_t wall_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

ExecContext::ExecContext(SpanRecorder* spans, ClockDomain domain, std::int64_t start_ns,
                         std::optional<std::string> parent_span, std::string key_prefix)
    : spans_(spans), domain_(domain), start_ns_(start_ns), parent_(std::move(parent_span)),
      prefix_(std::move(key_prefix)) {}

std::int64_t ExecContext::now_ns() const { return virtual_clock() ? start_ns_ + advanced_ns_ : wall_now_ns(); }

void ExecContext::advance(std::int64_t ns) {
    if (virtual_clock() && ns > 0) advanced_ns_ += ns;
}

std::int64_t ExecContext::elapsed_ns() const { return now_ns() - start_ns_; }

void check_compatible(const PredictorSpec& spec, const ModelManifest& manifest) {
    if (manifest.framework.name != spec.framework_name) {
        throw Error(Errc::incompatible_manifest, "model " + manifest.name + " needs framework " +
                                                     manifest.framework.name + ", predictor serves " +
                                                     spec.framework_name);
    }
    if (!satisfies(spec.framework_version, manifest.framework.constraint)) {
        throw Error(Errc::incompatible_manifest, "framework " + spec.framework_name + " " +
                                                     spec.framework_version.to_string() + " does not satisfy '" +
                                                     manifest.framework.constraint.to_string() + "'");
    }
}

// ---------------------------------------------------------------------------
// Matrix files

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

} // namespace

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
    if (m.data.size() != std::size_t(m.rows) * m.cols) throw Error(Errc::shape_mismatch, "matrix data size");
    std::ofstream out(path, std::ios::binary);
    put_u32(out, m.rows);
    put_u32(out, m.cols);
    for (float f : m.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    if (!out) throw Error(Errc::internal, "cannot write " + path.string());
}

Matrix read_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::asset_missing, "missing asset " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8) throw Error(Errc::decode, "matrix file too short: " + path.string());
    Matrix m;
    m.rows = get_u32(p);
    m.cols = get_u32(p + 4);
    const std::uint64_t n = std::uint64_t(m.rows) * m.cols;
    if (bytes.size() != 8 + 4 * n) throw Error(Errc::decode, "matrix file size does not match its header: " + path.string());
    m.data.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t bits = get_u32(p + 8 + 4 * i);
        std::memcpy(&m.data[i], &bits, 4);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Synthetic latency model

namespace {

std::int64_t ms_to_ns(const std::string& key, const std::string& text) {
    double ms = 0;
    std::istringstream in(text);
    if (!(in >> ms) || !in.eof() || ms < 0 || !std::isfinite(ms)) {
        throw Error(Errc::validation, "expected a non-negative number of milliseconds", key);
    }
    return std::llround(ms * 1e6);
}

std::uint32_t parse_count(const std::string& key, const std::string& text, std::uint32_t min) {
    try {
        std::size_t used = 0;
        auto v = std::stoul(text, &used);
        if (used != text.size() || v < min || v > 1'000'000) throw std::out_of_range(key);
        return static_cast<std::uint32_t>(v);
    } catch (const std::logic_error&) {
        throw Error(Errc::validation, "expected an integer >= " + std::to_string(min), key);
    }
}

} // namespace

std::vector<std::int64_t> SyntheticModel::layer_durations(std::int64_t batch) const {
    const std::int64_t total = latency_ns(batch);
    std::vector<double> w = layer_fractions;
    if (w.empty()) w.assign(layers, 1.0);
    double sum = 0;
    for (double x : w) sum += x;
    std::vector<std::int64_t> out(w.size());
    std::int64_t used = 0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        out[i] = static_cast<std::int64_t>(std::floor(static_cast<double>(total) * w[i] / sum));
        used += out[i];
    }
    out.back() = total - used;
    return out;
}

SyntheticModel SyntheticModel::from_options(const std::map<std::string, std::string>& options) {
    return from_options(options, SyntheticModel{});
}

SyntheticModel SyntheticModel::from_options(const std::map<std::string, std::string>& options, SyntheticModel m) {
    for (const auto& [key, value] : options) {
        if (key == "synthetic.base_ms") m.base_ns = ms_to_ns(key, value);
        else if (key == "synthetic.per_item_ms") m.per_item_ns = ms_to_ns(key, value);
        else if (key == "synthetic.load_ms") m.load_ns = ms_to_ns(key, value);
        else if (key == "synthetic.layers") m.layers = parse_count(key, value, 1);
        else if (key == "synthetic.kernels_per_layer") m.kernels_per_layer = parse_count(key, value, 0);
        else if (key == "synthetic.classes") m.classes = parse_count(key, value, 1);
        else if (key == "synthetic.layer_fractions") {
            m.layer_fractions.clear();
            std::stringstream in(value);
            std::string part;
            while (std::getline(in, part, ',')) {
                try {
                    double f = std::stod(part);
                    if (!(f > 0) || !std::isfinite(f)) throw std::invalid_argument(part);
                    m.layer_fractions.push_back(f);
                } catch (const std::logic_error&) {
                    throw Error(Errc::validation, "layer fractions must be positive numbers", key);
                }
            }
        }
    }
    if (!m.layer_fractions.empty()) m.layers = static_cast<std::uint32_t>(m.layer_fractions.size());
    return m;
}

// ---------------------------------------------------------------------------
// Built-in backends

namespace {

std::atomic<std::uint64_t> g_handle_counter{1};

std::string next_handle(const std::string& backend) { return backend + "-" + std::to_string(g_handle_counter++); }

/// Common bookkeeping for open handles.
template <class State>
class HandleTable {
public:
    void put(const std::string& id, State s) {
        std::lock_guard lock(mu_);
        open_.emplace(id, std::make_shared<State>(std::move(s)));
    }
    std::shared_ptr<State> get(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = open_.find(id);
        if (it == open_.end()) throw Error(Errc::handle_closed, "model handle " + id + " is not open");
        return it->second;
    }
    void drop(const std::string& id) {
        std::lock_guard lock(mu_);
        open_.erase(id);
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<State>> open_;
};

std::int64_t batch_size_of(const TensorValue& batch) {
    if (batch.shape.empty() || batch.shape.front() < 1) {
        throw Error(Errc::shape_mismatch, "batch needs a leading dimension of at least 1");
    }
    batch.check();
    return batch.shape.front();
}

class SyntheticPredictor final : public Predictor {
public:
    explicit SyntheticPredictor(PredictorConfig config) : config_(std::move(config)) {
        defaults_ = SyntheticModel::from_options(config_.options);
    }

    PredictorSpec spec() const override {
        return PredictorSpec{"synthetic",
                             config_.framework_name,
                             config_.framework_version,
                             {ElementType::float32, ElementType::uint8},
                             {DeviceKind::cpu, DeviceKind::gpu},
                             true,
                             false};
    }

    ModelHandle model_load(const ModelManifest& manifest, const ModelAssets&, const PredictOptions& options,
                           ExecContext& ctx) override {
        check_compatible(spec(), manifest);
        auto model = SyntheticModel::from_options(options.options, defaults_);
        ctx.advance(model.load_ns);
        ModelHandle h{next_handle("synthetic"), std::make_shared<ModelManifest>(manifest), ctx.now_ns()};
        models_.put(h.id, model);
        return h;
    }

    TensorValue predict(const ModelHandle& handle, const TensorValue& batch, const PredictOptions&,
                        ExecContext& ctx) override {
        auto model = models_.get(handle.id);
        const auto b = batch_size_of(batch);
        const auto durations = model->layer_durations(b);
        SpanRecorder* spans = ctx.spans();
        std::int64_t t = ctx.now_ns();
        for (std::size_t i = 0; i < durations.size(); ++i) {
            const std::string layer_key = ctx.key("layer:" + std::to_string(i));
            const std::int64_t layer_end = t + durations[i];
            if (spans) {
                const auto layer_id = spans->record(layer_key, "layer_" + std::to_string(i), SpanLevel::framework, t,
                                                    layer_end, ctx.parent_span(),
                                                    {{"layer_index", std::to_string(i)},
                                                     {"layer_name", "synthetic/layer_" + std::to_string(i)},
                                                     {"layer_type", "Synthetic"}});
                if (spans->enabled(SpanLevel::system)) record_kernels(*spans, *model, layer_key, layer_id, t, durations[i]);
            }
            t = layer_end;
        }
        ctx.advance(model->latency_ns(b));

        TensorValue out;
        out.shape = {b, static_cast<std::int64_t>(model->classes)};
        out.data.resize(static_cast<std::size_t>(b) * model->classes);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            const auto c = i % model->classes;
            out.data[i] = static_cast<float>(model->classes - c) / static_cast<float>(model->classes);
        }
        return out;
    }

    void model_unload(const ModelHandle& handle) override {
        models_.get(handle.id);
        models_.drop(handle.id);
    }

private:
    static void record_kernels(SpanRecorder& spans, const SyntheticModel& m, const std::string& layer_key,
                               const std::string& layer_id, std::int64_t start, std::int64_t duration) {
        const std::int64_t k = m.kernels_per_layer;
        if (k == 0) return;
        // Kernel j takes a share proportional to (k - j); the first dominates.
        const std::int64_t total_weight = k * (k + 1) / 2;
        std::int64_t t = start, used = 0;
        for (std::int64_t j = 0; j < k; ++j) {
            std::int64_t d = j + 1 < k ? duration * (k - j) / total_weight : duration - used;
            used += d;
            spans.record(layer_key + "/kernel:" + std::to_string(j), "synthetic_kernel_" + std::to_string(j),
                         SpanLevel::system, t, t + d, layer_id, {{"kernel_index", std::to_string(j)}});
            t += d;
        }
    }

    PredictorConfig config_;
    SyntheticModel defaults_;
    HandleTable<SyntheticModel> models_;
};

class LinearPredictor final : public Predictor {
public:
    explicit LinearPredictor(PredictorConfig config) : config_(std::move(config)) {}

    PredictorSpec spec() const override {
        return PredictorSpec{"linear",           config_.framework_name, config_.framework_version,
                             {ElementType::float32}, {DeviceKind::cpu},     false,
                             true};
    }

    ModelHandle model_load(const ModelManifest& manifest, const ModelAssets& assets, const PredictOptions&,
                           ExecContext& ctx) override {
        check_compatible(spec(), manifest);
        if (!assets.graph) throw Error(Errc::asset_missing, "linear model needs a weight matrix (graph_path)");
        State s;
        s.w = read_matrix_file(*assets.graph);
        if (assets.weights) {
            auto bias = read_matrix_file(*assets.weights);
            if (bias.data.size() != s.w.cols) {
                throw Error(Errc::shape_mismatch, "bias has " + std::to_string(bias.data.size()) + " entries, expected " +
                                                      std::to_string(s.w.cols));
            }
            s.bias = std::move(bias.data);
        } else {
            s.bias.assign(s.w.cols, 0.0f);
        }
        ModelHandle h{next_handle("linear"), std::make_shared<ModelManifest>(manifest), ctx.now_ns()};
        models_.put(h.id, std::move(s));
        return h;
    }

    TensorValue predict(const ModelHandle& handle, const TensorValue& batch, const PredictOptions&,
                        ExecContext& ctx) override {
        auto state = models_.get(handle.id);
        const auto b = batch_size_of(batch);
        const std::size_t features = batch.data.size() / static_cast<std::size_t>(b);
        const auto& w = state->w;
        if (features != w.rows) {
            throw Error(Errc::shape_mismatch, "input has " + std::to_string(features) + " features, model expects " +
                                                  std::to_string(w.rows));
        }
        TensorValue out;
        out.shape = {b, static_cast<std::int64_t>(w.cols)};
        out.data.resize(static_cast<std::size_t>(b) * w.cols);

        // Accumulate in double and round once, after the bias, so the result
        // stays within float precision of the exact affine map.
        const auto t0 = ctx.now_ns();
        std::vector<double> acc(out.data.size(), 0.0);
        for (std::int64_t r = 0; r < b; ++r) {
            const float* x = batch.data.data() + static_cast<std::size_t>(r) * features;
            double* row = acc.data() + static_cast<std::size_t>(r) * w.cols;
            for (std::size_t k = 0; k < features; ++k) {
                const float* wrow = w.data.data() + k * w.cols;
                for (std::size_t c = 0; c < w.cols; ++c) row[c] += double(x[k]) * double(wrow[c]);
            }
        }
        const auto t1 = ctx.now_ns();
        for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i] + double(state->bias[i % w.cols]));
        const auto t2 = ctx.now_ns();
        if (auto* spans = ctx.spans()) {
            spans->record(ctx.key("layer:0"), "matmul", SpanLevel::framework, t0, t1, ctx.parent_span(),
                          {{"layer_index", "0"}, {"layer_name", "linear/matmul"}, {"layer_type", "MatMul"}});
            spans->record(ctx.key("layer:1"), "bias_add", SpanLevel::framework, t1, t2, ctx.parent_span(),
                          {{"layer_index", "1"}, {"layer_name", "linear/bias_add"}, {"layer_type", "BiasAdd"}});
        }
        return out;
    }

    void model_unload(const ModelHandle& handle) override {
        models_.get(handle.id);
        models_.drop(handle.id);
    }

private:
    struct State {
        Matrix w;
        std::vector<float> bias;
    };
    PredictorConfig config_;
    HandleTable<State> models_;
};

struct BackendTable {
    std::mutex mu;
    std::map<std::string, PredictorFactory> factories{
        {"synthetic", [](const PredictorConfig& c) { return std::make_unique<SyntheticPredictor>(c); }},
        {"linear", [](const PredictorConfig& c) { return std::make_unique<LinearPredictor>(c); }},
    };
};

BackendTable& backends() {
    static BackendTable table;
    return table;
}

} // namespace

void register_backend(const std::string& backend, PredictorFactory factory) {
    auto& t = backends();
    std::lock_guard lock(t.mu);
    t.factories[backend] = std::move(factory);
}

std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config) {
    auto& t = backends();
    PredictorFactory f;
    {
        std::lock_guard lock(t.mu);
        auto it = t.factories.find(config.backend);
        if (it == t.factories.end()) throw Error(Errc::not_found, "unknown predictor backend '" + config.backend + "'");
        f = it->second;
    }
    return f(config);
}

std::vector<std::string> registered_backends() {
    auto& t = backends();
    std::lock_guard lock(t.mu);
    std::vector<std::string> out;
    for (const auto& [name, f] : t.factories) out.push_back(name);
    return out;
}

} // namespace evalbench
