// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

#include "evalbench/channel.hpp"
#include "evalbench/error.hpp"
#include "evalbench/image.hpp"

namespace evalbench {

std::string_view to_string(OperatorKind k) noexcept {
    switch (k) {
    case OperatorKind::source: return "source";
    case OperatorKind::preprocess_step: return "preprocess_step";
    case OperatorKind::batcher: return "batcher";
    case OperatorKind::predict: return "predict";
    case OperatorKind::postprocess_step: return "postprocess_step";
    case OperatorKind::sink: return "sink";
    }
    return "?";
}

struct Pipeline::Item {
    std::uint64_t sequence = 0;
    /// Running item number across the handle's lifetime; keys its spans.
    std::uint64_t index = 0;
    std::uint32_t position = 0;
    std::uint32_t count = 0;
    std::uint64_t batch_index = 0;
    std::int64_t issue_ns = 0;
    std::int64_t source_start_ns = 0;
    /// End of the last operator that handled the item.
    std::int64_t ready_ns = 0;
    bool warmup = false;
    /// Stands in for a request without items so the sink still answers it.
    bool placeholder = false;
    std::string raw;
    TensorValue tensor;
    std::vector<Prediction> predictions;
    std::optional<std::string> error;
};

struct Pipeline::Batch {
    std::uint64_t index = 0;
    std::vector<Item> items;
};

Pipeline::Pipeline(Predictor& predictor, ModelHandle handle, const ModelManifest& manifest,
                   PredictOptions predict_options, PipelineOptions options, SpanRecorder* spans,
                   std::optional<std::string> root_span, std::vector<std::string> labels, std::int64_t origin_ns)
    : predictor_(predictor),
      handle_(std::move(handle)),
      manifest_(manifest),
      predict_options_(std::move(predict_options)),
      options_(std::move(options)),
      spans_(spans),
      root_(std::move(root_span)),
      labels_(std::move(labels)),
      domain_(spans ? spans->domain() : ClockDomain::wall),
      origin_ns_(origin_ns) {
    if (manifest.preprocess_code || manifest.postprocess_code) {
        throw Error(Errc::unsupported_feature, "custom processing code is not executed by this agent");
    }
    if (options_.batch_size == 0) throw Error(Errc::validation, "batch size must be at least 1", "batch_size");
    if (!manifest.inputs.empty()) pre_steps_ = manifest.inputs.front().steps;
    if (!manifest.outputs.empty()) post_steps_ = manifest.outputs.front().steps;
    if (post_steps_.empty()) post_steps_.push_back(ProcessingStep{ArgsortParams{}});

    operators_.push_back({"source", OperatorKind::source, true});
    for (const auto& s : pre_steps_) {
        operators_.push_back({std::string(to_string(s.op())), OperatorKind::preprocess_step, true});
        if (const auto* d = std::get_if<DecodeParams>(&s.params)) {
            has_decode_ = true;
            layout_ = d->data_layout;
        }
    }
    operators_.push_back({"batcher", OperatorKind::batcher, false});
    operators_.push_back({"predict", OperatorKind::predict, true});
    for (const auto& s : post_steps_) {
        operators_.push_back({std::string(to_string(s.op())), OperatorKind::postprocess_step, true});
    }
    operators_.push_back({"sink", OperatorKind::sink, false});
    cursor_.assign(operators_.size(), 0);
    last_end_ns_ = origin_ns_;
}

std::int64_t Pipeline::begin(std::size_t op, std::int64_t ready_ns) {
    if (domain_ == ClockDomain::wall) return wall_now_ns();
    return std::max(ready_ns, cursor_[op]);
}

std::int64_t Pipeline::finish(std::size_t op, std::int64_t start_ns, std::uint64_t item) {
    if (domain_ == ClockDomain::wall) return wall_now_ns();
    std::int64_t cost = options_.stage_cost ? options_.stage_cost(operators_[op].name, item) : 0;
    if (cost < 0) cost = 0;
    cursor_[op] = start_ns + cost;
    return cursor_[op];
}

void Pipeline::trace_item(const Item& item, std::size_t op, std::int64_t start, std::int64_t end) {
    if (!spans_) return;
    spans_->record("item:" + std::to_string(item.index) + "/" + std::to_string(op) + ":" + operators_[op].name,
                   operators_[op].name, SpanLevel::model, start, end, root_,
                   {{"batch_index", std::to_string(item.batch_index)},
                    {"item", std::to_string(item.index)},
                    {"sequence", std::to_string(item.sequence)}});
}

void Pipeline::apply_step(std::size_t step_index, Item& item) const {
    const auto& step = pre_steps_[step_index];
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, DecodeParams>) {
                item.tensor = decode_image(item.raw, p);
                item.raw.clear();
            } else if constexpr (std::is_same_v<P, ResizeParams>) {
                item.tensor = resize_image(item.tensor, p, layout_);
            } else if constexpr (std::is_same_v<P, NormalizeParams>) {
                item.tensor = normalize_image(item.tensor, p, layout_);
            } else {
                throw Error(Errc::unsupported_step, "argsort is an output step");
            }
        },
        step.params);
}

std::uint64_t Pipeline::run(const std::function<std::optional<UserInput>()>& next,
                            const std::function<void(const FeaturesResponse&)>& emit) {
    const std::size_t cap = options_.channel_capacity;
    const std::size_t n_pre = pre_steps_.size();
    const std::size_t batcher_op = 1 + n_pre;
    const std::size_t predict_op = batcher_op + 1;
    const std::size_t first_post_op = predict_op + 1;

    // Item channels: [0] source -> first pre step (or batcher), one per pre step.
    std::vector<std::unique_ptr<Channel<Item>>> pre(n_pre + 1);
    for (auto& c : pre) c = std::make_unique<Channel<Item>>(cap);
    Channel<Batch> batches(cap);
    std::vector<std::unique_ptr<Channel<Item>>> post(post_steps_.size() + 1);
    for (auto& c : post) c = std::make_unique<Channel<Item>>(cap);

    std::mutex err_mu;
    std::exception_ptr first_error;
    auto keep_error = [&](std::exception_ptr e) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = e;
    };
    auto fail = [](Item& item, std::string_view op, const std::exception& e) {
        if (!item.error) {
            item.error = "operator '" + std::string(op) + "' failed on item " + std::to_string(item.index) +
                         " (request " + std::to_string(item.sequence) + "): " + e.what();
        }
    };

    std::vector<std::thread> threads;

    // Source: explodes requests into items.
    threads.emplace_back([&] {
        try {
            while (auto req = next()) {
                const auto count = static_cast<std::uint32_t>(req->items.size());
                const std::int64_t ready =
                    domain_ == ClockDomain::virtual_time ? origin_ns_ + req->issue_ns : wall_now_ns();
                const std::uint64_t batches_in_request = count == 0 ? 1 : (count + options_.batch_size - 1) / options_.batch_size;
                const std::uint64_t first_batch = next_batch_;
                next_batch_ += batches_in_request;
                if (count == 0) {
                    Item item;
                    item.sequence = req->sequence;
                    item.issue_ns = req->issue_ns;
                    item.source_start_ns = item.ready_ns = ready;
                    item.batch_index = first_batch;
                    item.warmup = req->warmup;
                    item.placeholder = true;
                    item.error = "request " + std::to_string(req->sequence) + " has no items";
                    pre[0]->push(std::move(item));
                    continue;
                }
                for (std::uint32_t i = 0; i < count; ++i) {
                    Item item;
                    item.sequence = req->sequence;
                    item.index = next_item_++;
                    item.position = i;
                    item.count = count;
                    item.batch_index = first_batch + i / options_.batch_size;
                    item.issue_ns = req->issue_ns;
                    item.warmup = req->warmup;
                    item.raw = std::move(req->items[i]);
                    const auto start = begin(0, ready);
                    try {
                        if (!has_decode_) {
                            item.tensor = decode_raw_floats(item.raw);
                            item.raw.clear();
                        }
                    } catch (const std::exception& e) {
                        fail(item, "source", e);
                    }
                    const auto end = finish(0, start, item.index);
                    item.source_start_ns = start;
                    item.ready_ns = end;
                    trace_item(item, 0, start, end);
                    pre[0]->push(std::move(item));
                }
            }
        } catch (...) {
            keep_error(std::current_exception());
        }
        pre[0]->close();
    });

    // Preprocess steps.
    for (std::size_t s = 0; s < n_pre; ++s) {
        threads.emplace_back([&, s] {
            const std::size_t op = 1 + s;
            while (auto item = pre[s]->pop()) {
                if (!item->placeholder) {
                    const auto start = begin(op, item->ready_ns);
                    if (!item->error) {
                        try {
                            apply_step(s, *item);
                        } catch (const std::exception& e) {
                            fail(*item, operators_[op].name, e);
                        }
                    }
                    const auto end = finish(op, start, item->index);
                    item->ready_ns = end;
                    trace_item(*item, op, start, end);
                }
                pre[s + 1]->push(std::move(*item));
            }
            pre[s + 1]->close();
        });
    }

    // Batcher: groups consecutive items that share a batch index.
    threads.emplace_back([&] {
        std::optional<Batch> open;
        while (auto item = pre[n_pre]->pop()) {
            if (open && open->index != item->batch_index) {
                batches.push(std::move(*open));
                open.reset();
            }
            if (!open) open = Batch{item->batch_index, {}};
            const bool last = item->placeholder || item->position + 1 == item->count ||
                              open->items.size() + 1 == options_.batch_size;
            open->items.push_back(std::move(*item));
            if (last) {
                batches.push(std::move(*open));
                open.reset();
            }
        }
        if (open) batches.push(std::move(*open));
        batches.close();
    });

    // Predict.
    threads.emplace_back([&] {
        while (auto batch = batches.pop()) {
            std::vector<std::size_t> good;
            std::int64_t ready = 0;
            for (std::size_t i = 0; i < batch->items.size(); ++i) {
                ready = std::max(ready, batch->items[i].ready_ns);
                if (!batch->items[i].error) good.push_back(i);
            }
            if (!good.empty()) {
                const std::string key = "batch:" + std::to_string(batch->index) + "/predict";
                const std::string span_id = span_id_for(key);
                const auto start = begin(predict_op, ready);
                ExecContext ctx(spans_, domain_, start, span_id, key);
                std::int64_t end = start;
                try {
                    std::vector<TensorValue> inputs;
                    inputs.reserve(good.size());
                    for (auto i : good) inputs.push_back(std::move(batch->items[i].tensor));
                    auto out = unstack_batch(predictor_.predict(handle_, stack_batch(inputs), predict_options_, ctx));
                    if (out.size() != good.size()) {
                        throw Error(Errc::shape_mismatch, "predictor returned " + std::to_string(out.size()) +
                                                              " rows for " + std::to_string(good.size()) + " items");
                    }
                    for (std::size_t k = 0; k < good.size(); ++k) batch->items[good[k]].tensor = std::move(out[k]);
                } catch (const std::exception& e) {
                    for (auto i : good) fail(batch->items[i], "predict", e);
                }
                end = domain_ == ClockDomain::wall ? wall_now_ns() : ctx.now_ns();
                cursor_[predict_op] = end;
                if (spans_) {
                    spans_->record(key, "predict", SpanLevel::model, start, end, root_,
                                   {{"batch_index", std::to_string(batch->index)},
                                    {"items", std::to_string(good.size())}});
                }
                for (auto i : good) batch->items[i].ready_ns = end;
            }
            for (auto& item : batch->items) post[0]->push(std::move(item));
        }
        post[0]->close();
    });

    // Postprocess steps.
    for (std::size_t s = 0; s < post_steps_.size(); ++s) {
        threads.emplace_back([&, s] {
            const std::size_t op = first_post_op + s;
            while (auto item = post[s]->pop()) {
                if (!item->placeholder) {
                    const auto start = begin(op, item->ready_ns);
                    if (!item->error) {
                        try {
                            const auto top = options_.top_k == 0 ? std::nullopt : std::optional(options_.top_k);
                            item->predictions = argsort_scores(item->tensor.data, labels_, top);
                        } catch (const std::exception& e) {
                            fail(*item, operators_[op].name, e);
                        }
                    }
                    const auto end = finish(op, start, item->index);
                    item->ready_ns = end;
                    trace_item(*item, op, start, end);
                }
                post[s + 1]->push(std::move(*item));
            }
            post[s + 1]->close();
        });
    }

    // Sink: reassembles requests in order.
    std::uint64_t answered = 0;
    threads.emplace_back([&] {
        const std::int64_t offset = domain_ == ClockDomain::virtual_time ? origin_ns_ : 0;
        std::optional<FeaturesResponse> current;
        bool emitting = true;
        auto deliver = [&](FeaturesResponse r) {
            ++answered;
            if (!emitting) return;
            try {
                emit(r);
            } catch (...) {
                keep_error(std::current_exception());
                emitting = false;
            }
        };
        while (auto item = post.back()->pop()) {
            last_end_ns_ = std::max(last_end_ns_, item->ready_ns);
            if (!current) {
                current = FeaturesResponse{};
                current->sequence = item->sequence;
                current->batch_size = item->count;
                current->issue_ns = item->issue_ns;
                current->start_ns = item->source_start_ns - offset;
                current->end_ns = item->ready_ns - offset;
            }
            current->end_ns = std::max(current->end_ns, item->ready_ns - offset);
            if (item->error && current->success) {
                current->success = false;
                current->error = *item->error;
            }
            if (!item->placeholder) current->features.push_back(std::move(item->predictions));
            if (item->placeholder || item->position + 1 == item->count) {
                if (!current->success) current->features.clear();
                deliver(std::move(*current));
                current.reset();
            }
        }
    });

    for (auto& t : threads) t.join();
    if (spans_) spans_->flush();
    if (first_error) std::rethrow_exception(first_error);
    return answered;
}

void throw_if_failed(const std::vector<FeaturesResponse>& responses) {
    for (const auto& r : responses) {
        if (!r.success) throw Error(Errc::pipeline, r.error);
    }
}

} // namespace evalbench
