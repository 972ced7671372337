// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <limits>
#include <mutex>
#include <optional>

namespace evalbench {

/// Multi-producer multi-consumer FIFO with optional capacity bound.
/// push blocks while full; pop blocks while empty. After close(), pushes fail
/// and pops drain what is left, then return nullopt.
template <class T>
class Channel {
public:
    explicit Channel(std::size_t capacity = std::numeric_limits<std::size_t>::max()) : capacity_(capacity ? capacity : 1) {}

    Channel(const Channel&) = delete;
    Channel& operator=(const Channel&) = delete;

    bool push(T value) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(value));
        high_water_ = std::max(high_water_, items_.size());
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        return take(lock);
    }

    template <class Rep, class Period>
    std::optional<T> pop_for(std::chrono::duration<Rep, Period> timeout) {
        std::unique_lock lock(mu_);
        not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
        return take(lock);
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    bool closed() const {
        std::lock_guard lock(mu_);
        return closed_;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return items_.size();
    }

    std::size_t capacity() const noexcept { return capacity_; }

    /// Largest queue length observed; never exceeds capacity().
    std::size_t high_water() const {
        std::lock_guard lock(mu_);
        return high_water_;
    }

private:
    std::optional<T> take(std::unique_lock<std::mutex>&) {
        if (items_.empty()) return std::nullopt;
        T v = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return v;
    }

    mutable std::mutex mu_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<T> items_;
    std::size_t capacity_;
    std::size_t high_water_ = 0;
    bool closed_ = false;
};

} // namespace evalbench
