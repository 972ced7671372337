// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace evalbench {

/// Millisecond wall clock, injectable for lease and timestamp tests.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() const = 0;
};

class SystemClock final : public Clock {
public:
    std::int64_t now_ms() const override {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    }
};

class ManualClock final : public Clock {
public:
    explicit ManualClock(std::int64_t start_ms = 1'000'000) : now_(start_ms) {}
    std::int64_t now_ms() const override { return now_.load(); }
    void advance(std::chrono::milliseconds d) { now_ += d.count(); }
    void set(std::int64_t ms) { now_ = ms; }

private:
    std::atomic<std::int64_t> now_;
};

} // namespace evalbench
