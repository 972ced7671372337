// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Agent data manager: checksum-verified asset cache and record files.
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace evalbench {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

struct AssetCacheEntry {
    std::string url;
    std::filesystem::path path;
    std::string checksum;
    std::uint64_t size_bytes = 0;
    std::int64_t fetched_at_ms = 0;
};

/// Downloads file://, http:// and https:// assets on demand into a
/// content-addressed directory. Entries with a checksum live under
/// root/sha256/<digest>; unchecked ones under root/url/<sha256(url)>.
class AssetCache {
public:
    /// Returns the body of `url` or throws Error(Errc::fetch_failed).
    using Fetcher = std::function<std::string(const std::string& url)>;

    explicit AssetCache(std::filesystem::path root, Fetcher fetcher = default_fetcher());

    /// Local path of a verified copy. An empty checksum skips verification.
    /// Errors: ChecksumMismatch (the bad copy is removed), FetchFailed.
    AssetCacheEntry fetch(const std::string& url, const std::string& expected_checksum = "");
    /// Number of times the fetcher was invoked.
    std::size_t fetch_count() const noexcept { return fetches_.load(); }
    const std::filesystem::path& root() const noexcept { return root_; }

    static Fetcher default_fetcher();

private:
    std::filesystem::path root_;
    Fetcher fetcher_;
    std::mutex mu_;
    std::atomic<std::size_t> fetches_{0};
};

/// Joins a manifest base_url and a relative asset path.
std::string join_url(std::string_view base, std::string_view relative);

/// Record file: a sequence of [u32 little-endian length][payload].
void write_record_file(const std::filesystem::path& path, const std::vector<std::string>& records);
/// Throws Error(Errc::decode) on a truncated file.
std::vector<std::string> read_record_file(const std::filesystem::path& path);

} // namespace evalbench
