// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/data.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <httplib.h>
#include <sstream>

#include "evalbench/error.hpp"

namespace evalbench {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(Errc::internal, "SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::fetch_failed, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomically(const std::filesystem::path& p, const std::string& bytes) {
    std::filesystem::create_directories(p.parent_path());
    auto tmp = p;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(Errc::fetch_failed, "cannot write cache file " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

std::string fetch_http(const std::string& url) {
    // scheme://host[:port]/path
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    auto res = client.Get(path);
    if (!res) throw Error(Errc::fetch_failed, "GET " + url + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(Errc::fetch_failed, "GET " + url + ": HTTP " + std::to_string(res->status));
    return res->body;
}

} // namespace

AssetCache::Fetcher AssetCache::default_fetcher() {
    return [](const std::string& url) -> std::string {
        if (url.rfind("file://", 0) == 0) return read_file(url.substr(7));
        if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0) return fetch_http(url);
        throw Error(Errc::fetch_failed, "unsupported URL scheme: " + url);
    };
}

AssetCache::AssetCache(std::filesystem::path root, Fetcher fetcher)
    : root_(std::move(root)), fetcher_(std::move(fetcher)) {
    std::filesystem::create_directories(root_);
}

AssetCacheEntry AssetCache::fetch(const std::string& url, const std::string& expected_checksum) {
    std::lock_guard lock(mu_);
    AssetCacheEntry entry;
    entry.url = url;
    entry.path = expected_checksum.empty() ? root_ / "url" / sha256_hex(url) : root_ / "sha256" / expected_checksum;

    if (std::filesystem::exists(entry.path)) {
        const auto bytes = read_file(entry.path);
        const auto digest = sha256_hex(bytes);
        if (expected_checksum.empty() || digest == expected_checksum) {
            entry.checksum = digest;
            entry.size_bytes = bytes.size();
            entry.fetched_at_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::filesystem::last_write_time(entry.path).time_since_epoch())
                                      .count();
            return entry;
        }
        // A corrupted cache entry is dropped and fetched again.
        std::filesystem::remove(entry.path);
    }

    ++fetches_;
    const std::string bytes = fetcher_(url);
    const auto digest = sha256_hex(bytes);
    if (!expected_checksum.empty() && digest != expected_checksum) {
        std::error_code ec;
        std::filesystem::remove(entry.path, ec);
        throw Error(Errc::checksum_mismatch, url + ": expected sha256 " + expected_checksum + ", got " + digest);
    }
    write_file_atomically(entry.path, bytes);
    entry.checksum = digest;
    entry.size_bytes = bytes.size();
    entry.fetched_at_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    return entry;
}

std::string join_url(std::string_view base, std::string_view relative) {
    if (relative.find("://") != std::string_view::npos) return std::string(relative);
    std::string out(base);
    if (!out.empty() && out.back() != '/' && !relative.empty() && relative.front() != '/') out.push_back('/');
    if (!out.empty() && out.back() == '/' && !relative.empty() && relative.front() == '/') relative.remove_prefix(1);
    out += relative;
    return out;
}

void write_record_file(const std::filesystem::path& path, const std::vector<std::string>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& r : records) {
        const auto n = static_cast<std::uint32_t>(r.size());
        const char len[4] = {static_cast<char>(n & 0xff), static_cast<char>((n >> 8) & 0xff),
                             static_cast<char>((n >> 16) & 0xff), static_cast<char>((n >> 24) & 0xff)};
        out.write(len, 4);
        out.write(r.data(), static_cast<std::streamsize>(r.size()));
    }
    if (!out) throw Error(Errc::internal, "cannot write record file " + path.string());
}

std::vector<std::string> read_record_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::not_found, "record file not found: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 4) throw Error(Errc::decode, "truncated record length in " + path.string());
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        const std::size_t n = std::size_t(p[0]) | std::size_t(p[1]) << 8 | std::size_t(p[2]) << 16 | std::size_t(p[3]) << 24;
        pos += 4;
        if (bytes.size() - pos < n) throw Error(Errc::decode, "truncated record payload in " + path.string());
        out.push_back(bytes.substr(pos, n));
        pos += n;
    }
    return out;
}

} // namespace evalbench
