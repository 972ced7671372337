// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/semver.hpp"

#include <charconv>
#include <limits>

#include "evalbench/error.hpp"

namespace evalbench {

namespace {

bool parse_component(std::string_view s, std::uint64_t& out) {
    if (s.empty() || s.size() > 18) return false;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

} // namespace

std::string SemVer::to_string() const {
    return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

SemVer SemVer::parse(std::string_view text) {
    std::uint64_t parts[3] = {0, 0, 0};
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
        auto dot = text.find('.', start);
        auto piece = text.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
        if (count == 3 || !parse_component(piece, parts[count])) {
            throw Error(Errc::syntax, "malformed version '" + std::string(text) + "'");
        }
        ++count;
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    if (count < 2) throw Error(Errc::syntax, "malformed version '" + std::string(text) + "'");
    return SemVer{parts[0], parts[1], parts[2]};
}

std::string_view comparator_symbol(Comparator c) noexcept {
    switch (c) {
    case Comparator::ge: return ">=";
    case Comparator::gt: return ">";
    case Comparator::le: return "<=";
    case Comparator::lt: return "<";
    case Comparator::eq: return "=";
    }
    return "=";
}

std::string VersionConstraint::to_string() const {
    std::string out;
    for (const auto& clause : clauses) {
        if (!out.empty()) out += ' ';
        out += comparator_symbol(clause.cmp);
        out += clause.version.to_string();
    }
    return out;
}

VersionConstraint parse_constraint(std::string_view text) {
    VersionConstraint result;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i == text.size()) break;
        std::size_t end = i;
        while (end < text.size() && !is_space(text[end])) ++end;
        std::string_view token = text.substr(i, end - i);
        i = end;

        VersionClause clause;
        if (token.starts_with(">=")) {
            clause.cmp = Comparator::ge;
            token.remove_prefix(2);
        } else if (token.starts_with("<=")) {
            clause.cmp = Comparator::le;
            token.remove_prefix(2);
        } else if (token.starts_with(">")) {
            clause.cmp = Comparator::gt;
            token.remove_prefix(1);
        } else if (token.starts_with("<")) {
            clause.cmp = Comparator::lt;
            token.remove_prefix(1);
        } else if (token.starts_with("=")) {
            clause.cmp = Comparator::eq;
            token.remove_prefix(1);
        } else if (token.empty() || token.front() < '0' || token.front() > '9') {
            throw Error(Errc::syntax, "unknown comparator in '" + std::string(token) + "'");
        }
        clause.version = SemVer::parse(token);
        result.clauses.push_back(clause);
    }
    return result;
}

bool satisfies(const SemVer& v, const VersionClause& clause) noexcept {
    switch (clause.cmp) {
    case Comparator::ge: return v >= clause.version;
    case Comparator::gt: return v > clause.version;
    case Comparator::le: return v <= clause.version;
    case Comparator::lt: return v < clause.version;
    case Comparator::eq: return v == clause.version;
    }
    return false;
}

bool satisfies(const SemVer& v, const VersionConstraint& c) noexcept {
    for (const auto& clause : c.clauses) {
        if (!satisfies(v, clause)) return false;
    }
    return true;
}

} // namespace evalbench
