// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace evalbench {

struct SemVer {
    std::uint64_t major = 0;
    std::uint64_t minor = 0;
    std::uint64_t patch = 0;

    friend auto operator<=>(const SemVer&, const SemVer&) = default;

    std::string to_string() const;
    /// Accepts "X.Y.Z" and "X.Y" (patch zero-filled). Throws Error(Errc::syntax).
    static SemVer parse(std::string_view text);
};

enum class Comparator { ge, gt, le, lt, eq };

std::string_view comparator_symbol(Comparator c) noexcept;

struct VersionClause {
    Comparator cmp = Comparator::eq;
    SemVer version;

    friend bool operator==(const VersionClause&, const VersionClause&) = default;
};

/// Conjunction of clauses; an empty list matches every version.
struct VersionConstraint {
    std::vector<VersionClause> clauses;

    bool matches_any() const noexcept { return clauses.empty(); }
    std::string to_string() const;

    friend bool operator==(const VersionConstraint&, const VersionConstraint&) = default;
};

/// constraint := clause (WS clause)*; clause := cmp? version
VersionConstraint parse_constraint(std::string_view text);

bool satisfies(const SemVer& v, const VersionConstraint& c) noexcept;
bool satisfies(const SemVer& v, const VersionClause& clause) noexcept;

} // namespace evalbench
