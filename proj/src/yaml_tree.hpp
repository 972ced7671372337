// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace evalbench::detail {

/// Document tree for the YAML subset accepted in manifests: mappings,
/// sequences and scalars. Anchors, aliases and custom tags are refused.
struct YamlNode {
    enum class Kind { null, scalar, sequence, mapping };

    Kind kind = Kind::null;
    std::string scalar;
    int line = 0;
    std::vector<YamlNode> items;
    std::vector<std::pair<std::string, YamlNode>> entries;

    bool is_null() const noexcept { return kind == Kind::null; }
    bool is_scalar() const noexcept { return kind == Kind::scalar; }
    bool is_sequence() const noexcept { return kind == Kind::sequence; }
    bool is_mapping() const noexcept { return kind == Kind::mapping; }

    const YamlNode* find(std::string_view key) const noexcept;

    /// Compact flow-style text, e.g. "[[code]]" or "{name: ImageNet}".
    std::string flow() const;
};

/// Throws Error(Errc::syntax) on malformed input or forbidden constructs.
YamlNode parse_yaml_subset(std::string_view text);

} // namespace evalbench::detail
