// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "yaml_tree.hpp"

#include <sstream>

#include <yaml-cpp/eventhandler.h>
#include <yaml-cpp/exceptions.h>
#include <yaml-cpp/parser.h>

#include "evalbench/error.hpp"

namespace evalbench::detail {

namespace {

bool plain_safe(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c == ',' || c == '[' || c == ']' || c == '{' || c == '}' || c == ':' || c == '#' || c == '"' ||
            c == '\'' || c == '\n') {
            return false;
        }
    }
    return s.front() != ' ' && s.back() != ' ';
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

class TreeBuilder final : public YAML::EventHandler {
public:
    YamlNode take_root() { return std::move(root_); }
    bool has_root() const noexcept { return has_root_; }

    void OnDocumentStart(const YAML::Mark&) override {}
    void OnDocumentEnd() override {}

    void OnNull(const YAML::Mark& mark, YAML::anchor_t anchor) override {
        check_anchor(anchor, mark);
        YamlNode n;
        n.line = mark.line + 1;
        push_value(std::move(n), mark);
    }

    void OnAlias(const YAML::Mark& mark, YAML::anchor_t) override {
        fail("aliases are not supported", mark);
    }

    void OnScalar(const YAML::Mark& mark, const std::string& tag, YAML::anchor_t anchor,
                  const std::string& value) override {
        check_anchor(anchor, mark);
        check_tag(tag, mark);
        YamlNode n;
        n.kind = YamlNode::Kind::scalar;
        n.scalar = value;
        n.line = mark.line + 1;
        push_value(std::move(n), mark);
    }

    void OnSequenceStart(const YAML::Mark& mark, const std::string& tag, YAML::anchor_t anchor,
                         YAML::EmitterStyle::value) override {
        check_anchor(anchor, mark);
        check_tag(tag, mark);
        open(YamlNode::Kind::sequence, mark);
    }
    void OnSequenceEnd() override { close(); }

    void OnMapStart(const YAML::Mark& mark, const std::string& tag, YAML::anchor_t anchor,
                    YAML::EmitterStyle::value) override {
        check_anchor(anchor, mark);
        check_tag(tag, mark);
        open(YamlNode::Kind::mapping, mark);
    }
    void OnMapEnd() override { close(); }

    void OnAnchor(const YAML::Mark& mark, const std::string&) override {
        fail("anchors are not supported", mark);
    }

private:
    struct Frame {
        YamlNode node;
        bool expecting_key = true;
        std::string pending_key;
    };

    [[noreturn]] static void fail(const std::string& what, const YAML::Mark& mark) {
        throw Error(Errc::syntax, what + " (line " + std::to_string(mark.line + 1) + ")");
    }

    static void check_anchor(YAML::anchor_t anchor, const YAML::Mark& mark) {
        if (anchor != YAML::NullAnchor) fail("anchors are not supported", mark);
    }

    static void check_tag(const std::string& tag, const YAML::Mark& mark) {
        if (!tag.empty() && tag != "?" && tag != "!") fail("tag '" + tag + "' is not supported", mark);
    }

    void open(YamlNode::Kind kind, const YAML::Mark& mark) {
        if (!stack_.empty() && stack_.back().node.is_mapping() && stack_.back().expecting_key) {
            fail("complex mapping keys are not supported", mark);
        }
        if (stack_.size() > 64) fail("nesting too deep", mark);
        Frame f;
        f.node.kind = kind;
        f.node.line = mark.line + 1;
        stack_.push_back(std::move(f));
    }

    void close() {
        Frame f = std::move(stack_.back());
        stack_.pop_back();
        push_value(std::move(f.node), YAML::Mark{});
    }

    void push_value(YamlNode n, const YAML::Mark& mark) {
        if (stack_.empty()) {
            if (has_root_) fail("multiple documents are not supported", mark);
            root_ = std::move(n);
            has_root_ = true;
            return;
        }
        Frame& top = stack_.back();
        if (top.node.is_sequence()) {
            top.node.items.push_back(std::move(n));
            return;
        }
        if (top.expecting_key) {
            if (!n.is_scalar() && !n.is_null()) fail("mapping keys must be scalars", mark);
            for (const auto& [k, v] : top.node.entries) {
                if (k == n.scalar) fail("duplicate key '" + n.scalar + "'", mark);
            }
            top.pending_key = n.scalar;
            top.expecting_key = false;
        } else {
            top.node.entries.emplace_back(std::move(top.pending_key), std::move(n));
            top.expecting_key = true;
        }
    }

    std::vector<Frame> stack_;
    YamlNode root_;
    bool has_root_ = false;
};

} // namespace

const YamlNode* YamlNode::find(std::string_view key) const noexcept {
    for (const auto& [k, v] : entries) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::string YamlNode::flow() const {
    switch (kind) {
    case Kind::null: return "~";
    case Kind::scalar: return plain_safe(scalar) ? scalar : quote(scalar);
    case Kind::sequence: {
        std::string out = "[";
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) out += ", ";
            out += items[i].flow();
        }
        return out + "]";
    }
    case Kind::mapping: {
        std::string out = "{";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (i) out += ", ";
            out += (plain_safe(entries[i].first) ? entries[i].first : quote(entries[i].first)) + ": " +
                   entries[i].second.flow();
        }
        return out + "}";
    }
    }
    return {};
}

YamlNode parse_yaml_subset(std::string_view text) {
    std::istringstream in{std::string(text)};
    TreeBuilder builder;
    try {
        YAML::Parser parser(in);
        while (parser.HandleNextDocument(builder)) {
        }
    } catch (const YAML::Exception& e) {
        throw Error(Errc::syntax, e.what());
    }
    if (!builder.has_root()) throw Error(Errc::syntax, "empty document");
    return builder.take_root();
}

} // namespace evalbench::detail
