// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/manifest.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include <yaml-cpp/emitter.h>
#include <yaml-cpp/emittermanip.h>

#include "evalbench/error.hpp"
#include "yaml_tree.hpp"

namespace evalbench {

using detail::YamlNode;

std::string_view to_string(ElementType v) noexcept { return v == ElementType::float32 ? "float32" : "uint8"; }
std::string_view to_string(DataLayout v) noexcept { return v == DataLayout::nhwc ? "NHWC" : "NCHW"; }
std::string_view to_string(ColorMode v) noexcept { return v == ColorMode::rgb ? "RGB" : "BGR"; }
std::string_view to_string(ResizeMethod v) noexcept { return v == ResizeMethod::bilinear ? "bilinear" : "nearest"; }

std::string_view to_string(DeviceKind v) noexcept {
    switch (v) {
    case DeviceKind::cpu: return "cpu";
    case DeviceKind::gpu: return "gpu";
    case DeviceKind::fpga: return "fpga";
    }
    return "cpu";
}

std::string_view to_string(StepOp op) noexcept {
    switch (op) {
    case StepOp::decode: return "decode";
    case StepOp::resize: return "resize";
    case StepOp::normalize: return "normalize";
    case StepOp::argsort: return "argsort";
    }
    return "decode";
}

std::optional<ElementType> element_type_from(std::string_view s) noexcept {
    if (s == "float32") return ElementType::float32;
    if (s == "uint8") return ElementType::uint8;
    return std::nullopt;
}

std::optional<DeviceKind> device_kind_from(std::string_view s) noexcept {
    if (s == "cpu") return DeviceKind::cpu;
    if (s == "gpu") return DeviceKind::gpu;
    if (s == "fpga") return DeviceKind::fpga;
    return std::nullopt;
}

bool is_lower_hex_even(std::string_view s) noexcept {
    if (s.empty() || s.size() % 2 != 0) return false;
    for (char c : s) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
    throw Error(Errc::validation, what, path);
}

std::string join(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

const YamlNode& expect_mapping(const YamlNode& n, const std::string& path) {
    if (!n.is_mapping()) invalid(path, "expected a mapping");
    return n;
}

void check_keys(const YamlNode& map, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : map.entries) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) invalid(join(path, key), "unknown key");
    }
}

std::string scalar_of(const YamlNode& n, const std::string& path) {
    if (n.is_null()) return {};
    if (!n.is_scalar()) invalid(path, "expected a scalar");
    return n.scalar;
}

std::string required_string(const YamlNode& map, std::string_view key, const std::string& path) {
    const YamlNode* n = map.find(key);
    if (!n) invalid(join(path, std::string(key)), "required field missing");
    return scalar_of(*n, join(path, std::string(key)));
}

std::string optional_string(const YamlNode& map, std::string_view key, const std::string& path) {
    const YamlNode* n = map.find(key);
    return n ? scalar_of(*n, join(path, std::string(key))) : std::string{};
}

double parse_real(const YamlNode& n, const std::string& path) {
    std::string s = scalar_of(n, path);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        invalid(path, "expected a real number");
    }
    return v;
}

int parse_int(const YamlNode& n, const std::string& path) {
    std::string s = scalar_of(n, path);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) invalid(path, "expected an integer");
    return v;
}

bool parse_bool(const YamlNode& n, const std::string& path) {
    std::string s = scalar_of(n, path);
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    invalid(path, "expected a boolean");
}

SemVer parse_version_field(const YamlNode& n, const std::string& path) {
    try {
        return SemVer::parse(scalar_of(n, path));
    } catch (const Error&) {
        invalid(path, "expected a semantic version");
    }
}

ProcessingStep parse_step(const YamlNode& node, const std::string& path) {
    if (!node.is_mapping() || node.entries.size() != 1) invalid(path, "a step is a single-key mapping");
    const auto& [op, body] = node.entries.front();
    YamlNode empty;
    empty.kind = YamlNode::Kind::mapping;
    const YamlNode& params = body.is_null() ? empty : expect_mapping(body, path + "." + op);
    const std::string ppath = path + "." + op;

    if (op == "decode") {
        check_keys(params, ppath, {"data_layout", "color_mode"});
        DecodeParams p;
        if (const auto* v = params.find("data_layout")) {
            auto s = scalar_of(*v, ppath + ".data_layout");
            if (s == "NHWC") p.data_layout = DataLayout::nhwc;
            else if (s == "NCHW") p.data_layout = DataLayout::nchw;
            else invalid(ppath + ".data_layout", "expected NHWC or NCHW");
        }
        if (const auto* v = params.find("color_mode")) {
            auto s = scalar_of(*v, ppath + ".color_mode");
            if (s == "RGB") p.color_mode = ColorMode::rgb;
            else if (s == "BGR") p.color_mode = ColorMode::bgr;
            else invalid(ppath + ".color_mode", "expected RGB or BGR");
        }
        return ProcessingStep{p};
    }
    if (op == "resize") {
        check_keys(params, ppath, {"dimensions", "method", "keep_aspect_ratio"});
        ResizeParams p;
        const auto* dims = params.find("dimensions");
        if (!dims) invalid(ppath + ".dimensions", "required field missing");
        if (!dims->is_sequence() || dims->items.size() != 3) {
            invalid(ppath + ".dimensions", "expected [channels, height, width]");
        }
        for (std::size_t i = 0; i < 3; ++i) {
            p.dimensions[i] = parse_int(dims->items[i], index_path(ppath + ".dimensions", i));
            if (p.dimensions[i] <= 0) invalid(index_path(ppath + ".dimensions", i), "must be positive");
        }
        if (const auto* v = params.find("method")) {
            auto s = scalar_of(*v, ppath + ".method");
            if (s == "bilinear") p.method = ResizeMethod::bilinear;
            else if (s == "nearest") p.method = ResizeMethod::nearest;
            else invalid(ppath + ".method", "expected bilinear or nearest");
        }
        if (const auto* v = params.find("keep_aspect_ratio")) {
            p.keep_aspect_ratio = parse_bool(*v, ppath + ".keep_aspect_ratio");
        }
        return ProcessingStep{p};
    }
    if (op == "normalize") {
        check_keys(params, ppath, {"mean", "rescale"});
        NormalizeParams p;
        const auto* mean = params.find("mean");
        if (!mean) invalid(ppath + ".mean", "required field missing");
        if (!mean->is_sequence() || mean->items.empty()) invalid(ppath + ".mean", "expected a list of reals");
        for (std::size_t i = 0; i < mean->items.size(); ++i) {
            p.mean.push_back(parse_real(mean->items[i], index_path(ppath + ".mean", i)));
        }
        if (const auto* v = params.find("rescale")) {
            p.rescale = parse_real(*v, ppath + ".rescale");
            if (!(p.rescale > 0)) invalid(ppath + ".rescale", "must be positive");
        }
        return ProcessingStep{p};
    }
    if (op == "argsort") {
        check_keys(params, ppath, {"labels_url"});
        ArgsortParams p;
        p.labels_url = optional_string(params, "labels_url", ppath);
        return ProcessingStep{p};
    }
    throw Error(Errc::unsupported_step, "unknown step '" + op + "'", path);
}

std::vector<IoSpec> parse_io(const YamlNode& root, std::string_view key) {
    const std::string path(key);
    const YamlNode* list = root.find(key);
    if (!list) invalid(path, "required field missing");
    if (!list->is_sequence()) invalid(path, "expected a sequence");
    std::vector<IoSpec> out;
    for (std::size_t i = 0; i < list->items.size(); ++i) {
        const std::string ipath = index_path(path, i);
        const YamlNode& item = expect_mapping(list->items[i], ipath);
        check_keys(item, ipath, {"type", "layer_name", "element_type", "steps"});
        IoSpec spec;
        spec.modality = optional_string(item, "type", ipath);
        spec.layer_name = optional_string(item, "layer_name", ipath);
        if (const auto* et = item.find("element_type")) {
            auto parsed = element_type_from(scalar_of(*et, ipath + ".element_type"));
            if (!parsed) invalid(ipath + ".element_type", "expected float32 or uint8");
            spec.element_type = *parsed;
        }
        if (const auto* steps = item.find("steps"); steps && !steps->is_null()) {
            if (!steps->is_sequence()) invalid(ipath + ".steps", "expected a sequence");
            for (std::size_t s = 0; s < steps->items.size(); ++s) {
                spec.steps.push_back(parse_step(steps->items[s], index_path(ipath + ".steps", s)));
            }
        }
        out.push_back(std::move(spec));
    }
    return out;
}

void validate_io(const std::vector<IoSpec>& list, const std::string& key, bool is_input) {
    if (list.empty()) invalid(key, "at least one entry is required");
    for (std::size_t i = 0; i < list.size(); ++i) {
        for (std::size_t s = 0; s < list[i].steps.size(); ++s) {
            const bool output_only = list[i].steps[s].op() == StepOp::argsort;
            if (output_only == is_input) {
                invalid(index_path(index_path(key, i) + ".steps", s),
                        std::string(to_string(list[i].steps[s].op())) +
                            (is_input ? " is only allowed in output steps" : " is only allowed in input steps"));
            }
        }
    }
}

YamlNode parse_root(std::string_view text) {
    YamlNode root = detail::parse_yaml_subset(text);
    if (!root.is_mapping()) invalid("", "document must be a mapping");
    return root;
}

void emit_step(YAML::Emitter& out, const ProcessingStep& step) {
    out << YAML::BeginMap << YAML::Key << std::string(to_string(step.op())) << YAML::Value << YAML::BeginMap;
    std::visit(
        [&out](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, DecodeParams>) {
                out << YAML::Key << "data_layout" << YAML::Value << std::string(to_string(p.data_layout));
                out << YAML::Key << "color_mode" << YAML::Value << std::string(to_string(p.color_mode));
            } else if constexpr (std::is_same_v<T, ResizeParams>) {
                out << YAML::Key << "dimensions" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.dimensions[0]
                    << p.dimensions[1] << p.dimensions[2] << YAML::EndSeq;
                out << YAML::Key << "method" << YAML::Value << std::string(to_string(p.method));
                out << YAML::Key << "keep_aspect_ratio" << YAML::Value << p.keep_aspect_ratio;
            } else if constexpr (std::is_same_v<T, NormalizeParams>) {
                out << YAML::Key << "mean" << YAML::Value << YAML::Flow << YAML::BeginSeq;
                for (double m : p.mean) out << m;
                out << YAML::EndSeq;
                out << YAML::Key << "rescale" << YAML::Value << p.rescale;
            } else {
                out << YAML::Key << "labels_url" << YAML::Value << p.labels_url;
            }
        },
        step.params);
    out << YAML::EndMap << YAML::EndMap;
}

void emit_io(YAML::Emitter& out, const std::vector<IoSpec>& list) {
    out << YAML::BeginSeq;
    for (const auto& io : list) {
        out << YAML::BeginMap;
        out << YAML::Key << "type" << YAML::Value << YAML::DoubleQuoted << io.modality;
        out << YAML::Key << "layer_name" << YAML::Value << YAML::DoubleQuoted << io.layer_name;
        out << YAML::Key << "element_type" << YAML::Value << std::string(to_string(io.element_type));
        out << YAML::Key << "steps" << YAML::Value << YAML::BeginSeq;
        for (const auto& step : io.steps) emit_step(out, step);
        out << YAML::EndSeq << YAML::EndMap;
    }
    out << YAML::EndSeq;
}

} // namespace

void validate(const ModelManifest& m) {
    if (m.name.empty()) invalid("name", "must be nonempty");
    if (m.framework.name.empty()) invalid("framework.name", "must be nonempty");
    validate_io(m.inputs, "inputs", true);
    validate_io(m.outputs, "outputs", false);
    if (m.model_source.checksum && !is_lower_hex_even(*m.model_source.checksum)) {
        invalid("model.checksum", "must be lowercase hex of even length");
    }
    for (const auto& io : m.inputs) {
        for (const auto& step : io.steps) {
            if (const auto* n = std::get_if<NormalizeParams>(&step.params); n && !(n->rescale > 0)) {
                invalid("inputs", "normalize rescale must be positive");
            }
        }
    }
}

ModelManifest parse_model_manifest(std::string_view text) {
    const YamlNode root = parse_root(text);
    check_keys(root, "",
               {"name", "version", "description", "framework", "inputs", "outputs", "preprocess", "postprocess",
                "model", "attributes"});
    ModelManifest m;
    m.name = required_string(root, "name", "");
    const YamlNode* version = root.find("version");
    if (!version) invalid("version", "required field missing");
    m.version = parse_version_field(*version, "version");
    m.description = optional_string(root, "description", "");

    const YamlNode* fw = root.find("framework");
    if (!fw) invalid("framework", "required field missing");
    expect_mapping(*fw, "framework");
    check_keys(*fw, "framework", {"name", "version"});
    m.framework.name = required_string(*fw, "name", "framework");
    try {
        m.framework.constraint = parse_constraint(optional_string(*fw, "version", "framework"));
    } catch (const Error& e) {
        invalid("framework.version", e.what());
    }

    m.inputs = parse_io(root, "inputs");
    m.outputs = parse_io(root, "outputs");

    if (const auto* pre = root.find("preprocess"); pre && !pre->is_null()) {
        m.preprocess_code = pre->is_scalar() ? pre->scalar : pre->flow();
    }
    if (const auto* post = root.find("postprocess"); post && !post->is_null()) {
        m.postprocess_code = post->is_scalar() ? post->scalar : post->flow();
    }

    if (const auto* src = root.find("model"); src && !src->is_null()) {
        expect_mapping(*src, "model");
        check_keys(*src, "model", {"base_url", "graph_path", "weights_path", "checksum"});
        m.model_source.base_url = optional_string(*src, "base_url", "model");
        m.model_source.graph_path = optional_string(*src, "graph_path", "model");
        if (src->find("weights_path")) m.model_source.weights_path = optional_string(*src, "weights_path", "model");
        if (src->find("checksum")) m.model_source.checksum = optional_string(*src, "checksum", "model");
    }

    if (const auto* attrs = root.find("attributes"); attrs && !attrs->is_null()) {
        expect_mapping(*attrs, "attributes");
        for (const auto& [k, v] : attrs->entries) {
            m.attributes[k] = v.is_scalar() ? v.scalar : v.is_null() ? std::string{} : v.flow();
        }
    }

    validate(m);
    return m;
}

FrameworkManifest parse_framework_manifest(std::string_view text) {
    const YamlNode root = parse_root(text);
    check_keys(root, "", {"name", "version", "description", "containers"});
    FrameworkManifest m;
    m.name = required_string(root, "name", "");
    if (m.name.empty()) invalid("name", "must be nonempty");
    const YamlNode* version = root.find("version");
    if (!version) invalid("version", "required field missing");
    m.version = parse_version_field(*version, "version");
    m.description = optional_string(root, "description", "");

    if (const auto* containers = root.find("containers"); containers && !containers->is_null()) {
        expect_mapping(*containers, "containers");
        for (const auto& [arch, devices] : containers->entries) {
            const std::string apath = "containers." + arch;
            expect_mapping(devices, apath);
            auto& slot = m.containers[arch];
            for (const auto& [device, image] : devices.entries) {
                auto kind = device_kind_from(device);
                if (!kind || *kind == DeviceKind::fpga) invalid(apath + "." + device, "device must be cpu or gpu");
                slot[*kind] = scalar_of(image, apath + "." + device);
            }
        }
    }
    return m;
}

std::string render_model_manifest(const ModelManifest& m) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << m.name;
    out << YAML::Key << "version" << YAML::Value << m.version.to_string();
    out << YAML::Key << "description" << YAML::Value << YAML::DoubleQuoted << m.description;
    out << YAML::Key << "framework" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << m.framework.name;
    out << YAML::Key << "version" << YAML::Value << YAML::DoubleQuoted << m.framework.constraint.to_string();
    out << YAML::EndMap;
    out << YAML::Key << "inputs" << YAML::Value;
    emit_io(out, m.inputs);
    out << YAML::Key << "outputs" << YAML::Value;
    emit_io(out, m.outputs);
    if (m.preprocess_code) out << YAML::Key << "preprocess" << YAML::Value << YAML::DoubleQuoted << *m.preprocess_code;
    if (m.postprocess_code) {
        out << YAML::Key << "postprocess" << YAML::Value << YAML::DoubleQuoted << *m.postprocess_code;
    }
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "base_url" << YAML::Value << YAML::DoubleQuoted << m.model_source.base_url;
    out << YAML::Key << "graph_path" << YAML::Value << YAML::DoubleQuoted << m.model_source.graph_path;
    if (m.model_source.weights_path) {
        out << YAML::Key << "weights_path" << YAML::Value << YAML::DoubleQuoted << *m.model_source.weights_path;
    }
    if (m.model_source.checksum) {
        out << YAML::Key << "checksum" << YAML::Value << YAML::DoubleQuoted << *m.model_source.checksum;
    }
    out << YAML::EndMap;
    if (!m.attributes.empty()) {
        out << YAML::Key << "attributes" << YAML::Value << YAML::BeginMap;
        for (const auto& [k, v] : m.attributes) out << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << v;
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string render_framework_manifest(const FrameworkManifest& m) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << m.name;
    out << YAML::Key << "version" << YAML::Value << m.version.to_string();
    out << YAML::Key << "description" << YAML::Value << YAML::DoubleQuoted << m.description;
    if (!m.containers.empty()) {
        out << YAML::Key << "containers" << YAML::Value << YAML::BeginMap;
        for (const auto& [arch, devices] : m.containers) {
            out << YAML::Key << arch << YAML::Value << YAML::BeginMap;
            for (const auto& [device, image] : devices) {
                out << YAML::Key << std::string(to_string(device)) << YAML::Value << YAML::DoubleQuoted << image;
            }
            out << YAML::EndMap;
        }
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

} // namespace evalbench
