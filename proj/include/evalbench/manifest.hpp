// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "evalbench/semver.hpp"

namespace evalbench {

enum class ElementType { float32, uint8 };
enum class DataLayout { nhwc, nchw };
enum class ColorMode { rgb, bgr };
enum class ResizeMethod { bilinear, nearest };
enum class DeviceKind { cpu, gpu, fpga };

std::string_view to_string(ElementType v) noexcept;
std::string_view to_string(DataLayout v) noexcept;
std::string_view to_string(ColorMode v) noexcept;
std::string_view to_string(ResizeMethod v) noexcept;
std::string_view to_string(DeviceKind v) noexcept;
std::optional<ElementType> element_type_from(std::string_view s) noexcept;
std::optional<DeviceKind> device_kind_from(std::string_view s) noexcept;

struct DecodeParams {
    DataLayout data_layout = DataLayout::nhwc;
    ColorMode color_mode = ColorMode::rgb;
    friend bool operator==(const DecodeParams&, const DecodeParams&) = default;
};

struct ResizeParams {
    /// [channels, height, width]
    std::array<int, 3> dimensions{3, 1, 1};
    ResizeMethod method = ResizeMethod::bilinear;
    bool keep_aspect_ratio = false;
    friend bool operator==(const ResizeParams&, const ResizeParams&) = default;
};

struct NormalizeParams {
    std::vector<double> mean;
    double rescale = 1.0;
    friend bool operator==(const NormalizeParams&, const NormalizeParams&) = default;
};

struct ArgsortParams {
    /// Empty means labels are the class indices.
    std::string labels_url;
    friend bool operator==(const ArgsortParams&, const ArgsortParams&) = default;
};

enum class StepOp { decode, resize, normalize, argsort };
std::string_view to_string(StepOp op) noexcept;

struct ProcessingStep {
    std::variant<DecodeParams, ResizeParams, NormalizeParams, ArgsortParams> params;

    StepOp op() const noexcept { return static_cast<StepOp>(params.index()); }
    friend bool operator==(const ProcessingStep&, const ProcessingStep&) = default;
};

struct IoSpec {
    std::string modality;
    std::string layer_name;
    ElementType element_type = ElementType::float32;
    std::vector<ProcessingStep> steps;
    friend bool operator==(const IoSpec&, const IoSpec&) = default;
};

struct FrameworkRequirement {
    std::string name;
    VersionConstraint constraint;
    friend bool operator==(const FrameworkRequirement&, const FrameworkRequirement&) = default;
};

struct ModelSource {
    std::string base_url;
    std::string graph_path;
    std::optional<std::string> weights_path;
    /// SHA-256, lowercase hex.
    std::optional<std::string> checksum;
    friend bool operator==(const ModelSource&, const ModelSource&) = default;
};

struct ModelManifest {
    std::string name;
    SemVer version;
    std::string description;
    FrameworkRequirement framework;
    std::vector<IoSpec> inputs;
    std::vector<IoSpec> outputs;
    ModelSource model_source;
    std::map<std::string, std::string> attributes;
    /// Custom code blocks are kept verbatim and refused at execution time.
    std::optional<std::string> preprocess_code;
    std::optional<std::string> postprocess_code;

    friend bool operator==(const ModelManifest&, const ModelManifest&) = default;
};

struct FrameworkManifest {
    std::string name;
    SemVer version;
    std::string description;
    /// architecture -> device -> container image reference (never dereferenced)
    std::map<std::string, std::map<DeviceKind, std::string>> containers;

    friend bool operator==(const FrameworkManifest&, const FrameworkManifest&) = default;
};

/// Parses a YAML-subset document. Throws Error with Errc::syntax,
/// Errc::validation (with field path) or Errc::unsupported_step.
ModelManifest parse_model_manifest(std::string_view text);
FrameworkManifest parse_framework_manifest(std::string_view text);

std::string render_model_manifest(const ModelManifest& m);
std::string render_framework_manifest(const FrameworkManifest& m);

/// Re-checks every invariant; parse_* already calls this.
void validate(const ModelManifest& m);

bool is_lower_hex_even(std::string_view s) noexcept;

} // namespace evalbench
