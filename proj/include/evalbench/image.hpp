// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors
//
// Built-in pre- and post-processing steps.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evalbench/manifest.hpp"
#include "evalbench/predictor.hpp"

namespace evalbench {

/// Decodes PPM (P6, 8-bit) or PNG into float32 values in [0, 255], shaped
/// [H, W, 3] for NHWC or [3, H, W] for NCHW. Throws Error(Errc::decode).
TensorValue decode_image(std::string_view bytes, const DecodeParams& params);

/// Interprets raw bytes as little-endian float32 values, shape [n].
TensorValue decode_raw_floats(std::string_view bytes);

/// Resizes an image tensor to dimensions [c, h, w]. Bilinear uses half-pixel
/// centers (align_corners = false). With keep_aspect_ratio the image is scaled
/// to fit and centered on a zero canvas.
TensorValue resize_image(const TensorValue& image, const ResizeParams& params, DataLayout layout);

/// out = (in - mean[c]) / rescale per channel. Throws ValidationError when the
/// mean list does not match the channel count or rescale is zero.
TensorValue normalize_image(const TensorValue& image, const NormalizeParams& params, DataLayout layout);

/// Ranked (label, score) pairs, descending by score, ties by ascending index.
/// Empty labels mean index labels. Throws ValidationError on a count mismatch.
std::vector<Prediction> argsort_scores(const std::vector<float>& scores, const std::vector<std::string>& labels,
                                       std::optional<std::size_t> top_k = std::nullopt);

/// One label per line; a trailing newline is ignored.
std::vector<std::string> parse_labels(std::string_view text);

/// Binary PPM (P6) encoder for test fixtures and synthetic workloads.
std::string encode_ppm(int width, int height, const std::vector<unsigned char>& rgb);

} // namespace evalbench
