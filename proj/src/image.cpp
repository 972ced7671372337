// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "evalbench/error.hpp"

namespace evalbench {

namespace {

struct Rgb8 {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> pixels;  // row-major RGB
};

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

Rgb8 decode_ppm(std::string_view bytes) {
    std::size_t pos = 2;
    auto next_int = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && is_space(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') throw Error(Errc::decode, "malformed PPM header");
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > 1'000'000) throw Error(Errc::decode, "PPM dimension too large");
        }
        return v;
    };
    Rgb8 img;
    img.width = static_cast<int>(next_int());
    img.height = static_cast<int>(next_int());
    const long maxval = next_int();
    if (img.width <= 0 || img.height <= 0) throw Error(Errc::decode, "PPM dimensions must be positive");
    if (maxval <= 0 || maxval > 255) throw Error(Errc::decode, "only 8-bit PPM is supported");
    if (pos >= bytes.size() || !is_space(static_cast<unsigned char>(bytes[pos]))) {
        throw Error(Errc::decode, "malformed PPM header");
    }
    ++pos;
    const std::size_t need = std::size_t(img.width) * std::size_t(img.height) * 3;
    if (bytes.size() - pos < need) throw Error(Errc::decode, "truncated PPM pixel data");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    if (maxval != 255) {
        for (auto& p : img.pixels) p = static_cast<unsigned char>(std::min<long>(255, std::lround(p * 255.0 / maxval)));
    }
    return img;
}

Rgb8 decode_png(std::string_view bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw Error(Errc::decode, std::string("PNG: ") + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    Rgb8 img;
    img.width = static_cast<int>(image.width);
    img.height = static_cast<int>(image.height);
    img.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(Errc::decode, "PNG: " + msg);
    }
    return img;
}

/// Layout-aware view of an image tensor.
struct Dims {
    std::int64_t c = 0, h = 0, w = 0;
    DataLayout layout = DataLayout::nhwc;

    std::size_t at(std::int64_t ch, std::int64_t y, std::int64_t x) const {
        return layout == DataLayout::nhwc ? static_cast<std::size_t>((y * w + x) * c + ch)
                                          : static_cast<std::size_t>((ch * h + y) * w + x);
    }
    std::vector<std::int64_t> shape() const {
        return layout == DataLayout::nhwc ? std::vector<std::int64_t>{h, w, c} : std::vector<std::int64_t>{c, h, w};
    }
};

Dims dims_of(const TensorValue& t, DataLayout layout) {
    t.check();
    if (t.shape.size() != 3) throw Error(Errc::shape_mismatch, "image tensors are rank 3");
    Dims d;
    d.layout = layout;
    if (layout == DataLayout::nhwc) {
        d.h = t.shape[0], d.w = t.shape[1], d.c = t.shape[2];
    } else {
        d.c = t.shape[0], d.h = t.shape[1], d.w = t.shape[2];
    }
    return d;
}

TensorValue plain_resize(const TensorValue& in, const Dims& src, std::int64_t oh, std::int64_t ow, ResizeMethod method) {
    Dims dst{src.c, oh, ow, src.layout};
    TensorValue out;
    out.element_type = in.element_type;
    out.shape = dst.shape();
    out.data.assign(static_cast<std::size_t>(src.c * oh * ow), 0.0f);
    const double sy = double(src.h) / double(oh), sx = double(src.w) / double(ow);
    for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
            if (method == ResizeMethod::nearest) {
                auto iy = std::min<std::int64_t>(src.h - 1, static_cast<std::int64_t>(std::floor((y + 0.5) * sy)));
                auto ix = std::min<std::int64_t>(src.w - 1, static_cast<std::int64_t>(std::floor((x + 0.5) * sx)));
                for (std::int64_t c = 0; c < src.c; ++c) out.data[dst.at(c, y, x)] = in.data[src.at(c, iy, ix)];
                continue;
            }
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.h - 1));
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.w - 1));
            const auto y0 = static_cast<std::int64_t>(std::floor(fy)), x0 = static_cast<std::int64_t>(std::floor(fx));
            const auto y1 = std::min(y0 + 1, src.h - 1), x1 = std::min(x0 + 1, src.w - 1);
            const double wy = fy - double(y0), wx = fx - double(x0);
            for (std::int64_t c = 0; c < src.c; ++c) {
                const double top = in.data[src.at(c, y0, x0)] * (1 - wx) + in.data[src.at(c, y0, x1)] * wx;
                const double bottom = in.data[src.at(c, y1, x0)] * (1 - wx) + in.data[src.at(c, y1, x1)] * wx;
                out.data[dst.at(c, y, x)] = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

} // namespace

TensorValue decode_image(std::string_view bytes, const DecodeParams& params) {
    Rgb8 img;
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') img = decode_ppm(bytes);
    else if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 0x89 && bytes.substr(1, 3) == "PNG")
        img = decode_png(bytes);
    else throw Error(Errc::decode, "unsupported image format (expected PPM P6 or PNG)");

    Dims d{3, img.height, img.width, params.data_layout};
    TensorValue out;
    out.shape = d.shape();
    out.data.resize(img.pixels.size());
    for (std::int64_t y = 0; y < d.h; ++y) {
        for (std::int64_t x = 0; x < d.w; ++x) {
            const auto* px = &img.pixels[static_cast<std::size_t>((y * d.w + x) * 3)];
            for (int c = 0; c < 3; ++c) {
                const int src_c = params.color_mode == ColorMode::rgb ? c : 2 - c;
                out.data[d.at(c, y, x)] = static_cast<float>(px[src_c]);
            }
        }
    }
    return out;
}

TensorValue decode_raw_floats(std::string_view bytes) {
    if (bytes.empty() || bytes.size() % 4 != 0) throw Error(Errc::decode, "raw item is not a whole number of float32 values");
    TensorValue out;
    out.shape = {static_cast<std::int64_t>(bytes.size() / 4)};
    out.data.resize(bytes.size() / 4);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
        const std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                                   std::uint32_t(p[3]) << 24;
        std::memcpy(&out.data[i], &bits, 4);
    }
    return out;
}

TensorValue resize_image(const TensorValue& image, const ResizeParams& params, DataLayout layout) {
    const Dims src = dims_of(image, layout);
    const auto [tc, th, tw] = params.dimensions;
    if (tc != src.c) {
        throw Error(Errc::shape_mismatch, "resize expects " + std::to_string(tc) + " channels, image has " +
                                              std::to_string(src.c));
    }
    if (th == src.h && tw == src.w) return image;
    if (!params.keep_aspect_ratio) return plain_resize(image, src, th, tw, params.method);

    const double scale = std::min(double(th) / double(src.h), double(tw) / double(src.w));
    const auto nh = std::clamp<std::int64_t>(std::llround(src.h * scale), 1, th);
    const auto nw = std::clamp<std::int64_t>(std::llround(src.w * scale), 1, tw);
    const TensorValue fitted = plain_resize(image, src, nh, nw, params.method);
    const Dims fd{src.c, nh, nw, layout};
    const Dims od{src.c, th, tw, layout};
    TensorValue out;
    out.element_type = image.element_type;
    out.shape = od.shape();
    out.data.assign(static_cast<std::size_t>(src.c * th * tw), 0.0f);
    const std::int64_t oy = (th - nh) / 2, ox = (tw - nw) / 2;
    for (std::int64_t c = 0; c < src.c; ++c)
        for (std::int64_t y = 0; y < nh; ++y)
            for (std::int64_t x = 0; x < nw; ++x) out.data[od.at(c, y + oy, x + ox)] = fitted.data[fd.at(c, y, x)];
    return out;
}

TensorValue normalize_image(const TensorValue& image, const NormalizeParams& params, DataLayout layout) {
    if (params.rescale == 0.0) throw Error(Errc::validation, "rescale must be nonzero", "normalize.rescale");
    // Rank-1 raw tensors are treated as a single channel unless the mean says otherwise.
    Dims d;
    if (image.shape.size() == 3) d = dims_of(image, layout);
    else {
        image.check();
        d = Dims{1, 1, static_cast<std::int64_t>(image.data.size()), DataLayout::nchw};
    }
    if (params.mean.size() != static_cast<std::size_t>(d.c)) {
        throw Error(Errc::validation, "mean has " + std::to_string(params.mean.size()) + " entries but the image has " +
                                          std::to_string(d.c) + " channels",
                    "normalize.mean");
    }
    // float32 arithmetic so a pixel equal to its channel mean maps to exactly 0.
    TensorValue out = image;
    for (std::int64_t c = 0; c < d.c; ++c)
        for (std::int64_t y = 0; y < d.h; ++y)
            for (std::int64_t x = 0; x < d.w; ++x) {
                auto& v = out.data[d.at(c, y, x)];
                v = (v - static_cast<float>(params.mean[static_cast<std::size_t>(c)])) / static_cast<float>(params.rescale);
            }
    return out;
}

std::vector<Prediction> argsort_scores(const std::vector<float>& scores, const std::vector<std::string>& labels,
                                       std::optional<std::size_t> top_k) {
    if (!labels.empty() && labels.size() != scores.size()) {
        throw Error(Errc::validation, std::to_string(labels.size()) + " labels for " + std::to_string(scores.size()) +
                                          " scores",
                    "argsort.labels_url");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    if (top_k && *top_k < idx.size()) idx.resize(*top_k);
    std::vector<Prediction> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(Prediction{labels.empty() ? std::to_string(i) : labels[i], double(scores[i])});
    return out;
}

std::vector<std::string> parse_labels(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.emplace_back(line);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

std::string encode_ppm(int width, int height, const std::vector<unsigned char>& rgb) {
    if (width <= 0 || height <= 0 || rgb.size() != std::size_t(width) * std::size_t(height) * 3) {
        throw Error(Errc::validation, "pixel buffer does not match the image size");
    }
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    return out;
}

} // namespace evalbench
