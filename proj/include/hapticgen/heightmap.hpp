#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "hapticgen/errors.hpp"

namespace hapticgen {

// Row-major raster with interleaved channels, values in double precision.
template <std::size_t Channels>
struct Raster {
    static constexpr std::size_t channels = Channels;

    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    Raster() = default;
    Raster(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), values(w * h * Channels, fill) {}

    double& at(std::size_t x, std::size_t y, std::size_t c = 0) { return values[(y * width + x) * Channels + c]; }
    double at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return values[(y * width + x) * Channels + c];
    }

    bool same_size(std::size_t w, std::size_t h) const { return width == w && height == h; }
    bool operator==(const Raster&) const = default;
};

// Relative surface height, dimensionless.
using HeightMap = Raster<1>;
// Linear RGB in [0, 1].
using RgbImage = Raster<3>;

struct GrayU8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> values;

    bool operator==(const GrayU8&) const = default;
};

// Min-max normalize to 0..255 with round-half-up. A constant map gives all zeros.
inline GrayU8 normalize_minmax_u8(const HeightMap& h) {
    GrayU8 out{h.width, h.height, std::vector<std::uint8_t>(h.values.size(), 0)};
    if (h.values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(h.values.begin(), h.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < h.values.size(); ++i) {
        const double v = std::floor((h.values[i] - lo) / (hi - lo) * 255.0 + 0.5);
        out.values[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return out;
}

// Min-max normalize to [0, 1]. A constant map gives all zeros.
inline HeightMap normalize_minmax(const HeightMap& h) {
    HeightMap out(h.width, h.height, 0.0);
    if (h.values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(h.values.begin(), h.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < h.values.size(); ++i) out.values[i] = (h.values[i] - lo) / (hi - lo);
    return out;
}

namespace detail {

// Index into [0, n) under mirror reflection that does not repeat the edge
// sample (..., 2, 1, 0, 1, 2, ...).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
    return static_cast<std::size_t>(m);
}

}  // namespace detail

// Center crop along axes that shrink, reflect-pad along axes that grow.
template <std::size_t C>
Raster<C> crop_pad(const Raster<C>& src, std::size_t target_w, std::size_t target_h) {
    require(target_w >= 16 && target_h >= 16, "crop_pad: target dimensions must be >= 16");
    require(src.width > 0 && src.height > 0, "crop_pad: empty source");
    Raster<C> out(target_w, target_h);
    // Offset of the output origin inside the source; negative when padding.
    const auto origin = [](std::size_t from, std::size_t to) {
        return to > from ? -static_cast<std::ptrdiff_t>((to - from) / 2) : static_cast<std::ptrdiff_t>((from - to) / 2);
    };
    const std::ptrdiff_t ox = origin(src.width, target_w);
    const std::ptrdiff_t oy = origin(src.height, target_h);
    for (std::size_t y = 0; y < target_h; ++y) {
        const std::size_t sy = detail::reflect_index(static_cast<std::ptrdiff_t>(y) + oy, src.height);
        for (std::size_t x = 0; x < target_w; ++x) {
            const std::size_t sx = detail::reflect_index(static_cast<std::ptrdiff_t>(x) + ox, src.width);
            for (std::size_t c = 0; c < C; ++c) out.at(x, y, c) = src.at(sx, sy, c);
        }
    }
    return out;
}

// Rec.601 luminance of an RGB image.
inline HeightMap luminance(const RgbImage& img) {
    HeightMap out(img.width, img.height);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = 0.299 * img.values[3 * i] + 0.587 * img.values[3 * i + 1] + 0.114 * img.values[3 * i + 2];
    }
    return out;
}

// Grayscale-as-height baseline: luminance, min-max rescaled to [0, 1]. A
// uniform image has no range to rescale and keeps its luminance value.
inline HeightMap grayscale_proxy(const RgbImage& img) {
    HeightMap lum = luminance(img);
    if (lum.values.empty()) return lum;
    const auto [lo_it, hi_it] = std::minmax_element(lum.values.begin(), lum.values.end());
    if (!(*hi_it > *lo_it)) return lum;
    return normalize_minmax(lum);
}

}  // namespace hapticgen
