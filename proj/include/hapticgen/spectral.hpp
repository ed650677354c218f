#pragma once

// 2D power spectra of height fields and the log-PSD mean-squared-error metric.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "hapticgen/errors.hpp"
#include "hapticgen/heightmap.hpp"

namespace hapticgen {

using Complex = std::complex<double>;

inline constexpr double kLogPsdFloor = 1e-10;

inline bool is_power_of_two(std::size_t n) { return n > 0 && std::has_single_bit(n); }

// In-place iterative radix-2 FFT (forward, unnormalized).
inline void fft_inplace(std::vector<Complex>& a) {
    const std::size_t n = a.size();
    require(is_power_of_two(n), "fft: length " + std::to_string(n) + " is not a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                // Twiddles evaluated directly rather than by recurrence to keep
                // rounding error at the level of a single cos/sin.
                const Complex w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
                const Complex u = a[i + k];
                const Complex v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

// Row-major H x W complex spectrum.
struct Spectrum {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Complex> bins;

    const Complex& at(std::size_t kx, std::size_t ky) const { return bins[ky * width + kx]; }
};

// Unnormalized forward 2D DFT via row-column radix-2 FFT.
inline Spectrum dft2(const HeightMap& field) {
    require(is_power_of_two(field.width) && is_power_of_two(field.height),
            "dft2: dimensions " + std::to_string(field.width) + "x" + std::to_string(field.height) +
                " are not powers of two");
    const std::size_t W = field.width, H = field.height;
    Spectrum s{W, H, std::vector<Complex>(W * H)};
    std::vector<Complex> line(W);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) line[x] = field.values[y * W + x];
        fft_inplace(line);
        std::copy(line.begin(), line.end(), s.bins.begin() + static_cast<std::ptrdiff_t>(y * W));
    }
    line.resize(H);
    for (std::size_t x = 0; x < W; ++x) {
        for (std::size_t y = 0; y < H; ++y) line[y] = s.bins[y * W + x];
        fft_inplace(line);
        for (std::size_t y = 0; y < H; ++y) s.bins[y * W + x] = line[y];
    }
    return s;
}

// PSD[k] = |DFT[k]|^2 / (H W). With remove_dc the field mean is subtracted
// before the transform.
inline HeightMap psd(const HeightMap& field, bool remove_dc = true) {
    HeightMap centered = field;
    if (remove_dc && !field.values.empty()) {
        double mean = 0.0;
        for (double v : field.values) mean += v;
        mean /= static_cast<double>(field.values.size());
        for (double& v : centered.values) v -= mean;
    }
    const Spectrum s = dft2(centered);
    HeightMap out(field.width, field.height);
    const double norm = static_cast<double>(field.width * field.height);
    for (std::size_t i = 0; i < s.bins.size(); ++i) out.values[i] = std::norm(s.bins[i]) / norm;
    return out;
}

// ln(PSD + 1e-10) of the mean-subtracted field.
inline HeightMap log_psd(const HeightMap& field) {
    HeightMap p = psd(field, true);
    for (double& v : p.values) v = std::log(v + kLogPsdFloor);
    return p;
}

// Mean over all bins of the squared log-PSD difference.
inline double psd_mse(const HeightMap& a, const HeightMap& b) {
    require(a.width == b.width && a.height == b.height,
            "psd_mse: dimension mismatch " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                std::to_string(b.width) + "x" + std::to_string(b.height));
    const HeightMap la = log_psd(a), lb = log_psd(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < la.values.size(); ++i) {
        const double d = la.values[i] - lb.values[i];
        acc += d * d;
    }
    return acc / static_cast<double>(la.values.size());
}

// Signed frequency index of DFT bin k out of n.
inline long signed_frequency(std::size_t k, std::size_t n) {
    return k < (n + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

// ln of the mean PSD over annuli of integer (rounded) radius, radii
// 0 .. min(H, W)/2 - 1.
inline std::vector<double> radial_psd(const HeightMap& field) {
    const HeightMap p = psd(field, true);
    const std::size_t bins = std::min(field.width, field.height) / 2;
    std::vector<double> sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t ky = 0; ky < field.height; ++ky) {
        const double fy = static_cast<double>(signed_frequency(ky, field.height));
        for (std::size_t kx = 0; kx < field.width; ++kx) {
            const double fx = static_cast<double>(signed_frequency(kx, field.width));
            const auto r = static_cast<std::size_t>(std::lround(std::hypot(fx, fy)));
            if (r < bins) {
                sum[r] += p.values[ky * field.width + kx];
                ++count[r];
            }
        }
    }
    std::vector<double> out(bins);
    for (std::size_t r = 0; r < bins; ++r) out[r] = std::log(sum[r] / static_cast<double>(count[r]) + kLogPsdFloor);
    return out;
}

struct PeakBin {
    long fx = 0;
    long fy = 0;
    double power = 0.0;
};

// Strongest non-DC bin of the mean-subtracted PSD, folded to fx >= 0 (the
// spectrum of a real field is point-symmetric).
inline PeakBin dominant_bin(const HeightMap& field) {
    const HeightMap p = psd(field, true);
    PeakBin best{0, 0, -1.0};
    for (std::size_t ky = 0; ky < field.height; ++ky) {
        for (std::size_t kx = 0; kx < field.width; ++kx) {
            if (kx == 0 && ky == 0) continue;
            const double v = p.values[ky * field.width + kx];
            if (v > best.power) {
                long fx = signed_frequency(kx, field.width), fy = signed_frequency(ky, field.height);
                if (fx < 0 || (fx == 0 && fy < 0)) {
                    fx = -fx;
                    fy = -fy;
                }
                best = {fx, fy, v};
            }
        }
    }
    return best;
}

// Index of the strongest non-DC bin of a real 1-D series (mean removed),
// searched over 1 .. n/2 of the zero-padded power-of-two transform.
inline std::size_t dominant_frequency_bin(const std::vector<double>& series, std::size_t fft_size) {
    require(is_power_of_two(fft_size) && fft_size >= series.size(), "dominant_frequency_bin: bad FFT size");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(series.size(), 1));
    std::vector<Complex> buf(fft_size, Complex{0.0, 0.0});
    for (std::size_t i = 0; i < series.size(); ++i) buf[i] = series[i] - mean;
    fft_inplace(buf);
    std::size_t best = 1;
    for (std::size_t k = 1; k <= fft_size / 2; ++k)
        if (std::norm(buf[k]) > std::norm(buf[best])) best = k;
    return best;
}

// Largest power of two not exceeding n.
inline std::size_t floor_power_of_two(std::size_t n) { return n == 0 ? 0 : std::bit_floor(n); }

// Center-crops to power-of-two dimensions so the field can be transformed.
inline HeightMap crop_to_power_of_two(const HeightMap& h) {
    const std::size_t w = floor_power_of_two(h.width), ht = floor_power_of_two(h.height);
    if (w == h.width && ht == h.height) return h;
    HeightMap out(w, ht);
    const std::size_t ox = (h.width - w) / 2, oy = (h.height - ht) / 2;
    for (std::size_t y = 0; y < ht; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(x, y) = h.at(x + ox, y + oy);
    return out;
}

}  // namespace hapticgen
