#pragma once

// Per-pair log-PSD MSE reports: summary, CSV, bar-chart pixmap, bin edges.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "hapticgen/dataset_io.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/heightmap.hpp"
#include "hapticgen/spectral.hpp"

namespace hapticgen {

inline constexpr std::size_t kHistogramBins = 20;

struct SpectralReport {
    std::vector<std::string> ids;
    std::vector<double> per_sample_mse;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> bin_edges;      // kHistogramBins + 1 edges over [0, max]
    std::vector<std::size_t> histogram;  // kHistogramBins counts
};

// Bins [0, max] into kHistogramBins equal bins, the last one closed. When
// max is 0 every sample lands in the first bin.
inline void fill_histogram(SpectralReport& r) {
    r.bin_edges.assign(kHistogramBins + 1, 0.0);
    r.histogram.assign(kHistogramBins, 0);
    for (std::size_t i = 0; i <= kHistogramBins; ++i)
        r.bin_edges[i] = r.max * static_cast<double>(i) / static_cast<double>(kHistogramBins);
    for (double v : r.per_sample_mse) {
        std::size_t b = 0;
        if (r.max > 0.0) b = std::min(kHistogramBins - 1, static_cast<std::size_t>(v / r.max * kHistogramBins));
        ++r.histogram[b];
    }
}

// Fields whose sides are not powers of two are center-cropped first.
inline SpectralReport eval_report(const std::map<std::string, HeightMap>& generated,
                                  const std::map<std::string, HeightMap>& reference) {
    require(!generated.empty(), "eval_report: no generated height maps");
    std::string missing;
    for (const auto& [id, h] : generated)
        if (!reference.count(id)) missing += (missing.empty() ? "" : ", ") + id;
    require(missing.empty(), "eval_report: no reference for ids: " + missing);

    SpectralReport r;
    for (const auto& [id, g] : generated) {
        const HeightMap& ref = reference.at(id);
        require(g.same_size(ref.width, ref.height), "eval_report: size mismatch for id " + id);
        r.ids.push_back(id);
        r.per_sample_mse.push_back(psd_mse(crop_to_power_of_two(g), crop_to_power_of_two(ref)));
    }
    double sum = 0.0;
    for (double v : r.per_sample_mse) sum += v;
    r.mean = sum / static_cast<double>(r.per_sample_mse.size());
    const auto [lo, hi] = std::minmax_element(r.per_sample_mse.begin(), r.per_sample_mse.end());
    r.min = *lo;
    r.max = *hi;
    fill_histogram(r);
    return r;
}

inline std::string encode_report_csv(const SpectralReport& r) {
    std::string out = "id,psd_mse\n";
    char buf[64];
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", r.per_sample_mse[i]);
        out += r.ids[i] + "," + buf + "\n";
    }
    return out;
}

inline std::string encode_bin_edges(const SpectralReport& r) {
    std::string out = "bin,lower,upper,count\n";
    char buf[128];
    for (std::size_t b = 0; b < r.histogram.size(); ++b) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu\n", b, r.bin_edges[b], r.bin_edges[b + 1], r.histogram[b]);
        out += buf;
    }
    return out;
}

// Bar chart on white: one dark bar per bin, heights relative to the fullest bin.
inline RgbImage render_histogram(const SpectralReport& r, std::size_t bar_width = 16, std::size_t plot_height = 160) {
    const std::size_t margin = 8, gap = 2;
    const std::size_t bins = r.histogram.size();
    RgbImage img(2 * margin + bins * (bar_width + gap), plot_height + 2 * margin, 1.0);
    const std::size_t peak = bins ? *std::max_element(r.histogram.begin(), r.histogram.end()) : 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t h = peak ? r.histogram[b] * plot_height / peak : 0;
        const std::size_t x0 = margin + b * (bar_width + gap);
        for (std::size_t y = plot_height + margin - h; y < plot_height + margin; ++y)
            for (std::size_t x = x0; x < x0 + bar_width; ++x) {
                img.at(x, y, 0) = 0.15;
                img.at(x, y, 1) = 0.3;
                img.at(x, y, 2) = 0.55;
            }
    }
    // baseline
    for (std::size_t x = margin / 2; x + margin / 2 < img.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(x, plot_height + margin, c) = 0.0;
    return img;
}

// Writes <prefix>.csv, <prefix>.histogram.ppm and <prefix>.bins.txt.
inline void write_report(const fs::path& dir, const SpectralReport& r, const std::string& prefix = "report") {
    write_file_bytes(dir / (prefix + ".csv"), encode_report_csv(r));
    write_ppm(dir / (prefix + ".histogram.ppm"), render_histogram(r));
    write_file_bytes(dir / (prefix + ".bins.txt"), encode_bin_edges(r));
}

}  // namespace hapticgen
