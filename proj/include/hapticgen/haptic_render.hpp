#pragma once

// Height map -> device signals: electrostatic friction along a finger path,
// sliding vibration, and an ultrasonic focal-amplitude field.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "hapticgen/dataset_io.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/heightmap.hpp"
#include "hapticgen/spectral.hpp"

namespace hapticgen {

inline constexpr double kDefaultSampleRate = 2000.0;

struct TrajectorySample {
    double time = 0.0;  // seconds
    double x = 0.0;     // pixels
    double y = 0.0;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    double sample_rate = kDefaultSampleRate;

    std::size_t size() const { return samples.size(); }

    void validate() const {
        require(sample_rate > 0.0, "trajectory: sample rate must be positive");
        const double dt = 1.0 / sample_rate;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double expected = samples.front().time + static_cast<double>(i) * dt;
            require(std::abs(samples[i].time - expected) <= 1e-9 * std::max(1.0, std::abs(expected)),
                    "trajectory: sample " + std::to_string(i) + " is not on the uniform time grid");
        }
    }
};

// Constant-speed straight path; angle in radians from +x, speed in px/s.
inline Trajectory straight_trajectory(double start_x, double start_y, double angle, double speed, double duration,
                                      double sample_rate = kDefaultSampleRate) {
    require(sample_rate > 0.0 && duration > 0.0, "trajectory: duration and sample rate must be positive");
    require(speed >= 0.0, "trajectory: speed must be non-negative");
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(duration * sample_rate)));
    Trajectory tr;
    tr.sample_rate = sample_rate;
    tr.samples.reserve(n);
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        tr.samples.push_back({t, start_x + speed * t * c, start_y + speed * t * s});
    }
    return tr;
}

// Same time grid, positions visited in reverse order.
inline Trajectory reversed(const Trajectory& tr) {
    Trajectory out = tr;
    const std::size_t n = tr.samples.size();
    for (std::size_t i = 0; i < n; ++i) {
        out.samples[i].x = tr.samples[n - 1 - i].x;
        out.samples[i].y = tr.samples[n - 1 - i].y;
    }
    return out;
}

enum class SignalKind { Friction, Vibration, AmplitudeField };

struct HapticSignal {
    SignalKind kind = SignalKind::Friction;
    std::vector<double> values;  // in [0, 1]
    double sample_rate = 0.0;    // time signals only
    std::size_t width = 0;       // amplitude fields only
    std::size_t height = 0;
};

inline double bilinear(const HeightMap& h, double x, double y) {
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, h.width - 1), y1 = std::min(y0 + 1, h.height - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    const double top = h.at(x0, y0) + fx * (h.at(x1, y0) - h.at(x0, y0));
    const double bottom = h.at(x0, y1) + fx * (h.at(x1, y1) - h.at(x0, y1));
    return top + fy * (bottom - top);
}

// Bilinear height at each trajectory point; positions must lie in
// [0, W-1] x [0, H-1].
inline std::vector<double> sample_height_along_path(const HeightMap& h, const Trajectory& tr) {
    require(h.width > 0 && h.height > 0, "sample_height_along_path: empty height map");
    tr.validate();
    std::vector<double> out(tr.size());
    const double xmax = static_cast<double>(h.width - 1), ymax = static_cast<double>(h.height - 1);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const auto& p = tr.samples[i];
        if (!(p.x >= 0.0 && p.x <= xmax && p.y >= 0.0 && p.y <= ymax)) {
            throw ContractViolation("trajectory sample " + std::to_string(i) + " at (" + std::to_string(p.x) + ", " +
                                    std::to_string(p.y) + ") lies outside the " + std::to_string(h.width) + "x" +
                                    std::to_string(h.height) + " height map");
        }
        out[i] = bilinear(h, p.x, p.y);
    }
    return out;
}

// clamp(bias + gain * h_hat, 0, 1), h_hat the series min-max normalized over the
// trajectory (all zeros when the series is constant).
inline HapticSignal friction_waveform(const HeightMap& h, const Trajectory& tr, double gain, double bias) {
    require(gain >= 0.0, "friction_waveform: gain must be >= 0");
    require(bias >= 0.0 && bias <= 1.0, "friction_waveform: bias must be in [0,1]");
    const std::vector<double> s = sample_height_along_path(h, tr);
    HapticSignal sig{SignalKind::Friction, std::vector<double>(s.size(), bias), tr.sample_rate};
    if (s.empty()) return sig;
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    if (!(*hi > *lo)) return sig;
    for (std::size_t i = 0; i < s.size(); ++i)
        sig.values[i] = std::clamp(bias + gain * (s[i] - *lo) / (*hi - *lo), 0.0, 1.0);
    return sig;
}

enum class ContactMedia { Nail, Finger, Stick };
enum class ContactForce { Soft, Medium, Strong };

inline double cutoff_hz(ContactMedia m) {
    switch (m) {
        case ContactMedia::Nail: return 900.0;
        case ContactMedia::Finger: return 400.0;
        case ContactMedia::Stick: return 700.0;
    }
    throw ContractViolation("unknown contact media");
}

inline double force_factor(ContactForce f) {
    switch (f) {
        case ContactForce::Soft: return 0.5;
        case ContactForce::Medium: return 1.0;
        case ContactForce::Strong: return 1.5;
    }
    throw ContractViolation("unknown contact force");
}

inline ContactMedia parse_media(const std::string& s) {
    if (s == "nail") return ContactMedia::Nail;
    if (s == "finger") return ContactMedia::Finger;
    if (s == "stick") return ContactMedia::Stick;
    throw ContractViolation("unknown contact media '" + s + "' (expected nail, finger or stick)");
}

inline ContactForce parse_force(const std::string& s) {
    if (s == "soft") return ContactForce::Soft;
    if (s == "medium") return ContactForce::Medium;
    if (s == "strong") return ContactForce::Strong;
    throw ContractViolation("unknown contact force '" + s + "' (expected soft, medium or strong)");
}

// Height velocity (first differences times the sample rate, first sample 0)
// through a single-pole low-pass at the media cutoff, times the force factor.
inline std::vector<double> vibration_raw(const HeightMap& h, const Trajectory& tr, ContactMedia media,
                                         ContactForce force) {
    const std::vector<double> s = sample_height_along_path(h, tr);
    const double alpha = 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff_hz(media) / tr.sample_rate);
    const double gain = force_factor(force);
    std::vector<double> out(s.size());
    double y = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = i == 0 ? 0.0 : (s[i] - s[i - 1]) * tr.sample_rate;
        y += alpha * (d - y);
        out[i] = gain * y;
    }
    return out;
}

// vibration_raw peak-normalized to 0.5 +- 0.5.
inline HapticSignal vibration_waveform(const HeightMap& h, const Trajectory& tr, ContactMedia media,
                                       ContactForce force) {
    const std::vector<double> raw = vibration_raw(h, tr, media, force);
    HapticSignal sig{SignalKind::Vibration, std::vector<double>(raw.size(), 0.5), tr.sample_rate};
    double peak = 0.0;
    for (double v : raw) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return sig;
    for (std::size_t i = 0; i < raw.size(); ++i) sig.values[i] = 0.5 + 0.5 * raw[i] / peak;
    return sig;
}

// Per-pixel focal amplitude: min-max normalized height (constant map -> zeros).
inline HapticSignal ultrasonic_amplitude(const HeightMap& h) {
    HapticSignal sig{SignalKind::AmplitudeField, normalize_minmax(h).values, 0.0, h.width, h.height};
    return sig;
}

// Frequency in Hz of the strongest non-DC component, on the zero-padded
// power-of-two grid.
inline double dominant_frequency_hz(const std::vector<double>& series, double sample_rate) {
    const std::size_t n = std::bit_ceil(std::max<std::size_t>(series.size(), 2));
    return static_cast<double>(dominant_frequency_bin(series, n)) * sample_rate / static_cast<double>(n);
}

// ---- output -----------------------------------------------------------------

// 16-bit little-endian PCM mono; sample = round((2v - 1) * 32767).
inline std::string encode_wav(const HapticSignal& sig) {
    require(sig.kind != SignalKind::AmplitudeField, "encode_wav: amplitude fields are not time signals");
    require(sig.sample_rate >= 1.0, "encode_wav: sample rate must be at least 1 Hz");
    const auto rate = static_cast<std::uint32_t>(std::lround(sig.sample_rate));
    const auto data_bytes = static_cast<std::uint32_t>(sig.values.size() * 2);
    std::string out;
    const auto u32 = [&out](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    const auto u16 = [&out](std::uint16_t v) {
        out.push_back(static_cast<char>(v & 0xFF));
        out.push_back(static_cast<char>(v >> 8));
    };
    out += "RIFF";
    u32(36 + data_bytes);
    out += "WAVEfmt ";
    u32(16);
    u16(1);  // PCM
    u16(1);  // mono
    u32(rate);
    u32(rate * 2);
    u16(2);
    u16(16);
    out += "data";
    u32(data_bytes);
    for (double v : sig.values) {
        const long s = std::lround((2.0 * std::clamp(v, 0.0, 1.0) - 1.0) * 32767.0);
        u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
    }
    return out;
}

inline std::string encode_waveform_csv(const HapticSignal& sig) {
    require(sig.kind != SignalKind::AmplitudeField, "encode_waveform_csv: amplitude fields are not time signals");
    std::string out = "time,value\n";
    char line[64];
    for (std::size_t i = 0; i < sig.values.size(); ++i) {
        std::snprintf(line, sizeof line, "%.6f,%.9f\n", static_cast<double>(i) / sig.sample_rate, sig.values[i]);
        out += line;
    }
    return out;
}

inline void write_wav(const fs::path& path, const HapticSignal& sig) { write_file_bytes(path, encode_wav(sig)); }

inline void write_waveform_csv(const fs::path& path, const HapticSignal& sig) {
    write_file_bytes(path, encode_waveform_csv(sig));
}

// Amplitude fields are stored like raw heights (16-bit graymap).
inline void write_amplitude_field(const fs::path& path, const HapticSignal& sig) {
    require(sig.kind == SignalKind::AmplitudeField, "write_amplitude_field: not an amplitude field");
    HeightMap h(sig.width, sig.height);
    h.values = sig.values;
    write_height_pgm16(path, h);
}

}  // namespace hapticgen
