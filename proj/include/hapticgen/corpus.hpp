#pragma once

// Procedural stand-in for aligned (optical image, height map) pairs across five
// material categories.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hapticgen/dataset_io.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/heightmap.hpp"
#include "hapticgen/parallel.hpp"
#include "hapticgen/rng.hpp"

namespace hapticgen {

enum class MaterialKind { Weave, Stripes, FractalRock, GrainBlobs, SmoothPlastic };

inline std::string to_string(MaterialKind k) {
    switch (k) {
        case MaterialKind::Weave: return "weave";
        case MaterialKind::Stripes: return "stripes";
        case MaterialKind::FractalRock: return "fractal-rock";
        case MaterialKind::GrainBlobs: return "grain-blobs";
        case MaterialKind::SmoothPlastic: return "smooth-plastic";
    }
    throw ContractViolation("unknown material kind");
}

inline MaterialKind parse_material_kind(const std::string& s) {
    for (auto k : {MaterialKind::Weave, MaterialKind::Stripes, MaterialKind::FractalRock, MaterialKind::GrainBlobs,
                   MaterialKind::SmoothPlastic})
        if (to_string(k) == s) return k;
    throw ContractViolation("unknown material kind '" + s + "'");
}

// Category each kind stands in for.
inline std::string category_of(MaterialKind k) {
    switch (k) {
        case MaterialKind::Weave: return "fabrics-leather";
        case MaterialKind::Stripes: return "metals";
        case MaterialKind::GrainBlobs: return "plants";
        case MaterialKind::SmoothPlastic: return "plastics";
        case MaterialKind::FractalRock: return "rigid";
    }
    throw ContractViolation("unknown material kind");
}

struct MaterialRecipe {
    std::string name;
    MaterialKind kind = MaterialKind::Weave;
    double feature_scale = 8.0;  // period (weave, stripes) or feature size in pixels
    double angle = 0.0;          // anisotropy angle, radians
    double amplitude = 0.5;      // roughness amplitude in [0, 1]
    std::array<double, 3> albedo{0.8, 0.8, 0.8};
    std::uint64_t seed = 1;
};

struct PairedSample {
    std::string id;
    std::string category;
    std::string material;
    RgbImage image;
    HeightMap height;
    std::optional<MaterialRecipe> recipe;
};

namespace noise {

inline std::uint32_t lattice_hash(std::int64_t x, std::int64_t y, std::uint64_t seed) {
    std::uint64_t h = Rng::mix(seed ^ Rng::mix(static_cast<std::uint64_t>(x) * 0x9E3779B1ULL) ^
                               Rng::mix(static_cast<std::uint64_t>(y) * 0x85EBCA77ULL + 0x1234567ULL));
    return static_cast<std::uint32_t>(h >> 32);
}

inline double lattice_value(std::int64_t x, std::int64_t y, std::uint64_t seed) {
    return static_cast<double>(lattice_hash(x, y, seed)) / 4294967296.0;
}

inline double fade(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise in [0, 1): hashed lattice values, bilinear blend with smoothstep weights.
inline double value_noise(double x, double y, std::uint64_t seed) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
    const double u = fade(x - fx), v = fade(y - fy);
    const double a = lattice_value(x0, y0, seed), b = lattice_value(x0 + 1, y0, seed);
    const double c = lattice_value(x0, y0 + 1, seed), d = lattice_value(x0 + 1, y0 + 1, seed);
    const double top = a + u * (b - a), bottom = c + u * (d - c);
    return top + v * (bottom - top);
}

// Octave sum with lacunarity 2 and the given per-octave gain, normalized to [0, 1).
inline double fbm(double x, double y, std::uint64_t seed, int octaves, double gain) {
    double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * value_noise(x * freq, y * freq, seed + static_cast<std::uint64_t>(o) * 7919);
        norm += amp;
        amp *= gain;
        freq *= 2.0;
    }
    return sum / norm;
}

inline double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

}  // namespace noise

inline void validate_recipe(const MaterialRecipe& r) {
    require(r.amplitude >= 0.0 && r.amplitude <= 1.0, "recipe '" + r.name + "': amplitude must be in [0,1]");
    require(r.feature_scale >= 2.0 && r.feature_scale <= 1024.0,
            "recipe '" + r.name + "': feature scale must be in [2, 1024] pixels");
    for (double a : r.albedo) require(a >= 0.0 && a <= 1.0, "recipe '" + r.name + "': albedo must be in [0,1]^3");
}

// Fine surface roughness shared by all kinds: weight and lattice spacing in pixels.
inline constexpr double kGritWeight = 0.08;
inline constexpr double kGritScale = 2.0;

// Deterministic height field in [0, 1] for a recipe.
inline HeightMap gen_height_field(const MaterialRecipe& r, std::size_t width, std::size_t height) {
    require(width >= 16 && height >= 16, "gen_height_field: size must be at least 16x16");
    validate_recipe(r);
    HeightMap h(width, height, 0.5);
    if (r.amplitude == 0.0) return h;

    Rng rng(r.seed);
    const double two_pi = 2.0 * std::numbers::pi;
    const double phase_u = rng.uniform(0.0, two_pi), phase_v = rng.uniform(0.0, two_pi);
    const std::uint64_t noise_seed = rng.next_u64();
    const double ca = std::cos(r.angle), sa = std::sin(r.angle);
    const double A = r.amplitude;

    switch (r.kind) {
        case MaterialKind::Weave:
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double u = ca * x + sa * y, v = -sa * x + ca * y;
                    const double p = std::sin(two_pi * u / r.feature_scale + phase_u) *
                                     std::sin(two_pi * v / r.feature_scale + phase_v);
                    h.at(x, y) = 0.5 * p;
                }
            break;
        case MaterialKind::Stripes:
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double u = ca * x + sa * y;
                    h.at(x, y) = 0.5 * std::sin(two_pi * u / r.feature_scale + phase_u);
                }
            break;
        case MaterialKind::FractalRock:
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double u = (ca * x + sa * y) / r.feature_scale, v = (-sa * x + ca * y) / r.feature_scale;
                    h.at(x, y) = noise::fbm(u, v, noise_seed, 4, 0.5) - 0.5;
                }
            break;
        case MaterialKind::GrainBlobs: {
            // One jittered point per lattice cell, kept with probability 0.7,
            // splatted with a Gaussian and soft-thresholded.
            const double cell = r.feature_scale, sigma = 0.35 * cell;
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const auto cx = static_cast<std::int64_t>(std::floor(x / cell));
                    const auto cy = static_cast<std::int64_t>(std::floor(y / cell));
                    double density = 0.0;
                    for (std::int64_t j = cy - 1; j <= cy + 1; ++j)
                        for (std::int64_t i = cx - 1; i <= cx + 1; ++i) {
                            if (noise::lattice_value(i, j, noise_seed ^ 0x5bd1e995ULL) > 0.7) continue;
                            const double px = (i + noise::lattice_value(i, j, noise_seed)) * cell;
                            const double py = (j + noise::lattice_value(i, j, noise_seed + 1)) * cell;
                            const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                            density += std::exp(-d2 / (2.0 * sigma * sigma));
                        }
                    const double blob = noise::smoothstep(0.3, 0.7, density);
                    h.at(x, y) = blob - 0.5;
                }
            break;
        }
        case MaterialKind::SmoothPlastic:
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x)
                    h.at(x, y) = noise::value_noise(x / r.feature_scale, y / r.feature_scale, noise_seed) - 0.5;
            break;
        default:
            throw ContractViolation("gen_height_field: unknown material kind");
    }
    // The switch leaves a pattern in [-0.5, 0.5]. A fine value-noise layer is
    // mixed in so no spectrum is a handful of isolated lines.
    const std::uint64_t grit_seed = noise_seed ^ 0x6772697400000000ULL;
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double grit = noise::value_noise(x / kGritScale, y / kGritScale, grit_seed) - 0.5;
            h.at(x, y) = 0.5 + A * ((1.0 - kGritWeight) * h.at(x, y) + kGritWeight * grit);
        }
    return h;
}

inline constexpr double kReliefFactor = 4.0;

struct LightDir {
    double x = 0.5, y = 0.3, z = 0.812403840463596;  // sqrt(0.66)
};

// Lambertian shading of the height field's normals, times albedo, clamped to [0, 1].
inline RgbImage shade_to_rgb(const HeightMap& h, const LightDir& light, const std::array<double, 3>& albedo,
                             double relief = kReliefFactor) {
    const double len = std::sqrt(light.x * light.x + light.y * light.y + light.z * light.z);
    require(std::abs(len - 1.0) < 1e-9, "shade_to_rgb: light direction must be a unit vector");
    require(light.z > 0.0, "shade_to_rgb: light must come from above the surface (z > 0)");
    require(h.width >= 2 && h.height >= 2, "shade_to_rgb: height map must be at least 2x2");
    RgbImage img(h.width, h.height);
    const std::size_t W = h.width, H = h.height;
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            // Central differences inside, one-sided at the borders.
            const std::size_t xl = x == 0 ? 0 : x - 1, xr = x + 1 == W ? x : x + 1;
            const std::size_t yl = y == 0 ? 0 : y - 1, yr = y + 1 == H ? y : y + 1;
            const double gx = relief * (h.at(xr, y) - h.at(xl, y)) / static_cast<double>(xr - xl);
            const double gy = relief * (h.at(x, yr) - h.at(x, yl)) / static_cast<double>(yr - yl);
            const double n = std::sqrt(gx * gx + gy * gy + 1.0);
            const double lambert = std::max(0.0, (-gx * light.x - gy * light.y + light.z) / n);
            for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(albedo[c] * lambert, 0.0, 1.0);
        }
    }
    return img;
}

inline std::string pair_id(const MaterialRecipe& r, std::size_t k) {
    std::string idx = std::to_string(k);
    if (idx.size() < 2) idx.insert(0, 2 - idx.size(), '0');
    return r.name + "_" + idx;
}

// Pair k of a material: the recipe with a seed derived from (recipe seed, k).
inline MaterialRecipe pair_recipe(const MaterialRecipe& r, std::size_t k) {
    MaterialRecipe out = r;
    out.seed = Rng::mix(r.seed ^ Rng::mix(0xC0FFEEULL + k));
    return out;
}

inline PairedSample make_pair(const MaterialRecipe& material, std::size_t k, std::size_t size,
                              const LightDir& light = {}) {
    const MaterialRecipe r = pair_recipe(material, k);
    PairedSample s;
    s.id = pair_id(material, k);
    s.category = category_of(material.kind);
    s.material = material.name;
    s.height = gen_height_field(r, size, size);
    s.image = shade_to_rgb(s.height, light, r.albedo);
    s.recipe = r;
    return s;
}

// 80/10/10 by pair index within a material.
inline std::string split_for_index(std::size_t k) {
    const std::size_t m = k % 10;
    return m < 8 ? "train" : (m == 8 ? "val" : "test");
}

inline std::vector<PairedSample> generate_pairs(const std::vector<MaterialRecipe>& recipes,
                                                std::size_t pairs_per_material, std::size_t size) {
    std::vector<PairedSample> out(recipes.size() * pairs_per_material);
    parallel_for(out.size(), [&](std::size_t i) {
        out[i] = make_pair(recipes[i / pairs_per_material], i % pairs_per_material, size);
    });
    return out;
}

// ---- recipe presets ---------------------------------------------------------

// One material per category.
inline std::vector<MaterialRecipe> default5_recipes() {
    return {
        {"canvas", MaterialKind::Weave, 8.0, 0.0, 0.8, {0.80, 0.66, 0.48}, 101},
        {"brushed-steel", MaterialKind::Stripes, 6.0, 0.35, 0.5, {0.70, 0.71, 0.74}, 202},
        {"leaf", MaterialKind::GrainBlobs, 6.0, 0.0, 0.6, {0.32, 0.62, 0.26}, 303},
        {"abs-plastic", MaterialKind::SmoothPlastic, 12.0, 0.0, 0.15, {0.85, 0.22, 0.20}, 404},
        {"granite", MaterialKind::FractalRock, 12.0, 0.0, 0.9, {0.56, 0.52, 0.50}, 505},
    };
}

// Weave with period 8 against axis-aligned stripes with period 16.
inline std::vector<MaterialRecipe> twoclass_recipes() {
    return {
        {"weave-p8", MaterialKind::Weave, 8.0, 0.0, 0.8, {0.78, 0.70, 0.55}, 11},
        {"stripes-p16", MaterialKind::Stripes, 16.0, 0.0, 0.8, {0.70, 0.72, 0.75}, 22},
    };
}

// Five categories with twenty materials each, parameters swept deterministically.
inline std::vector<MaterialRecipe> full_layout_recipes() {
    std::vector<MaterialRecipe> out;
    const MaterialKind kinds[] = {MaterialKind::Weave, MaterialKind::Stripes, MaterialKind::GrainBlobs,
                                  MaterialKind::SmoothPlastic, MaterialKind::FractalRock};
    for (MaterialKind kind : kinds) {
        Rng rng(Rng::mix(static_cast<std::uint64_t>(kind) + 17));
        for (std::size_t m = 0; m < 20; ++m) {
            MaterialRecipe r;
            r.kind = kind;
            r.name = to_string(kind) + "-" + (m < 10 ? "0" : "") + std::to_string(m);
            r.feature_scale = 4.0 + static_cast<double>(m % 5) * 2.0;
            r.angle = rng.uniform(0.0, std::numbers::pi);
            r.amplitude = kind == MaterialKind::SmoothPlastic ? rng.uniform(0.05, 0.2) : rng.uniform(0.4, 0.9);
            r.albedo = {rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
            r.seed = rng.next_u64();
            out.push_back(r);
        }
    }
    return out;
}

inline std::vector<MaterialRecipe> recipes_by_name(const std::string& preset) {
    if (preset == "default5") return default5_recipes();
    if (preset == "twoclass") return twoclass_recipes();
    if (preset == "full") return full_layout_recipes();
    throw ContractViolation("unknown recipe preset '" + preset + "' (expected default5, twoclass or full)");
}

// Folds a run seed into every recipe seed.
inline std::vector<MaterialRecipe> reseed(std::vector<MaterialRecipe> recipes, std::uint64_t seed) {
    for (auto& r : recipes) r.seed = Rng::mix(r.seed ^ Rng::mix(seed));
    return recipes;
}

// Writes every pair plus the manifest under out_dir.
inline Manifest build_corpus(const std::vector<MaterialRecipe>& recipes, std::size_t pairs_per_material,
                             std::size_t size, const fs::path& out_dir, const std::string& layout = "free") {
    require(pairs_per_material >= 1, "build_corpus: pairs per material must be positive");
    require(!recipes.empty(), "build_corpus: no recipes");
    Manifest m;
    m.layout = layout;
    m.entries.resize(recipes.size() * pairs_per_material);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create corpus directory", out_dir.string());
    parallel_for(m.entries.size(), [&](std::size_t i) {
        const MaterialRecipe& recipe = recipes[i / pairs_per_material];
        const std::size_t k = i % pairs_per_material;
        const PairedSample s = make_pair(recipe, k, size);
        const std::string stem = s.category + "/" + s.material + "/pair_" + std::to_string(k);
        ManifestEntry e{s.id, s.category, s.material, stem + ".image.ppm", stem + ".height.pgm", split_for_index(k)};
        write_ppm(out_dir / e.image_path, s.image);
        write_height_pgm16(out_dir / e.height_path, s.height);
        m.entries[i] = std::move(e);
    });
    write_manifest(out_dir, m);
    return m;
}

// Loads the pairs of one split ("" for all) from a corpus directory.
inline std::vector<PairedSample> load_split(const fs::path& root, const std::string& split) {
    const Manifest m = read_manifest(root);
    std::vector<PairedSample> out;
    for (const auto& e : m.entries) {
        if (!split.empty() && e.split != split) continue;
        PairedSample s;
        s.id = e.id;
        s.category = e.category;
        s.material = e.material;
        s.image = read_ppm(root / e.image_path);
        s.height = read_height_pgm(root / e.height_path);
        require(s.image.same_size(s.height.width, s.height.height),
                "pair " + e.id + ": image and height dimensions differ");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hapticgen
