#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hapticgen/corpus.hpp"
#include "hapticgen/spectral.hpp"

using namespace hapticgen;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hapticgen_test_corpus_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(GenHeightField, StripesPeakAtPeriodBin) {
    const MaterialRecipe r{"s", MaterialKind::Stripes, 8.0, 0.0, 0.8, {0.5, 0.5, 0.5}, 3};
    const auto p = dominant_bin(gen_height_field(r, 32, 32));
    EXPECT_EQ(p.fx, 4);
    EXPECT_EQ(p.fy, 0);
}

TEST(GenHeightField, StaysInUnitRange) {
    for (const auto& r : default5_recipes()) {
        const auto h = gen_height_field(r, 48, 32);
        for (double v : h.values) {
            EXPECT_GE(v, 0.0) << r.name;
            EXPECT_LE(v, 1.0) << r.name;
        }
    }
}

TEST(GenHeightField, ZeroAmplitudeIsConstant) {
    for (auto r : default5_recipes()) {
        r.amplitude = 0.0;
        const auto h = gen_height_field(r, 16, 16);
        for (double v : h.values) EXPECT_EQ(v, h.values[0]) << r.name;
    }
}

TEST(GenHeightField, SameSeedIsBitIdentical) {
    for (const auto& r : default5_recipes()) EXPECT_EQ(gen_height_field(r, 32, 32), gen_height_field(r, 32, 32));
    auto r = default5_recipes()[0];
    const auto a = gen_height_field(r, 32, 32);
    r.seed += 1;
    EXPECT_NE(a, gen_height_field(r, 32, 32));
}

TEST(GenHeightField, RejectsBadRecipes) {
    auto r = default5_recipes()[1];
    r.amplitude = 1.5;
    EXPECT_THROW(gen_height_field(r, 32, 32), ContractViolation);
    r.amplitude = 0.5;
    r.feature_scale = 1.0;
    EXPECT_THROW(gen_height_field(r, 32, 32), ContractViolation);
    EXPECT_THROW(gen_height_field(default5_recipes()[0], 8, 32), ContractViolation);
    EXPECT_THROW(parse_material_kind("velvet"), ContractViolation);
}

TEST(ShadeToRgb, FlatSurfaceUnderZenithLightIsAlbedo) {
    const auto img = shade_to_rgb(HeightMap(8, 8, 0.4), LightDir{0, 0, 1}, {0.2, 0.5, 0.9});
    for (std::size_t i = 0; i < 64; ++i) {
        EXPECT_DOUBLE_EQ(img.values[3 * i], 0.2);
        EXPECT_DOUBLE_EQ(img.values[3 * i + 1], 0.5);
        EXPECT_DOUBLE_EQ(img.values[3 * i + 2], 0.9);
    }
}

TEST(ShadeToRgb, TiltedPlaneShadesUniformly) {
    // The height is a ramp but every normal is the same, so the image carries no trace of it.
    HeightMap h(32, 32);
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) h.at(x, y) = static_cast<double>(x) / 32.0;
    const auto img = shade_to_rgb(h, LightDir{}, {1, 1, 1});
    for (double v : img.values) EXPECT_NEAR(v, img.values[0], 1e-12);
    EXPECT_NE(h.values.front(), h.values.back());
}

TEST(ShadeToRgb, WeaveLuminanceIsNotTheHeight) {
    const auto s = make_pair(default5_recipes()[0], 0, 64);
    EXPECT_LT(correlation(luminance(s.image).values, s.height.values), 0.95);
}

TEST(ShadeToRgb, DegenerateLightIsContractViolation) {
    EXPECT_THROW(shade_to_rgb(HeightMap(4, 4), LightDir{1, 0, 0}, {1, 1, 1}), ContractViolation);
    EXPECT_THROW(shade_to_rgb(HeightMap(4, 4), LightDir{0, 0, -1}, {1, 1, 1}), ContractViolation);
    EXPECT_THROW(shade_to_rgb(HeightMap(4, 4), LightDir{0, 0, 2}, {1, 1, 1}), ContractViolation);
}

TEST(Corpus, GrayscaleProxyMissesTheTruth) {
    for (const auto& r : default5_recipes()) {
        const auto s = make_pair(r, 0, 32);
        EXPECT_GT(psd_mse(grayscale_proxy(s.image), s.height), 0.1) << r.name;
    }
}

TEST(Corpus, PairIdsAndSplits) {
    EXPECT_EQ(pair_id(default5_recipes()[0], 3), "canvas_03");
    EXPECT_EQ(pair_id(default5_recipes()[0], 123), "canvas_123");
    EXPECT_EQ(split_for_index(7), "train");
    EXPECT_EQ(split_for_index(18), "val");
    EXPECT_EQ(split_for_index(19), "test");
}

TEST(Corpus, FiveRecipesTimesTwentyPairs) {
    const auto dir = scratch("default5");
    const auto m = build_corpus(default5_recipes(), 20, 16, dir);
    EXPECT_EQ(m.entries.size(), 100u);
    EXPECT_EQ(m.split("train").size(), 80u);
    EXPECT_EQ(m.split("val").size(), 10u);
    EXPECT_EQ(m.split("test").size(), 10u);
    EXPECT_EQ(m.counts_by_category().size(), 5u);
    EXPECT_TRUE(manifest_validate(dir).ok());
    EXPECT_EQ(read_manifest(dir), m);
    const auto val = load_split(dir, "val");
    ASSERT_EQ(val.size(), 10u);
    EXPECT_EQ(val[0].id, "canvas_08");
    fs::remove_all(dir);
}

TEST(Corpus, RebuildIsByteIdentical) {
    const auto a = scratch("rebuild_a"), b = scratch("rebuild_b");
    build_corpus(twoclass_recipes(), 3, 16, a);
    build_corpus(twoclass_recipes(), 3, 16, b);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        EXPECT_EQ(read_file_bytes(e.path()), read_file_bytes(b / fs::relative(e.path(), a))) << e.path();
    }
    EXPECT_EQ(files, 2u * 3 * 2 + 1);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Corpus, FullLayoutHasTwoThousandEntries) {
    const auto recipes = full_layout_recipes();
    EXPECT_EQ(recipes.size(), 100u);
    const auto dir = scratch("full");
    const auto m = build_corpus(recipes, 20, 16, dir, "full");
    EXPECT_EQ(m.entries.size(), 2000u);
    const auto report = manifest_validate(dir);
    EXPECT_TRUE(report.ok()) << report.violations.size() << " violations";
    EXPECT_EQ(report.entries, 2000u);
    fs::remove_all(dir);
}

TEST(Corpus, ReseedChangesEverySeed) {
    const auto base = default5_recipes();
    const auto a = reseed(base, 7), b = reseed(base, 7), c = reseed(base, 8);
    for (std::size_t i = 0; i < base.size(); ++i) {
        EXPECT_EQ(a[i].seed, b[i].seed);
        EXPECT_NE(a[i].seed, base[i].seed);
        EXPECT_NE(a[i].seed, c[i].seed);
    }
}
