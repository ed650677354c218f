#include <gtest/gtest.h>

#include <cmath>

#include "hapticgen/checkpoint.hpp"
#include "hapticgen/corpus.hpp"
#include "hapticgen/diffusion.hpp"

using namespace hapticgen;

namespace {

using T64 = Tensor<double>;

struct Moments {
    double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
    Moments m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(v.size() - 1);
    return m;
}

}  // namespace

TEST(Schedule, SingleStep) {
    const auto s = make_schedule(1, 1e-4, 0.02);
    EXPECT_EQ(s.beta, (std::vector<double>{1e-4}));
    EXPECT_EQ(s.alpha_bar, (std::vector<double>{1.0 - 1e-4}));
}

TEST(Schedule, TwoSteps) {
    const auto s = make_schedule(2, 0.1, 0.2);
    EXPECT_DOUBLE_EQ(s.alpha_bar_at(1), 0.9);
    EXPECT_DOUBLE_EQ(s.alpha_bar_at(2), 0.72);
}

TEST(Schedule, DefaultAlphaBarMatchesDirectProduct) {
    const auto s = make_schedule(DiffusionConfig{});
    double log_sum = 0.0;
    for (std::size_t t = 1; t <= 200; ++t) log_sum += std::log1p(-(1e-4 + (t - 1) / 199.0 * (0.02 - 1e-4)));
    EXPECT_NEAR(s.alpha_bar_at(200), std::exp(log_sum), 1e-14);
    // About 0.132: the default run ends with a third of the signal amplitude left.
    EXPECT_NEAR(s.alpha_bar_at(200), 0.1322, 5e-4);
    for (std::size_t t = 2; t <= 200; ++t) EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
    EXPECT_DOUBLE_EQ(s.beta_at(200), 0.02);
}

TEST(Schedule, RangeChecks) {
    EXPECT_THROW(make_schedule(0, 1e-4, 0.02), ContractViolation);
    EXPECT_THROW(make_schedule(10, 0.0, 0.02), ContractViolation);
    EXPECT_THROW(make_schedule(10, 0.03, 0.02), ContractViolation);
    EXPECT_THROW(make_schedule(10, 1e-4, 1.0), ContractViolation);
    const auto s = make_schedule(10, 1e-4, 0.02);
    EXPECT_THROW(s.beta_at(0), ContractViolation);
    EXPECT_THROW(s.alpha_bar_at(11), ContractViolation);
}

TEST(QSample, ZeroNoiseScalesByRootAlphaBar) {
    const auto s = make_schedule(DiffusionConfig{});
    const std::vector<double> z0{0.5, -1.0}, eps{0.0, 0.0};
    const auto z = q_sample<double>(z0, 50, eps, s);
    EXPECT_DOUBLE_EQ(z[0], std::sqrt(s.alpha_bar_at(50)) * 0.5);
    EXPECT_DOUBLE_EQ(z[1], -std::sqrt(s.alpha_bar_at(50)));
}

TEST(QSample, FirstStepStaysClose) {
    const auto s = make_schedule(200, 1e-6, 0.02);
    const std::vector<double> z0{0.3, -0.7, 0.1}, eps{1.0, -2.0, 0.5};
    const auto z = q_sample<double>(z0, 1, eps, s);
    double d = 0.0, e = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        d += (z[i] - z0[i]) * (z[i] - z0[i]);
        e += eps[i] * eps[i];
    }
    EXPECT_LE(std::sqrt(d), std::sqrt(1e-6 * e) + 1e-6);
    EXPECT_THROW(q_sample<double>(z0, 0, eps, s), ContractViolation);
}

TEST(QSample, SequentialMatchesClosedFormInDistribution) {
    const auto s = make_schedule(DiffusionConfig{});
    const double z0 = 0.8;
    constexpr std::size_t kDraws = 100000;
    for (std::size_t t : {10u, 100u, 200u}) {
        Rng rng(t);
        std::vector<double> seq(kDraws, z0);
        for (std::size_t k = 1; k <= t; ++k) q_step<double>(seq, k, s, rng);
        const Moments m = moments(seq);
        const double mean = std::sqrt(s.alpha_bar_at(t)) * z0, var = 1.0 - s.alpha_bar_at(t);
        EXPECT_LE(std::abs(m.mean - mean), 3.0 * std::sqrt(var / kDraws)) << "t=" << t;
        EXPECT_NEAR(m.var / var, 1.0, 0.03) << "t=" << t;
    }
}

TEST(DdpmLoss, OracleAndZeroNets) {
    const auto s = make_schedule(DiffusionConfig{});
    Rng rng(1);
    std::vector<double> z0(4096), eps(4096);
    for (auto& v : z0) v = rng.uniform(-1.0, 1.0);
    for (auto& v : eps) v = rng.normal();
    const auto Z0 = T64::from({4, 1, 32, 32}, z0), E = T64::from({4, 1, 32, 32}, eps);
    const std::vector<std::size_t> t{1, 50, 120, 200};
    const auto oracle = [&](const T64&, const T64&, std::span<const double>) { return E; };
    EXPECT_EQ(ddpm_loss_on<double>(oracle, Z0, E, T64(), t, s).item(), 0.0);
    const auto zero = [](const T64& z, const T64&, std::span<const double>) { return T64::zeros(z.shape()); };
    const double l0 = ddpm_loss_on<double>(zero, Z0, E, T64(), t, s).item();
    EXPECT_NEAR(l0, 1.0, 0.02 * 1.0 + 3.0 * std::sqrt(2.0 / 4096));
    EXPECT_EQ(l0, ddpm_loss_on<double>(zero, Z0, E, T64(), t, s).item());
}

TEST(DdpmLoss, NetworkSeesNoisedInputAndStepIndex) {
    const auto s = make_schedule(DiffusionConfig{});
    const auto Z0 = T64::full({1, 1, 1, 2}, 0.5), E = T64::from({1, 1, 1, 2}, {1.0, -1.0});
    const std::vector<std::size_t> t{37};
    std::vector<double> seen_z;
    double seen_t = 0.0;
    const auto spy = [&](const T64& z, const T64&, std::span<const double> tt) {
        seen_z = z.values();
        seen_t = tt[0];
        return T64::zeros(z.shape());
    };
    ddpm_loss_on<double>(spy, Z0, E, T64(), t, s);
    EXPECT_EQ(seen_t, 37.0);
    const double a = std::sqrt(s.alpha_bar_at(37)), b = std::sqrt(1.0 - s.alpha_bar_at(37));
    EXPECT_DOUBLE_EQ(seen_z[0], a * 0.5 + b);
    EXPECT_DOUBLE_EQ(seen_z[1], a * 0.5 - b);
}

TEST(DdpmReverse, SingleStepOracleInvertsNoising) {
    const auto s = make_schedule(1, 0.01, 0.01);
    Rng rng(2);
    std::vector<double> z0(64), eps(64);
    for (auto& v : z0) v = rng.uniform(-1.0, 1.0);
    for (auto& v : eps) v = rng.normal();
    const auto z1 = q_sample<double>(z0, 1, eps, s);
    const auto oracle = [&](const T64&, const T64&, std::span<const double>) { return T64::from({1, 1, 8, 8}, eps); };
    const auto out = ddpm_reverse<double>(oracle, T64::from({1, 1, 8, 8}, z1), T64(), s, rng);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(out.data()[i], z0[i], 1e-6);
}

TEST(SampleDdpm, ZeroNetIsBoundedAndSeeded) {
    DiffusionConfig cfg;
    cfg.image_size = 16;
    cfg.steps = 20;
    const auto s = make_schedule(cfg);
    const auto zero = [](const Tensor<float>& z, const Tensor<float>&, std::span<const float>) {
        return Tensor<float>::zeros(z.shape());
    };
    const auto img = make_pair(twoclass_recipes()[1], 0, 16).image;
    const auto a = sample_ddpm(zero, img, cfg, s, 5);
    EXPECT_EQ(a, sample_ddpm(zero, img, cfg, s, 5));
    EXPECT_NE(a, sample_ddpm(zero, img, cfg, s, 6));
    for (double v : a.values) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_THROW(sample_ddpm(zero, RgbImage(32, 32), cfg, s, 5), ContractViolation);
}

TEST(TrainDdpm, ReproducibleAndRejectsEmptySplit) {
    const auto ds = make_dataset(generate_pairs(twoclass_recipes(), 4, 16));
    DiffusionConfig d;
    d.image_size = 16;
    CondNetConfig net;
    net.base_width = 8;
    TrainConfig tc;
    tc.steps = 10;
    tc.batch_size = 4;
    const auto a = train_ddpm(d, net, ds, tc), b = train_ddpm(d, net, ds, tc);
    EXPECT_EQ(encode_checkpoint(ddpm_checkpoint(a, tc)), encode_checkpoint(ddpm_checkpoint(b, tc)));
    EXPECT_THROW(train_ddpm(d, net, TensorDataset{}, tc), ContractViolation);
}
