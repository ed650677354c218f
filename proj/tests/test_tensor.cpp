#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hapticgen/rng.hpp"
#include "hapticgen/tensor.hpp"

using namespace hapticgen;
using T64 = Tensor<double>;

namespace {

T64 random(Rng& rng, Shape s, bool grad = false) {
    std::vector<double> v(numel_of(s));
    for (auto& e : v) e = rng.uniform(-1.0, 1.0);
    return T64::from(std::move(s), std::move(v), grad);
}

// Direct zero-padded 3x3 convolution.
std::vector<double> naive_conv(const T64& x, const T64& w, std::size_t s) {
    const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0);
    const std::size_t Ho = (H - 1) / s + 1, Wo = (W - 1) / s + 1;
    std::vector<double> out(N * Co * Ho * Wo, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < Co; ++o)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < Ci; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const long iy = static_cast<long>(oy * s) + ky - 1;
                                const long ix = static_cast<long>(ox * s) + kx - 1;
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                                acc += x.data()[((n * Ci + c) * H + iy) * W + ix] * w.data()[((o * Ci + c) * 3 + ky) * 3 + kx];
                            }
                    out[((n * Co + o) * Ho + oy) * Wo + ox] = acc;
                }
    return out;
}

}  // namespace

TEST(Ops, AddForwardAndBackward) {
    auto a = T64::from({2}, {1, 2}, true);
    auto b = T64::from({2}, {3, 4}, true);
    auto y = ops::add(a, b);
    EXPECT_EQ(y.values(), (std::vector<double>{4, 6}));
    ops::sum(y).backward();
    EXPECT_EQ(std::vector<double>(a.grad().begin(), a.grad().end()), (std::vector<double>{1, 1}));
    EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{1, 1}));
}

TEST(Ops, SiluAtZero) {
    auto x = T64::from({1}, {0.0}, true);
    auto y = ops::silu(x);
    EXPECT_EQ(y.item(), 0.0);
    y.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
}

TEST(Ops, ConvOnConstantImageWithOnesKernel) {
    const double c = 0.7;
    auto x = T64::full({1, 1, 5, 5}, c);
    auto w = T64::full({1, 1, 3, 3}, 1.0);
    auto y = ops::conv3x3(x, w);
    for (std::size_t yy = 1; yy < 4; ++yy)
        for (std::size_t xx = 1; xx < 4; ++xx) EXPECT_NEAR(y.data()[yy * 5 + xx], 9 * c, 1e-15);
    EXPECT_NEAR(y.data()[0], 4 * c, 1e-15);  // corner sees 4 taps
}

TEST(Ops, MatmulMatchesTripleLoop) {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random(rng, {5, 5}), b = random(rng, {5, 5});
        auto y = ops::matmul(a, b);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 5; ++k) acc += a.data()[i * 5 + k] * b.data()[k * 5 + j];
                EXPECT_NEAR(y.data()[i * 5 + j], acc, 1e-12);
            }
    }
}

TEST(Ops, ConvMatchesNaiveReference) {
    Rng rng(2);
    for (std::size_t stride : {1u, 2u}) {
        for (int trial = 0; trial < 5; ++trial) {
            auto x = random(rng, {2, 3, 5, 5}), w = random(rng, {4, 3, 3, 3});
            auto y = ops::conv3x3(x, w, static_cast<int>(stride));
            const auto ref = naive_conv(x, w, stride);
            ASSERT_EQ(y.numel(), ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
        }
    }
}

TEST(Ops, ConvOnWideNonSquareInputs) {
    Rng rng(3);
    auto x = random(rng, {1, 2, 3, 37}), w = random(rng, {3, 2, 3, 3});
    for (int s : {1, 2}) {
        const auto ref = naive_conv(x, w, static_cast<std::size_t>(s));
        auto y = ops::conv3x3(x, w, s);
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
    }
}

TEST(Ops, Float32GemmPathAgreesWithDouble) {
    Rng rng(4);
    auto xd = random(rng, {1, 16, 8, 8}), wd = random(rng, {24, 16, 3, 3});
    std::vector<float> xf(xd.data().begin(), xd.data().end()), wf(wd.data().begin(), wd.data().end());
    auto yf = ops::conv3x3(Tensor<float>::from(xd.shape(), xf), Tensor<float>::from(wd.shape(), wf));
    const auto ref = naive_conv(xd, wd, 1);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(yf.data()[i], ref[i], 1e-4);
}

TEST(Ops, UpsampleRepeatsPixels) {
    auto x = T64::from({1, 1, 2, 2}, {1, 2, 3, 4});
    auto y = ops::upsample2x(x);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(y.values(), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Ops, GroupNormNormalizesEachGroup) {
    Rng rng(5);
    auto x = random(rng, {2, 16, 3, 3});
    auto y = ops::group_norm(x, T64::full({16}, 1.0), T64::full({16}, 0.0), 8);
    const std::size_t M = 2 * 9;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t g = 0; g < 8; ++g) {
            double mean = 0.0, sq = 0.0;
            for (std::size_t i = 0; i < M; ++i) mean += y.data()[(n * 16 + 2 * g) * 9 + i];
            mean /= M;
            for (std::size_t i = 0; i < M; ++i) sq += std::pow(y.data()[(n * 16 + 2 * g) * 9 + i] - mean, 2);
            EXPECT_NEAR(mean, 0.0, 1e-12);
            EXPECT_NEAR(sq / M, 1.0, 1e-3);  // eps = 1e-5 in the denominator
        }
}

TEST(Ops, ConcatStacksChannels) {
    auto a = T64::from({1, 1, 1, 2}, {1, 2});
    auto b = T64::from({1, 2, 1, 2}, {3, 4, 5, 6});
    EXPECT_EQ(ops::concat_channels(a, b).values(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
}

TEST(Ops, MseAndSum) {
    auto a = T64::from({3}, {1, 2, 3}), b = T64::from({3}, {1, 0, 0});
    EXPECT_DOUBLE_EQ(ops::mse_loss(a, b).item(), (0.0 + 4.0 + 9.0) / 3.0);
    EXPECT_DOUBLE_EQ(ops::sum(a).item(), 6.0);
}

TEST(Ops, ChannelwiseBroadcastShapes) {
    auto x = T64::from({2, 2, 1, 1}, {1, 2, 3, 4});
    EXPECT_EQ(ops::add_channelwise(x, T64::from({2}, {10, 20})).values(), (std::vector<double>{11, 22, 13, 24}));
    EXPECT_EQ(ops::add_channelwise(x, T64::from({2, 2}, {1, 2, 3, 4})).values(), (std::vector<double>{2, 4, 6, 8}));
    EXPECT_EQ(ops::mul_channelwise(x, T64::from({2}, {2, 3})).values(), (std::vector<double>{2, 6, 6, 12}));
    EXPECT_THROW(ops::add_channelwise(x, T64::from({3}, {1, 2, 3})), ContractViolation);
}

TEST(Ops, ShapeMismatchIsContractViolation) {
    auto a = T64::zeros({2, 3}), b = T64::zeros({3, 2});
    EXPECT_THROW(ops::add(a, b), ContractViolation);
    EXPECT_THROW(ops::matmul(a, a), ContractViolation);
    EXPECT_THROW(ops::conv3x3(T64::zeros({1, 2, 4, 4}), T64::zeros({1, 3, 3, 3})), ContractViolation);
    EXPECT_THROW(ops::conv3x3(T64::zeros({1, 1, 4, 4}), T64::zeros({1, 1, 3, 3}), 3), ContractViolation);
}

TEST(Ops, NonFiniteOutputNamesOpAndIndex) {
    const double inf = std::numeric_limits<double>::infinity();
    auto a = T64::from({3}, {1, inf, 2}), b = T64::from({3}, {1, -inf, 0});
    try {
        ops::add(a, b);
        FAIL() << "expected NumericFault";
    } catch (const NumericFault& e) {
        EXPECT_EQ(e.op(), "add");
        EXPECT_EQ(e.index(), 1u);
    }
}

TEST(Ops, NonFiniteGradientIsFault) {
    // Finite forward value, but the two gradient contributions overflow.
    auto x = T64::from({1}, {1e-10}, true);
    auto y = ops::add(ops::scale(x, 1e308), ops::scale(x, 1e308));
    EXPECT_THROW(y.backward(), NumericFault);
}

TEST(Tensor, ShapeInvariants) {
    EXPECT_THROW(T64::from({2, 2}, {1, 2, 3}), ContractViolation);
    EXPECT_THROW(T64::from({0, 2}, {}), ContractViolation);
    auto t = T64::zeros({2, 3}, true);
    EXPECT_EQ(t.grad().size(), t.numel());
    EXPECT_THROW(T64::zeros({2}).item(), ContractViolation);
    EXPECT_THROW(ops::add(t, t).backward(), ContractViolation);
}

TEST(Tensor, SharedSubexpressionAccumulates) {
    auto x = T64::from({1}, {3.0}, true);
    auto y = ops::mul(x, x);  // x used twice
    auto z = ops::add(y, x);
    z.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Tensor, LeafGradsAccumulateAcrossBackwardCalls) {
    auto x = T64::from({1}, {2.0}, true);
    ops::scale(x, 3.0).backward();
    ops::scale(x, 3.0).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
    x.zero_grad();
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Tensor, NoGradGuardSkipsTape) {
    auto x = T64::from({1}, {2.0}, true);
    NoGradGuard guard;
    auto y = ops::scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
}
