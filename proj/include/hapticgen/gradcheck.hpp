#pragma once

// Central finite-difference checks of reverse-mode gradients (double precision).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hapticgen/condnet.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/rng.hpp"
#include "hapticgen/tensor.hpp"

namespace hapticgen {

inline constexpr double kFiniteDifferenceStep = 1e-5;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst;  // "input[i][j]" of the largest error
    std::size_t checked = 0;
    double tolerance = 0.0;

    bool passed() const { return max_rel_error <= tolerance; }
};

// |a - n| / max(|a|, |n|, 1e-6): relative where gradients are sizeable,
// absolute near zero.
inline double grad_relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

using GraphFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares d f / d inputs from backward() with central differences at step h.
// f must return a scalar. With max_per_tensor > 0 only that many coordinates
// of each input, drawn from rng, are probed.
inline GradCheckReport grad_check(const GraphFn& f, std::vector<Tensor<double>> inputs, double tolerance,
                                  std::size_t max_per_tensor = 0, std::uint64_t seed = 42,
                                  double h = kFiniteDifferenceStep) {
    for (auto& t : inputs) {
        if (!t.requires_grad()) t.set_requires_grad(true);
        t.zero_grad();
    }
    const Tensor<double> out = f(inputs);
    require(out.numel() == 1, "grad_check: graph output must be a scalar, got " + shape_str(out.shape()));
    out.backward();

    GradCheckReport report;
    report.tolerance = tolerance;
    Rng rng(seed);
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor<double>& t = inputs[i];
        std::vector<std::size_t> coords;
        if (max_per_tensor == 0 || t.numel() <= max_per_tensor) {
            for (std::size_t j = 0; j < t.numel(); ++j) coords.push_back(j);
        } else {
            for (std::size_t k = 0; k < max_per_tensor; ++k)
                coords.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(t.numel() - 1))));
        }
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        for (std::size_t j : coords) {
            double& x = t.mutable_data()[j];
            const double saved = x;
            x = saved + h;
            const double up = f(inputs).item();
            x = saved - h;
            const double down = f(inputs).item();
            x = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = grad_relative_error(analytic[j], numeric);
            ++report.checked;
            if (report.worst.empty() || err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst = "input[" + std::to_string(i) + "][" + std::to_string(j) + "]";
            }
        }
    }
    return report;
}

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel_of(shape));
    for (auto& e : v) e = rng.uniform(lo, hi);
    return Tensor<double>::from(std::move(shape), std::move(v));
}

// sum(y * R) with a fixed random R turns any op output into a scalar with a
// non-trivial upstream gradient.
inline Tensor<double> project(const Tensor<double>& y, const Tensor<double>& r) { return ops::sum(ops::mul(y, r)); }

}  // namespace detail

struct OpCheckResult {
    std::string op;
    GradCheckReport report;  // worst over all trials
};

// Randomized finite-difference check of every differentiable op.
inline std::vector<OpCheckResult> check_all_ops(std::size_t trials = 20, double tolerance = 1e-4,
                                                std::uint64_t seed = 42) {
    using detail::project;
    using detail::random_tensor;
    Rng rng(seed);
    struct Case {
        std::string name;
        std::function<std::pair<std::vector<Tensor<double>>, GraphFn>(Rng&)> make;
    };
    const auto dim = [](Rng& r, int lo, int hi) { return static_cast<std::size_t>(r.uniform_int(lo, hi)); };

    const auto binary = [&](const std::string& name, auto op) {
        return Case{name, [=](Rng& r) {
                        const Shape s{dim(r, 1, 3), dim(r, 1, 5)};
                        auto R = random_tensor(r, s);
                        return std::pair{std::vector{random_tensor(r, s), random_tensor(r, s)},
                                         GraphFn([=](const std::vector<Tensor<double>>& in) {
                                             return project(op(in[0], in[1]), R);
                                         })};
                    }};
    };

    std::vector<Case> cases;
    cases.push_back(binary("add", [](const auto& a, const auto& b) { return ops::add(a, b); }));
    cases.push_back(binary("sub", [](const auto& a, const auto& b) { return ops::sub(a, b); }));
    cases.push_back(binary("mul", [](const auto& a, const auto& b) { return ops::mul(a, b); }));
    cases.push_back({"scalar-mul", [&](Rng& r) {
                         const Shape s{dim(r, 1, 4), dim(r, 1, 4)};
                         const double k = r.uniform(-2.0, 2.0);
                         auto R = random_tensor(r, s);
                         return std::pair{std::vector{random_tensor(r, s)},
                                          GraphFn([=](const auto& in) { return project(ops::scale(in[0], k), R); })};
                     }});
    cases.push_back({"matmul", [&](Rng& r) {
                         const std::size_t M = dim(r, 1, 4), K = dim(r, 1, 4), N = dim(r, 1, 4);
                         auto R = random_tensor(r, {M, N});
                         return std::pair{std::vector{random_tensor(r, {M, K}), random_tensor(r, {K, N})},
                                          GraphFn([=](const auto& in) { return project(ops::matmul(in[0], in[1]), R); })};
                     }});
    for (int stride : {1, 2}) {
        cases.push_back({"conv3x3/s" + std::to_string(stride), [&, stride](Rng& r) {
                             const std::size_t N = dim(r, 1, 2), Ci = dim(r, 1, 3), Co = dim(r, 1, 3);
                             const std::size_t H = dim(r, 2, 6), W = dim(r, 2, 6);
                             const std::size_t Ho = (H - 1) / stride + 1, Wo = (W - 1) / stride + 1;
                             auto R = random_tensor(r, {N, Co, Ho, Wo});
                             return std::pair{std::vector{random_tensor(r, {N, Ci, H, W}), random_tensor(r, {Co, Ci, 3, 3})},
                                              GraphFn([=](const auto& in) {
                                                  return project(ops::conv3x3(in[0], in[1], stride), R);
                                              })};
                         }});
    }
    cases.push_back({"upsample2x", [&](Rng& r) {
                         const Shape s{dim(r, 1, 2), dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 4)};
                         auto R = random_tensor(r, {s[0], s[1], 2 * s[2], 2 * s[3]});
                         return std::pair{std::vector{random_tensor(r, s)},
                                          GraphFn([=](const auto& in) { return project(ops::upsample2x(in[0]), R); })};
                     }});
    cases.push_back({"silu", [&](Rng& r) {
                         const Shape s{dim(r, 1, 3), dim(r, 1, 6)};
                         auto R = random_tensor(r, s);
                         return std::pair{std::vector{random_tensor(r, s, -3.0, 3.0)},
                                          GraphFn([=](const auto& in) { return project(ops::silu(in[0]), R); })};
                     }});
    cases.push_back({"group-norm", [&](Rng& r) {
                         const std::size_t N = dim(r, 1, 2), G = 8, C = G * dim(r, 1, 2);
                         const Shape s{N, C, dim(r, 2, 3), dim(r, 2, 3)};
                         auto R = random_tensor(r, s);
                         return std::pair{std::vector{random_tensor(r, s), random_tensor(r, {C}, 0.5, 1.5),
                                                      random_tensor(r, {C})},
                                          GraphFn([=](const auto& in) {
                                              return project(ops::group_norm(in[0], in[1], in[2], G), R);
                                          })};
                     }});
    cases.push_back({"channel-concat", [&](Rng& r) {
                         const std::size_t N = dim(r, 1, 2), H = dim(r, 1, 3), W = dim(r, 1, 3);
                         const std::size_t Ca = dim(r, 1, 3), Cb = dim(r, 1, 3);
                         auto R = random_tensor(r, {N, Ca + Cb, H, W});
                         return std::pair{std::vector{random_tensor(r, {N, Ca, H, W}), random_tensor(r, {N, Cb, H, W})},
                                          GraphFn([=](const auto& in) {
                                              return project(ops::concat_channels(in[0], in[1]), R);
                                          })};
                     }});
    cases.push_back({"mean-square-error", [&](Rng& r) {
                         const Shape s{dim(r, 1, 3), dim(r, 1, 5)};
                         return std::pair{std::vector{random_tensor(r, s), random_tensor(r, s)},
                                          GraphFn([](const auto& in) { return ops::mse_loss(in[0], in[1]); })};
                     }});
    cases.push_back({"sum", [&](Rng& r) {
                         const Shape s{dim(r, 1, 3), dim(r, 1, 5)};
                         return std::pair{std::vector{random_tensor(r, s)},
                                          GraphFn([](const auto& in) { return ops::sum(in[0]); })};
                     }});
    cases.push_back({"broadcast-add-channelwise", [&](Rng& r) {
                         const std::size_t N = dim(r, 1, 3), C = dim(r, 1, 3);
                         const Shape s{N, C, dim(r, 1, 3), dim(r, 1, 3)};
                         const Shape bs = r.uniform() < 0.5 ? Shape{C} : Shape{N, C};
                         auto R = random_tensor(r, s);
                         return std::pair{std::vector{random_tensor(r, s), random_tensor(r, bs)},
                                          GraphFn([=](const auto& in) {
                                              return project(ops::add_channelwise(in[0], in[1]), R);
                                          })};
                     }});
    cases.push_back({"broadcast-mul-channelwise", [&](Rng& r) {
                         const std::size_t N = dim(r, 1, 3), C = dim(r, 1, 3);
                         const Shape s{N, C, dim(r, 1, 3), dim(r, 1, 3)};
                         const Shape bs = r.uniform() < 0.5 ? Shape{C} : Shape{N, C};
                         auto R = random_tensor(r, s);
                         return std::pair{std::vector{random_tensor(r, s), random_tensor(r, bs)},
                                          GraphFn([=](const auto& in) {
                                              return project(ops::mul_channelwise(in[0], in[1]), R);
                                          })};
                     }});

    std::vector<OpCheckResult> results;
    for (const auto& c : cases) {
        OpCheckResult res{c.name, {}};
        res.report.tolerance = tolerance;
        for (std::size_t trial = 0; trial < trials; ++trial) {
            Rng trial_rng = rng.fork(trial);
            auto [inputs, fn] = c.make(trial_rng);
            const GradCheckReport r = grad_check(fn, std::move(inputs), tolerance);
            res.report.checked += r.checked;
            if (r.max_rel_error >= res.report.max_rel_error) {
                res.report.max_rel_error = r.max_rel_error;
                res.report.worst = "trial " + std::to_string(trial) + " " + r.worst;
            }
        }
        results.push_back(std::move(res));
    }
    return results;
}

// Small CondNet used for the whole-network check.
inline CondNetConfig gradcheck_net_config(std::uint64_t seed = 42) {
    CondNetConfig c;
    c.base_width = 8;
    c.time_embed_dim = 8;
    c.time_hidden = 8;
    c.init_seed = seed;
    return c;
}

// MSE of a CondNet<double> on a random 8x8 batch, differentiated w.r.t. every
// parameter tensor and the input (coordinates sampled per tensor).
inline GradCheckReport check_condnet(double tolerance = 1e-3, std::size_t coords_per_tensor = 6,
                                     std::uint64_t seed = 42) {
    Rng rng(seed);
    CondNet<double> net(gradcheck_net_config(seed));
    const std::size_t N = 2, S = 8;
    auto x = detail::random_tensor(rng, {N, 1, S, S});
    const auto cond = detail::random_tensor(rng, {N, 3, S, S});
    const auto target = detail::random_tensor(rng, {N, 1, S, S});
    const std::vector<double> times{0.3 * 1000.0, 0.8 * 1000.0};

    std::vector<Tensor<double>> inputs = net.parameters();
    // Perturb the identity-initialized norm/affine parameters so their
    // gradients are generic.
    for (auto& t : inputs)
        for (double& v : t.mutable_data()) v += 0.1 * rng.uniform(-1.0, 1.0);
    inputs.push_back(x);
    const GraphFn f = [&](const std::vector<Tensor<double>>& in) {
        return ops::mse_loss(net.forward(in.back(), cond, times), target);
    };
    return grad_check(f, inputs, tolerance, coords_per_tensor, seed);
}

}  // namespace hapticgen
