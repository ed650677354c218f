#pragma once

// Pixel-space DDPM with an epsilon-predicting network and ancestral sampling.
// Step indices are 1-based: t = 1..T.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hapticgen/checkpoint.hpp"
#include "hapticgen/condnet.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/rng.hpp"
#include "hapticgen/tensor.hpp"
#include "hapticgen/training.hpp"

namespace hapticgen {

struct NoiseSchedule {
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    std::size_t steps() const { return beta.size(); }
    double beta_at(std::size_t t) const { return beta.at(index(t)); }
    double alpha_at(std::size_t t) const { return alpha.at(index(t)); }
    double alpha_bar_at(std::size_t t) const { return alpha_bar.at(index(t)); }

private:
    std::size_t index(std::size_t t) const {
        require(t >= 1 && t <= beta.size(),
                "diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(beta.size()) + "]");
        return t - 1;
    }
};

struct DiffusionConfig {
    std::size_t steps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::size_t image_size = 32;
    std::uint64_t seed = 42;
};

inline void to_json(json& j, const DiffusionConfig& c) {
    j = json{{"steps", c.steps},
             {"beta_start", c.beta_start},
             {"beta_end", c.beta_end},
             {"image_size", c.image_size},
             {"seed", c.seed}};
}

inline void from_json(const json& j, DiffusionConfig& c) {
    c.steps = j.at("steps").get<std::size_t>();
    c.beta_start = j.at("beta_start").get<double>();
    c.beta_end = j.at("beta_end").get<double>();
    c.image_size = j.at("image_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

// Linear beta from beta_start to beta_end over T steps.
inline NoiseSchedule make_schedule(std::size_t T, double beta_start, double beta_end) {
    require(T >= 1, "make_schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "make_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    double prod = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
        const double b = T == 1 ? beta_start
                                : beta_start + static_cast<double>(t - 1) / static_cast<double>(T - 1) * (beta_end - beta_start);
        s.beta.push_back(b);
        s.alpha.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bar.push_back(prod);
    }
    return s;
}

inline NoiseSchedule make_schedule(const DiffusionConfig& c) { return make_schedule(c.steps, c.beta_start, c.beta_end); }

// Closed-form forward sample z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
template <typename T>
std::vector<T> q_sample(std::span<const T> z0, std::size_t t, std::span<const T> eps, const NoiseSchedule& s) {
    require(z0.size() == eps.size(), "q_sample: eps must have the shape of z0");
    const double ab = s.alpha_bar_at(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<T> out(z0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a * z0[i] + b * eps[i]);
    return out;
}

// One forward transition z_t = sqrt(alpha_t) z_{t-1} + sqrt(beta_t) xi, in place.
template <typename T>
void q_step(std::span<T> z, std::size_t t, const NoiseSchedule& s, Rng& rng) {
    const double a = std::sqrt(s.alpha_at(t)), b = std::sqrt(s.beta_at(t));
    for (auto& v : z) v = static_cast<T>(a * v + b * rng.normal());
}

// t successive single-step noisings starting from z0.
template <typename T>
std::vector<T> q_sample_sequential(std::span<const T> z0, std::size_t t, const NoiseSchedule& s, Rng& rng) {
    std::vector<T> z(z0.begin(), z0.end());
    for (std::size_t k = 1; k <= t; ++k) q_step<T>(z, k, s, rng);
    return z;
}

// field(z_t, cond, steps) returns the noise estimate with z_t's shape.
template <typename T, typename Field>
Tensor<T> ddpm_loss_on(Field&& field, const Tensor<T>& z0, const Tensor<T>& eps, const Tensor<T>& cond,
                       std::span<const std::size_t> t, const NoiseSchedule& s) {
    require(z0.shape() == eps.shape(), "ddpm_loss: eps must have the shape of z0");
    require(t.size() == z0.dim(0), "ddpm_loss: one step index per sample required");
    const std::size_t per = z0.numel() / t.size();
    std::vector<T> zt(z0.numel());
    std::vector<T> tt(t.size());
    for (std::size_t n = 0; n < t.size(); ++n) {
        const auto base = static_cast<std::ptrdiff_t>(n * per);
        const auto row = q_sample<T>(z0.data().subspan(base, per), t[n], eps.data().subspan(base, per), s);
        std::copy(row.begin(), row.end(), zt.begin() + base);
        tt[n] = static_cast<T>(t[n]);
    }
    const Tensor<T> pred = field(Tensor<T>::from(z0.shape(), std::move(zt)), cond, std::span<const T>(tt));
    require(pred.shape() == eps.shape(), "ddpm_loss: prediction shape " + shape_str(pred.shape()) + " does not match");
    return ops::mse_loss(pred, eps);
}

// Heights [0, 1] -> diffusion space [-1, 1].
template <typename T>
Tensor<T> to_signed_unit(const Tensor<T>& h) {
    std::vector<T> v(h.data().begin(), h.data().end());
    for (auto& e : v) e = T{2} * e - T{1};
    return Tensor<T>::from(h.shape(), std::move(v));
}

// One stochastic evaluation: t ~ U{1..T}, eps ~ N(0, I) per sample.
template <typename Field>
Tensor<float> ddpm_loss(Field&& field, const Batch& batch, const NoiseSchedule& s, Rng& rng) {
    const std::size_t B = batch.target.dim(0);
    std::vector<std::size_t> t(B);
    for (auto& v : t) v = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(s.steps())));
    std::vector<float> eps(batch.target.numel());
    for (auto& e : eps) e = static_cast<float>(rng.normal());
    return ddpm_loss_on<float>(field, to_signed_unit(batch.target), Tensor<float>::from(batch.target.shape(), std::move(eps)),
                               batch.condition, t, s);
}

template <typename T>
auto ddpm_field(const CondNet<T>& net) {
    return [&net](const Tensor<T>& z, const Tensor<T>& cond, std::span<const T> t) { return net.forward(z, cond, t); };
}

// Ancestral reverse process from z_T to z_0, returned in diffusion space.
//   z_{t-1} = (z_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sqrt(beta_t) xi,  xi = 0 at t = 1
template <typename T, typename Field>
Tensor<T> ddpm_reverse(Field&& field, const Tensor<T>& z_T, const Tensor<T>& cond, const NoiseSchedule& s, Rng& rng) {
    NoGradGuard no_grad;
    std::vector<T> z(z_T.data().begin(), z_T.data().end());
    const std::size_t N = z_T.dim(0);
    for (std::size_t t = s.steps(); t >= 1; --t) {
        const std::vector<T> tt(N, static_cast<T>(t));
        const Tensor<T> eps_hat = field(Tensor<T>::from(z_T.shape(), z), cond, std::span<const T>(tt));
        require(eps_hat.shape() == z_T.shape(), "ddpm_reverse: prediction changed the state shape");
        const double beta = s.beta_at(t);
        const double coef = beta / std::sqrt(1.0 - s.alpha_bar_at(t));
        const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
        const double sigma = std::sqrt(beta);
        const auto e = eps_hat.data();
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double noise = t > 1 ? sigma * rng.normal() : 0.0;
            z[i] = static_cast<T>(inv_sqrt_alpha * (z[i] - coef * e[i]) + noise);
        }
    }
    return Tensor<T>::from(z_T.shape(), std::move(z));
}

// Height map for one condition: z_T ~ N(0, I), reverse process, [-1,1] -> [0,1], clamp.
template <typename Field>
HeightMap sample_ddpm(Field&& field, const RgbImage& condition, const DiffusionConfig& cfg, const NoiseSchedule& s,
                      std::uint64_t seed) {
    require(condition.width == cfg.image_size && condition.height == cfg.image_size,
            "sample_ddpm: condition is " + std::to_string(condition.width) + "x" + std::to_string(condition.height) +
                ", model was trained at " + std::to_string(cfg.image_size));
    Rng rng(seed);
    std::vector<float> zT(condition.width * condition.height);
    for (auto& v : zT) v = static_cast<float>(rng.normal());
    const Tensor<float> z0 = ddpm_reverse<float>(
        field, Tensor<float>::from({1, 1, condition.height, condition.width}, std::move(zT)), condition_tensor(condition),
        s, rng);
    HeightMap h = to_height_map(z0.data(), condition.width, condition.height);
    for (double& v : h.values) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
    return h;
}

struct DdpmModel {
    DiffusionConfig diffusion;
    CondNet<float> net;
};

inline std::string ddpm_config_json(const DiffusionConfig& d, const CondNetConfig& net, const TrainConfig& train) {
    return json{{"model", "ddpm"}, {"diffusion", d}, {"net", net}, {"train", train}}.dump();
}

inline DdpmModel train_ddpm(const DiffusionConfig& d, CondNetConfig net_cfg, const TensorDataset& train,
                            const TrainConfig& tc, TrainResult* result = nullptr, const TrainLogger& log = {}) {
    require(train.size() > 0, "train_ddpm: empty train split");
    require(train.width == d.image_size && train.height == d.image_size,
            "train_ddpm: corpus images are " + std::to_string(train.width) + "x" + std::to_string(train.height) +
                ", config expects " + std::to_string(d.image_size));
    const NoiseSchedule s = make_schedule(d);
    DdpmModel model{d, CondNet<float>(net_cfg)};
    TrainResult r = train_loop(
        model.net, train, tc,
        [&](const CondNet<float>& net, const Batch& b, Rng& rng) { return ddpm_loss(ddpm_field(net), b, s, rng); }, log);
    if (result) *result = std::move(r);
    return model;
}

inline Checkpoint ddpm_checkpoint(const DdpmModel& m, const TrainConfig& tc) {
    return make_checkpoint(m.net.named_parameters(), ddpm_config_json(m.diffusion, m.net.config(), tc));
}

}  // namespace hapticgen
