#pragma once

// Rectified flow matching: straight-line interpolant, velocity regression loss,
// forward-Euler sampling.

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

enum class Coupling { NoiseToTarget, ImageToTarget };

inline std::string to_string(Coupling c) { return c == Coupling::NoiseToTarget ? "noise-to-target" : "image-to-target"; }

inline Coupling parse_coupling(const std::string& s) {
    if (s == "noise-to-target" || s == "noise") return Coupling::NoiseToTarget;
    if (s == "image-to-target" || s == "image") return Coupling::ImageToTarget;
    throw ContractViolation("unknown coupling '" + s + "'");
}

struct FlowConfig {
    Coupling coupling = Coupling::NoiseToTarget;
    std::size_t ode_steps = 50;
    double sigma_aug = 0.05;
    std::size_t image_size = 32;
    std::uint64_t seed = 42;

    void validate() const {
        require(ode_steps >= 1, "flow: ode_steps must be >= 1");
        require(sigma_aug >= 0.0, "flow: sigma_aug must be >= 0");
    }
};

inline void to_json(json& j, const FlowConfig& c) {
    j = json{{"coupling", to_string(c.coupling)},
             {"ode_steps", c.ode_steps},
             {"sigma_aug", c.sigma_aug},
             {"image_size", c.image_size},
             {"seed", c.seed}};
}

inline void from_json(const json& j, FlowConfig& c) {
    c.coupling = parse_coupling(j.at("coupling").get<std::string>());
    c.ode_steps = j.at("ode_steps").get<std::size_t>();
    c.sigma_aug = j.at("sigma_aug").get<double>();
    c.image_size = j.at("image_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

// The network sees flow time scaled up so the sinusoidal embedding spans
// several periods over [0, 1].
inline constexpr double kFlowTimeScale = 1000.0;

template <typename T>
struct Interpolant {
    Tensor<T> x_t;
    Tensor<T> u_t;
};

// x_t = (1 - t) x0 + t x1 and u_t = x1 - x0, with one t per leading-axis sample.
template <typename T>
Interpolant<T> fm_interpolate(const Tensor<T>& x0, const Tensor<T>& x1, std::span<const T> t) {
    require(x0.shape() == x1.shape(),
            "fm_interpolate: shape mismatch " + shape_str(x0.shape()) + " vs " + shape_str(x1.shape()));
    require(!t.empty() && x0.dim(0) % t.size() == 0 && (t.size() == 1 || t.size() == x0.dim(0)),
            "fm_interpolate: need one time per sample or a single shared time");
    const std::size_t per = x0.numel() / t.size();
    std::vector<T> xt(x0.numel()), ut(x0.numel());
    const auto a = x0.data(), b = x1.data();
    for (std::size_t i = 0; i < xt.size(); ++i) {
        const T ti = t[i / per];
        xt[i] = (T{1} - ti) * a[i] + ti * b[i];
        ut[i] = b[i] - a[i];
    }
    return {Tensor<T>::from(x0.shape(), std::move(xt)), Tensor<T>::from(x0.shape(), std::move(ut))};
}

template <typename T>
Interpolant<T> fm_interpolate(const Tensor<T>& x0, const Tensor<T>& x1, T t) {
    return fm_interpolate(x0, x1, std::span<const T>(&t, 1));
}

// L_FM for given endpoints and times. field(x, cond, t) returns the velocity
// estimate with x's shape.
template <typename T, typename Field>
Tensor<T> fm_loss_on(Field&& field, const Tensor<T>& x0, const Tensor<T>& x1, const Tensor<T>& cond,
                     std::span<const T> t) {
    const Interpolant<T> path = fm_interpolate(x0, x1, t);
    const Tensor<T> v = field(path.x_t, cond, t);
    require(v.shape() == x1.shape(), "fm_loss: velocity shape " + shape_str(v.shape()) + " does not match target");
    return ops::mse_loss(v, path.u_t);
}

// Source sample x0 for a batch: standard normal, or the grayscale proxy plus
// sigma_aug noise.
template <typename T>
Tensor<T> fm_draw_source(const FlowConfig& cfg, const Tensor<T>& proxy, Rng& rng) {
    std::vector<T> x0(proxy.numel());
    const auto p = proxy.data();
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x0[i] = cfg.coupling == Coupling::NoiseToTarget ? static_cast<T>(rng.normal())
                                                        : static_cast<T>(p[i] + cfg.sigma_aug * rng.normal());
    }
    return Tensor<T>::from(proxy.shape(), std::move(x0));
}

// One stochastic evaluation of L_FM on a batch: t ~ U[0,1] per sample.
template <typename Field>
Tensor<float> fm_loss(Field&& field, const Batch& batch, const FlowConfig& cfg, Rng& rng) {
    const std::size_t B = batch.target.dim(0);
    std::vector<float> t(B);
    for (auto& v : t) v = static_cast<float>(rng.uniform());
    const Tensor<float> x0 = fm_draw_source(cfg, batch.proxy, rng);
    return fm_loss_on<float>(field, x0, batch.target, batch.condition, t);
}

// Adapts a CondNet to the field signature, scaling flow time for the embedding.
template <typename T>
auto flow_field(const CondNet<T>& net) {
    return [&net](const Tensor<T>& x, const Tensor<T>& cond, std::span<const T> t) {
        std::vector<T> scaled(x.dim(0));
        for (std::size_t i = 0; i < scaled.size(); ++i)
            scaled[i] = static_cast<T>(kFlowTimeScale) * (t.size() == 1 ? t[0] : t[i]);
        return net.forward(x, cond, scaled);
    };
}

// Forward Euler: x_{k+1} = x_k + (1/N) v(k/N, x_k), k = 0..N-1.
template <typename T, typename Field>
Tensor<T> euler_integrate(Field&& field, const Tensor<T>& x0, const Tensor<T>& cond, std::size_t steps) {
    require(steps >= 1, "euler_integrate: steps must be >= 1");
    NoGradGuard no_grad;
    std::vector<T> x(x0.data().begin(), x0.data().end());
    const T dt = T{1} / static_cast<T>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const T t = static_cast<T>(k) / static_cast<T>(steps);
        const Tensor<T> xk = Tensor<T>::from(x0.shape(), x);
        const Tensor<T> v = field(xk, cond, std::span<const T>(&t, 1));
        require(v.shape() == x0.shape(), "euler_integrate: field changed the state shape");
        const auto vd = v.data();
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * vd[i];
    }
    return Tensor<T>::from(x0.shape(), std::move(x));
}

// Height map for one condition: Euler from the coupling's x0 draw, clamped to [0, 1].
template <typename Field>
HeightMap sample_flow(Field&& field, const RgbImage& condition, const FlowConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    require(condition.width == cfg.image_size && condition.height == cfg.image_size,
            "sample_flow: condition is " + std::to_string(condition.width) + "x" + std::to_string(condition.height) +
                ", model was trained at " + std::to_string(cfg.image_size));
    Rng rng(seed);
    const Tensor<float> x0 = fm_draw_source(cfg, plane_tensor(grayscale_proxy(condition)), rng);
    const Tensor<float> x1 = euler_integrate<float>(field, x0, condition_tensor(condition), cfg.ode_steps);
    HeightMap h = to_height_map(x1.data(), condition.width, condition.height);
    for (double& v : h.values) v = std::clamp(v, 0.0, 1.0);
    return h;
}

struct FlowModel {
    FlowConfig flow;
    CondNet<float> net;
};

inline std::string flow_config_json(const FlowConfig& flow, const CondNetConfig& net, const TrainConfig& train) {
    return json{{"model", "flow"}, {"flow", flow}, {"net", net}, {"train", train}}.dump();
}

// Trains a fresh network on the dataset; init and batch order follow the seeds.
inline FlowModel train_flow(const FlowConfig& flow, CondNetConfig net_cfg, const TensorDataset& train,
                            const TrainConfig& tc, TrainResult* result = nullptr, const TrainLogger& log = {}) {
    flow.validate();
    require(train.size() > 0, "train_flow: empty train split");
    require(train.width == flow.image_size && train.height == flow.image_size,
            "train_flow: corpus images are " + std::to_string(train.width) + "x" + std::to_string(train.height) +
                ", config expects " + std::to_string(flow.image_size));
    FlowModel model{flow, CondNet<float>(net_cfg)};
    TrainResult r = train_loop(
        model.net, train, tc,
        [&](const CondNet<float>& net, const Batch& b, Rng& rng) { return fm_loss(flow_field(net), b, flow, rng); },
        log);
    if (result) *result = std::move(r);
    return model;
}

inline Checkpoint flow_checkpoint(const FlowModel& m, const TrainConfig& tc) {
    return make_checkpoint(m.net.named_parameters(), flow_config_json(m.flow, m.net.config(), tc));
}

// ---- one-dimensional toy -----------------------------------------------------

// v(t, x) = a(t) x + b(t), with (a, b) from a one-hidden-layer MLP on t.
// Linear in x, which is exact for Gaussian-to-Gaussian transport.
template <typename T>
struct AffineTimeField {
    std::size_t hidden = 32;
    Tensor<T> w1, b1, wa, ba, wb, bb;

    explicit AffineTimeField(std::uint64_t seed, std::size_t hidden_units = 32) : hidden(hidden_units) {
        Rng rng(seed);
        const auto init = [&](Shape s, double bound) {
            std::vector<T> v(numel_of(s));
            for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
            return Tensor<T>::from(std::move(s), std::move(v), true);
        };
        w1 = init({1, hidden}, 1.0);
        b1 = init({hidden}, 1.0);
        const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
        wa = init({hidden, 1}, k);
        ba = init({1}, k);
        wb = init({hidden, 1}, k);
        bb = init({1}, k);
    }

    std::vector<Tensor<T>> parameters() const { return {w1, b1, wa, ba, wb, bb}; }

    // x: [N, 1]; t: one value or one per row.
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>&, std::span<const T> t) const {
        using namespace ops;
        const std::size_t N = x.dim(0);
        std::vector<T> tv(N);
        for (std::size_t i = 0; i < N; ++i) tv[i] = t.size() == 1 ? t[0] : t[i];
        const Tensor<T> tt = Tensor<T>::from({N, 1}, std::move(tv));
        const Tensor<T> h = silu(add_channelwise(matmul(tt, w1), b1));
        const Tensor<T> a = add_channelwise(matmul(h, wa), ba);
        const Tensor<T> b = add_channelwise(matmul(h, wb), bb);
        return add(mul(a, x), b);
    }
};

struct ToyFlowConfig {
    double source_mean = 0.0, source_std = 1.0;
    double target_mean = 4.0, target_std = 0.5;
    std::size_t steps = 1500;
    std::size_t batch_size = 256;
    double learning_rate = 1e-2;
    std::uint64_t seed = 42;
};

inline AffineTimeField<double> train_toy_flow(const ToyFlowConfig& cfg, std::vector<double>* losses = nullptr) {
    AffineTimeField<double> field(cfg.seed);
    Rng rng = Rng(cfg.seed).fork(7);
    AdamState<double> state;
    state.config.learning_rate = cfg.learning_rate;
    auto params = field.parameters();
    const std::size_t B = cfg.batch_size;
    const Tensor<double> none;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<double> x0(B), x1(B), t(B);
        for (std::size_t i = 0; i < B; ++i) {
            x0[i] = rng.normal(cfg.source_mean, cfg.source_std);
            x1[i] = rng.normal(cfg.target_mean, cfg.target_std);
            t[i] = rng.uniform();
        }
        for (auto& p : params) p.zero_grad();
        const Tensor<double> loss = fm_loss_on<double>(field, Tensor<double>::from({B, 1}, std::move(x0)),
                                                       Tensor<double>::from({B, 1}, std::move(x1)), none, t);
        loss.backward();
        adam_step(params, state);
        if (losses) losses->push_back(loss.item());
    }
    return field;
}

// Euler-transports n draws of the source distribution.
inline std::vector<double> sample_toy_flow(const AffineTimeField<double>& field, const ToyFlowConfig& cfg,
                                           std::size_t n, std::size_t ode_steps, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x0(n);
    for (auto& v : x0) v = rng.normal(cfg.source_mean, cfg.source_std);
    const Tensor<double> out = euler_integrate<double>(field, Tensor<double>::from({n, 1}, std::move(x0)),
                                                       Tensor<double>(), ode_steps);
    return out.values();
}

}  // namespace hapticgen
