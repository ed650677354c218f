#pragma once

// Corpus-to-tensor packing and the minibatch loop shared by the flow and
// diffusion trainers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticgen/condnet.hpp"
#include "hapticgen/corpus.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/heightmap.hpp"
#include "hapticgen/optim.hpp"
#include "hapticgen/rng.hpp"
#include "hapticgen/tensor.hpp"

namespace hapticgen {

using json = nlohmann::json;

inline constexpr double kDivergenceLimit = 1e6;

// Pairs packed NCHW. Conditions are RGB mapped to [-1, 1]; targets and
// proxies are heights in [0, 1].
struct TensorDataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::string> ids;
    std::vector<float> condition;
    std::vector<float> target;
    std::vector<float> proxy;

    std::size_t size() const { return ids.size(); }
    std::size_t plane() const { return height * width; }
};

inline void append_condition(std::vector<float>& out, const RgbImage& img) {
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < img.width * img.height; ++i)
            out.push_back(static_cast<float>(2.0 * img.values[3 * i + c] - 1.0));
}

inline void append_plane(std::vector<float>& out, const HeightMap& h) {
    for (double v : h.values) out.push_back(static_cast<float>(v));
}

inline TensorDataset make_dataset(const std::vector<PairedSample>& pairs) {
    require(!pairs.empty(), "dataset: no pairs");
    TensorDataset ds;
    ds.width = pairs.front().image.width;
    ds.height = pairs.front().image.height;
    for (const auto& p : pairs) {
        require(p.image.same_size(ds.width, ds.height) && p.height.same_size(ds.width, ds.height),
                "dataset: pair " + p.id + " differs in size from the first pair");
        ds.ids.push_back(p.id);
        append_condition(ds.condition, p.image);
        append_plane(ds.target, p.height);
        append_plane(ds.proxy, grayscale_proxy(p.image));
    }
    return ds;
}

// [1, 3, H, W] condition tensor for one image.
inline Tensor<float> condition_tensor(const RgbImage& img) {
    std::vector<float> v;
    v.reserve(3 * img.width * img.height);
    append_condition(v, img);
    return Tensor<float>::from({1, 3, img.height, img.width}, std::move(v));
}

inline Tensor<float> plane_tensor(const HeightMap& h) {
    std::vector<float> v;
    v.reserve(h.values.size());
    append_plane(v, h);
    return Tensor<float>::from({1, 1, h.height, h.width}, std::move(v));
}

inline HeightMap to_height_map(std::span<const float> plane, std::size_t width, std::size_t height) {
    HeightMap h(width, height);
    for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = plane[i];
    return h;
}

struct Batch {
    Tensor<float> condition;  // [B, 3, H, W]
    Tensor<float> target;     // [B, 1, H, W]
    Tensor<float> proxy;      // [B, 1, H, W]
};

inline Batch gather(const TensorDataset& ds, std::span<const std::size_t> rows) {
    const std::size_t B = rows.size(), P = ds.plane();
    std::vector<float> cond(B * 3 * P), target(B * P), proxy(B * P);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t r = rows[b];
        std::copy_n(ds.condition.begin() + static_cast<std::ptrdiff_t>(r * 3 * P), 3 * P,
                    cond.begin() + static_cast<std::ptrdiff_t>(b * 3 * P));
        std::copy_n(ds.target.begin() + static_cast<std::ptrdiff_t>(r * P), P,
                    target.begin() + static_cast<std::ptrdiff_t>(b * P));
        std::copy_n(ds.proxy.begin() + static_cast<std::ptrdiff_t>(r * P), P,
                    proxy.begin() + static_cast<std::ptrdiff_t>(b * P));
    }
    return {Tensor<float>::from({B, 3, ds.height, ds.width}, std::move(cond)),
            Tensor<float>::from({B, 1, ds.height, ds.width}, std::move(target)),
            Tensor<float>::from({B, 1, ds.height, ds.width}, std::move(proxy))};
}

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double grad_clip = 1.0;  // global L2 norm; 0 disables
    bool cosine_decay = true;  // anneal the learning rate to zero over the run
    double ema_decay = 0.0;    // weight averaging; 0 disables, else in (0, 1)
    std::uint64_t seed = 42;
};

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"steps", c.steps},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"grad_clip", c.grad_clip},
             {"cosine_decay", c.cosine_decay},
             {"ema_decay", c.ema_decay},
             {"seed", c.seed}};
}

inline void to_json(json& j, const CondNetConfig& c) {
    j = json{{"target_channels", c.target_channels}, {"cond_channels", c.cond_channels},
             {"base_width", c.base_width},           {"depth", c.depth},
             {"time_embed_dim", c.time_embed_dim},   {"time_hidden", c.time_hidden},
             {"groups", c.groups},                   {"init_seed", c.init_seed}};
}

inline void from_json(const json& j, CondNetConfig& c) {
    c.target_channels = j.at("target_channels").get<std::size_t>();
    c.cond_channels = j.at("cond_channels").get<std::size_t>();
    c.base_width = j.at("base_width").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
    c.time_hidden = j.at("time_hidden").get<std::size_t>();
    c.groups = j.at("groups").get<std::size_t>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
}

struct TrainResult {
    std::vector<double> step_loss;
    std::vector<double> epoch_loss;
};

using TrainLogger = std::function<void(const std::string&)>;

// Scales all gradients so their joint L2 norm is at most max_norm.
template <typename T>
void clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (T g : p.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const auto s = static_cast<T>(max_norm / norm);
    for (auto& p : params)
        for (T& g : p.mutable_grad()) g *= s;
}

// Epoch-shuffled minibatch Adam. loss_fn(batch, rng) returns the scalar loss
// tensor for one batch. With ema_decay > 0 the net ends up holding the
// exponential moving average of its weights instead of the last iterate.
template <typename LossFn>
TrainResult train_loop(CondNet<float>& net, const TensorDataset& ds, const TrainConfig& cfg, LossFn&& loss_fn,
                       const TrainLogger& log = {}) {
    require(ds.size() > 0, "training: empty train split");
    require(cfg.steps >= 1 && cfg.batch_size >= 1, "training: steps and batch size must be positive");
    require(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0, "training: ema decay must be in [0, 1)");
    const std::size_t batch = std::min(cfg.batch_size, ds.size());

    Rng root(cfg.seed);
    Rng order_rng = root.fork(1);
    Rng loss_rng = root.fork(2);
    AdamState<float> state;
    state.config.learning_rate = cfg.learning_rate;
    std::vector<Tensor<float>> params = net.parameters();
    std::vector<std::vector<double>> ema;
    if (cfg.ema_decay > 0.0)
        for (const auto& p : params) ema.emplace_back(p.data().begin(), p.data().end());

    std::vector<std::size_t> order(ds.size());
    std::size_t cursor = order.size();
    std::size_t epoch = 0;
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    TrainResult result;

    const auto close_epoch = [&] {
        if (epoch_steps == 0) return;
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
        if (log) {
            std::ostringstream os;
            os << "epoch " << epoch << " step " << result.step_loss.size() << " loss " << result.epoch_loss.back();
            log(os.str());
        }
        ++epoch;
        epoch_sum = 0.0;
        epoch_steps = 0;
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        if (cursor + batch > order.size()) {
            close_epoch();
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
            cursor = 0;
        }
        const Batch b = gather(ds, std::span<const std::size_t>(order.data() + cursor, batch));
        cursor += batch;

        net.zero_grad();
        const Tensor<float> loss = loss_fn(net, b, loss_rng);
        const double value = loss.item();
        if (!(value <= kDivergenceLimit))
            throw NumericFault("training diverged at step " + std::to_string(step) + ": loss " + std::to_string(value) +
                               " exceeds " + std::to_string(kDivergenceLimit));
        loss.backward();
        if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
        if (cfg.cosine_decay)
            state.config.learning_rate = cfg.learning_rate * 0.5 *
                                         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.steps)));
        adam_step(params, state);
        if (!ema.empty()) {
            // Short warm-up so the average is not dominated by the initialization.
            const double d = std::min(cfg.ema_decay, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
            for (std::size_t i = 0; i < params.size(); ++i) {
                const auto w = params[i].data();
                for (std::size_t j = 0; j < w.size(); ++j) ema[i][j] = d * ema[i][j] + (1.0 - d) * w[j];
            }
        }

        result.step_loss.push_back(value);
        epoch_sum += value;
        ++epoch_steps;
    }
    close_epoch();
    for (std::size_t i = 0; i < ema.size(); ++i) {
        auto w = params[i].mutable_data();
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<float>(ema[i][j]);
    }
    return result;
}

}  // namespace hapticgen
