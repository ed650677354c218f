#pragma once

// Conditional U-Net used as both the flow velocity field and the diffusion
// noise predictor.
//
//   concat(x_t, condition) -> conv3x3 -> w
//   2 res blocks (w)   -> stride-2 conv -> 2w
//   2 res blocks (2w)  -> stride-2 conv -> 4w
//   2 res blocks (4w)
//   upsample, concat skip(2w) -> conv -> 2w, 2 res blocks
//   upsample, concat skip(w)  -> conv -> w,  2 res blocks
//   group-norm, SiLU, conv3x3 -> target channels
//
// The scalar time of each sample enters through a sinusoidal embedding and a
// two-layer MLP whose second layer yields a (scale, shift) pair per residual
// block: h <- h * (1 + scale) + shift after the block's second normalization.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hapticgen/errors.hpp"
#include "hapticgen/rng.hpp"
#include "hapticgen/tensor.hpp"

namespace hapticgen {

struct CondNetConfig {
    std::size_t target_channels = 1;
    std::size_t cond_channels = 3;
    std::size_t base_width = 32;
    std::size_t depth = 2;
    std::size_t time_embed_dim = 64;
    std::size_t time_hidden = 128;
    std::size_t groups = 8;
    std::uint64_t init_seed = 42;

    void validate() const {
        require(target_channels >= 1 && cond_channels >= 1, "CondNet: channel counts must be positive");
        require(depth == 2, "CondNet: only depth 2 is supported");
        require(base_width >= groups && base_width % groups == 0,
                "CondNet: base width must be a positive multiple of the group count");
        require(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "CondNet: time embedding dimension must be even");
        require(time_hidden >= 1, "CondNet: time MLP width must be positive");
    }

    bool operator==(const CondNetConfig&) const = default;
};

// Sinusoidal embedding of one scalar per sample: [N, dim].
template <typename T>
Tensor<T> sinusoidal_embedding(std::span<const T> times, std::size_t dim) {
    const std::size_t half = dim / 2;
    std::vector<T> out(times.size() * dim);
    for (std::size_t n = 0; n < times.size(); ++n) {
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double arg = static_cast<double>(times[n]) * freq;
            out[n * dim + i] = static_cast<T>(std::sin(arg));
            out[n * dim + half + i] = static_cast<T>(std::cos(arg));
        }
    }
    return Tensor<T>::from({times.size(), dim}, std::move(out));
}

template <typename T>
class CondNet {
public:
    explicit CondNet(CondNetConfig config) : config_(config) {
        config_.validate();
        Rng rng(config_.init_seed);
        build(rng);
    }

    const CondNetConfig& config() const { return config_; }

    std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() { return params_; }
    const std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() const { return params_; }

    std::vector<Tensor<T>> parameters() const {
        std::vector<Tensor<T>> out;
        out.reserve(params_.size());
        for (const auto& [name, t] : params_) out.push_back(t);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    // x: [N, target, H, W], cond: [N, cond, H, W], times: N scalars.
    // H and W must be divisible by 4.
    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& cond, std::span<const T> times) const {
        using namespace ops;
        require(x.rank() == 4 && cond.rank() == 4, "CondNet: inputs must be NCHW");
        require(x.dim(1) == config_.target_channels && cond.dim(1) == config_.cond_channels,
                "CondNet: channel mismatch, got x " + shape_str(x.shape()) + " cond " + shape_str(cond.shape()));
        require(x.dim(0) == cond.dim(0) && x.dim(2) == cond.dim(2) && x.dim(3) == cond.dim(3),
                "CondNet: x and condition must share batch and spatial dims");
        require(x.dim(2) % 4 == 0 && x.dim(3) % 4 == 0, "CondNet: spatial dims must be divisible by 4");
        require(times.size() == x.dim(0), "CondNet: one time value per sample required");

        const Tensor<T> emb = sinusoidal_embedding<T>(times, config_.time_embed_dim);
        const Tensor<T> temb = silu(linear(emb, "time.fc1"));

        Tensor<T> h = conv(concat_channels(x, cond), "in");
        h = res_block(h, temb, "enc0.res0");
        const Tensor<T> skip0 = res_block(h, temb, "enc0.res1");
        h = conv(skip0, "down1", 2);
        h = res_block(h, temb, "enc1.res0");
        const Tensor<T> skip1 = res_block(h, temb, "enc1.res1");
        h = conv(skip1, "down2", 2);
        h = res_block(h, temb, "mid.res0");
        h = res_block(h, temb, "mid.res1");

        h = conv(concat_channels(upsample2x(h), skip1), "up1");
        h = res_block(h, temb, "dec1.res0");
        h = res_block(h, temb, "dec1.res1");
        h = conv(concat_channels(upsample2x(h), skip0), "up0");
        h = res_block(h, temb, "dec0.res0");
        h = res_block(h, temb, "dec0.res1");

        h = silu(norm(h, "out.norm"));
        return conv(h, "out");
    }

    Tensor<T>& param(const std::string& name) {
        for (auto& [n, t] : params_)
            if (n == name) return t;
        throw ContractViolation("CondNet: unknown parameter " + name);
    }
    const Tensor<T>& param(const std::string& name) const { return const_cast<CondNet*>(this)->param(name); }

private:
    void add_uniform(Rng& rng, const std::string& name, Shape shape, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<T> v(numel_of(shape));
        for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
        params_.emplace_back(name, Tensor<T>::from(std::move(shape), std::move(v), true));
    }
    void add_const(const std::string& name, Shape shape, T value) {
        params_.emplace_back(name, Tensor<T>::full(std::move(shape), value, true));
    }

    void add_conv(Rng& rng, const std::string& name, std::size_t cin, std::size_t cout) {
        add_uniform(rng, name + ".w", {cout, cin, 3, 3}, cin * 9);
        add_uniform(rng, name + ".b", {cout}, cin * 9);
    }
    void add_linear(Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
        add_uniform(rng, name + ".w", {in, out}, in);
        add_uniform(rng, name + ".b", {out}, in);
    }
    void add_norm(const std::string& name, std::size_t c) {
        add_const(name + ".gamma", {c}, T{1});
        add_const(name + ".beta", {c}, T{0});
    }
    void add_res_block(Rng& rng, const std::string& name, std::size_t c) {
        add_norm(name + ".norm1", c);
        add_conv(rng, name + ".conv1", c, c);
        add_norm(name + ".norm2", c);
        add_linear(rng, name + ".scale", config_.time_hidden, c);
        add_linear(rng, name + ".shift", config_.time_hidden, c);
        add_conv(rng, name + ".conv2", c, c);
    }

    void build(Rng& rng) {
        const std::size_t w = config_.base_width;
        add_linear(rng, "time.fc1", config_.time_embed_dim, config_.time_hidden);
        add_conv(rng, "in", config_.target_channels + config_.cond_channels, w);
        add_res_block(rng, "enc0.res0", w);
        add_res_block(rng, "enc0.res1", w);
        add_conv(rng, "down1", w, 2 * w);
        add_res_block(rng, "enc1.res0", 2 * w);
        add_res_block(rng, "enc1.res1", 2 * w);
        add_conv(rng, "down2", 2 * w, 4 * w);
        add_res_block(rng, "mid.res0", 4 * w);
        add_res_block(rng, "mid.res1", 4 * w);
        add_conv(rng, "up1", 4 * w + 2 * w, 2 * w);
        add_res_block(rng, "dec1.res0", 2 * w);
        add_res_block(rng, "dec1.res1", 2 * w);
        add_conv(rng, "up0", 2 * w + w, w);
        add_res_block(rng, "dec0.res0", w);
        add_res_block(rng, "dec0.res1", w);
        add_norm("out.norm", w);
        add_conv(rng, "out", w, config_.target_channels);
    }

    Tensor<T> conv(const Tensor<T>& x, const std::string& name, int stride = 1) const {
        return ops::add_channelwise(ops::conv3x3(x, param(name + ".w"), stride), param(name + ".b"));
    }
    Tensor<T> linear(const Tensor<T>& x, const std::string& name) const {
        return ops::add_channelwise(ops::matmul(x, param(name + ".w")), param(name + ".b"));
    }
    Tensor<T> norm(const Tensor<T>& x, const std::string& name) const {
        return ops::group_norm(x, param(name + ".gamma"), param(name + ".beta"), config_.groups);
    }
    Tensor<T> res_block(const Tensor<T>& x, const Tensor<T>& temb, const std::string& name) const {
        using namespace ops;
        Tensor<T> h = conv(silu(norm(x, name + ".norm1")), name + ".conv1");
        h = norm(h, name + ".norm2");
        h = add(h, mul_channelwise(h, linear(temb, name + ".scale")));
        h = add_channelwise(h, linear(temb, name + ".shift"));
        h = conv(silu(h), name + ".conv2");
        return add(x, h);
    }

    CondNetConfig config_;
    std::vector<std::pair<std::string, Tensor<T>>> params_;
};

}  // namespace hapticgen
