#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hapticgen/errors.hpp"
#include "hapticgen/tensor.hpp"

namespace hapticgen {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

// One bias-corrected Adam update on explicit gradient buffers.
template <typename T>
void adam_step(std::span<std::span<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
    require(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
    if (state.first_moment.empty() && state.step_count == 0) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), T{0});
            state.second_moment.emplace_back(p.size(), T{0});
        }
    }
    require(state.first_moment.size() == params.size(), "adam_step: optimizer state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].size() == grads[i].size() && state.first_moment[i].size() == params[i].size(),
                "adam_step: shape mismatch for parameter " + std::to_string(i));
    }
    ++state.step_count;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i][j];
            const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * g;
            const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            params[i][j] = static_cast<T>(params[i][j] - c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
        }
    }
}

// Convenience overload: update tensors in place from their accumulated grads.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
    std::vector<std::span<T>> p;
    std::vector<std::span<const T>> g;
    p.reserve(params.size());
    g.reserve(params.size());
    for (auto& t : params) {
        require(t.has_grad(), "adam_step: parameter without gradient buffer");
        p.push_back(t.mutable_data());
        g.push_back(t.grad());
    }
    adam_step<T>(std::span<std::span<T>>(p), std::span<const std::span<const T>>(g), state);
}

}  // namespace hapticgen
