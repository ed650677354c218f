#pragma once

// Dense NCHW tensors with a reverse-mode gradient tape.
//
// Every op builds a node holding its forward value and a closure that pushes
// the upstream gradient into its parents. Values are checked for NaN/Inf after
// every forward op and after every backward pass.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hapticgen/errors.hpp"

namespace hapticgen {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T{0});
    }
};

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw NumericFault(op, i);
    }
}

// C[M,N] += A * B where A(i, k) = A[i * a_row + k * a_col] and B is row-major
// [K,N]. Four rows of C share each load of a B row; columns are tiled so the
// four C segments stay in L1.
template <typename T>
void gemm_strided_a(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t a_row,
                    std::size_t a_col, const T* B, T* C) {
    constexpr std::size_t MR = 4, NT = 512;
    const std::size_t m_main = M - M % MR;
    for (std::size_t j0 = 0; j0 < N; j0 += NT) {
        const std::size_t nj = std::min(NT, N - j0);
        for (std::size_t i = 0; i < m_main; i += MR) {
            T* __restrict c0 = C + i * N + j0;
            T* __restrict c1 = c0 + N;
            T* __restrict c2 = c1 + N;
            T* __restrict c3 = c2 + N;
            for (std::size_t k = 0; k < K; ++k) {
                const T a0 = A[i * a_row + k * a_col];
                const T a1 = A[(i + 1) * a_row + k * a_col];
                const T a2 = A[(i + 2) * a_row + k * a_col];
                const T a3 = A[(i + 3) * a_row + k * a_col];
                const T* __restrict b = B + k * N + j0;
                for (std::size_t j = 0; j < nj; ++j) {
                    const T bj = b[j];
                    c0[j] += a0 * bj;
                    c1[j] += a1 * bj;
                    c2[j] += a2 * bj;
                    c3[j] += a3 * bj;
                }
            }
        }
        for (std::size_t i = m_main; i < M; ++i) {
            T* __restrict c = C + i * N + j0;
            for (std::size_t k = 0; k < K; ++k) {
                const T a = A[i * a_row + k * a_col];
                const T* __restrict b = B + k * N + j0;
                for (std::size_t j = 0; j < nj; ++j) c[j] += a * b[j];
            }
        }
    }
}

// C[M,N] += A[M,K] B[K,N], row-major.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    gemm_strided_a(M, N, K, A, K, 1, B, C);
}

// C[M,N] += A^T B with A stored [K,M], B stored [K,N].
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    gemm_strided_a(M, N, K, A, 1, M, B, C);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// C[M,N] += A B^T with A stored [M,K], B stored [N,K]. Computed as
// C^T = B A^T so that only the (usually smaller) A is transposed.
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    std::vector<T> at(K * M);
    transpose(M, K, A, at.data());
    std::vector<T> ct(N * M, T{0});
    gemm_nn(N, M, K, B, at.data(), ct.data());
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t i = 0; i < M; ++i) C[i * N + j] += ct[j * M + i];
}

}  // namespace detail

// Disables tape recording in the current scope (sampling, evaluation).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() : node_(std::make_shared<detail::Node<T>>()) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> data(numel_of(shape), T{0});
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        std::vector<T> data(numel_of(shape), value);
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        require(numel_of(shape) == data.size(),
                "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                    shape_str(shape));
        for (auto d : shape) require(d > 0, "tensor dimensions must be positive: " + shape_str(shape));
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        t.node_->requires_grad = requires_grad;
        if (requires_grad) t.node_->ensure_grad();
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    std::span<T> mutable_data() { return node_->value; }
    const std::vector<T>& values() const { return node_->value; }

    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on) node_->ensure_grad();
        else node_->grad.clear();
    }
    void zero_grad() {
        if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
    }

    T item() const {
        require(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    // A leaf holding a copy of the value, cut from the tape.
    Tensor detach() const { return from(shape(), node_->value, false); }

    // Runs reverse-mode accumulation from this scalar. Leaf gradients
    // accumulate across calls; interior gradients are reset.
    void backward() const {
        require(numel() == 1, "backward() requires a scalar output, got " + shape_str(shape()));
        if (!node_->requires_grad) return;

        std::vector<detail::Node<T>*> order;
        std::unordered_set<detail::Node<T>*> seen;
        std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                detail::Node<T>* p = n->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (auto* n : order) {
            if (n->is_leaf()) n->ensure_grad();
            else n->grad.assign(n->value.size(), T{0});
        }
        node_->grad[0] = T{1};
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
        }
        for (auto* n : order) {
            for (std::size_t i = 0; i < n->grad.size(); ++i) {
                if (!std::isfinite(n->grad[i])) throw NumericFault(std::string("backward:") + n->op, i);
            }
        }
    }

    const NodePtr& node() const { return node_; }

    // Builds an op result. The tape is only recorded when grad mode is on and
    // some input requires a gradient.
    static Tensor make_result(const char* op, Shape shape, std::vector<T> value,
                              std::initializer_list<const Tensor*> inputs,
                              std::function<void(detail::Node<T>&)> backward_fn) {
        detail::check_finite<T>(value, op);
        Tensor out;
        out.node_->op = op;
        out.node_->shape = std::move(shape);
        out.node_->value = std::move(value);
        bool needs = false;
        if (detail::grad_mode_flag()) {
            for (const Tensor* in : inputs) needs = needs || in->requires_grad();
        }
        if (needs) {
            out.node_->requires_grad = true;
            for (const Tensor* in : inputs) out.node_->parents.push_back(in->node_);
            out.node_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

private:
    NodePtr node_;
};

namespace ops {

namespace detail_ops {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
}

template <typename T>
T* grad_of(detail::Node<T>& self, std::size_t parent) {
    auto& p = *self.parents[parent];
    return p.requires_grad ? p.grad.data() : nullptr;
}

}  // namespace detail_ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail_ops::require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor<T>::make_result("add", a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (T* g = detail_ops::grad_of(self, p))
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail_ops::require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor<T>::make_result("sub", a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
        if (T* g = detail_ops::grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (T* g = detail_ops::grad_of(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail_ops::require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<T>::make_result("mul", a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (T* g = detail_ops::grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
        if (T* g = detail_ops::grad_of(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.data()[i];
    return Tensor<T>::make_result("scalar-mul", a.shape(), std::move(out), {&a}, [s](detail::Node<T>& self) {
        if (T* g = detail_ops::grad_of(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    });
}

// [M,K] x [K,N] -> [M,N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<T> out(M * N, T{0});
    detail::gemm_nn(M, N, K, a.data().data(), b.data().data(), out.data());
    return Tensor<T>::make_result("matmul", {M, N}, std::move(out), {&a, &b}, [M, N, K](detail::Node<T>& self) {
        const T* av = self.parents[0]->value.data();
        const T* bv = self.parents[1]->value.data();
        if (T* g = detail_ops::grad_of(self, 0)) detail::gemm_nt(M, K, N, self.grad.data(), bv, g);
        if (T* g = detail_ops::grad_of(self, 1)) detail::gemm_tn(K, N, M, av, self.grad.data(), g);
    });
}

// 3x3 convolution, zero padding 1, stride 1 or 2.
// x: [N, Cin, H, W], w: [Cout, Cin, 3, 3] -> [N, Cout, Ho, Wo], Ho = (H - 1) / stride + 1.
template <typename T>
Tensor<T> conv3x3(const Tensor<T>& x, const Tensor<T>& w, int stride = 1) {
    require(stride == 1 || stride == 2, "conv3x3: stride must be 1 or 2");
    require(x.rank() == 4, "conv3x3: input must be NCHW, got " + shape_str(x.shape()));
    require(w.rank() == 4 && w.dim(2) == 3 && w.dim(3) == 3 && w.dim(1) == x.dim(1),
            "conv3x3: weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3), Cout = w.dim(0);
    const std::size_t s = static_cast<std::size_t>(stride);
    const std::size_t Ho = (H - 1) / s + 1, Wo = (W - 1) / s + 1;
    const std::size_t P = Ho * Wo, KK = Cin * 9;

    // Valid output-column range [lo, hi) for each kernel column offset.
    std::size_t ox_lo[3], ox_hi[3], oy_lo[3], oy_hi[3];
    for (std::size_t k = 0; k < 3; ++k) {
        ox_lo[k] = k == 0 ? 1 : 0;
        ox_hi[k] = W > k ? std::min(Wo, (W - k) / s + 1) : 0;
        oy_lo[k] = k == 0 ? 1 : 0;
        oy_hi[k] = H > k ? std::min(Ho, (H - k) / s + 1) : 0;
    }

    // im2col per sample: col[n][(c*9 + ky*3 + kx), oy*Wo + ox]
    auto cols = std::make_shared<std::vector<T>>(N * KK * P, T{0});
    const T* xv = x.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        T* col = cols->data() + n * KK * P;
        for (std::size_t c = 0; c < Cin; ++c) {
            const T* img = xv + (n * Cin + c) * H * W;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    T* row = col + (c * 9 + ky * 3 + kx) * P;
                    for (std::size_t oy = oy_lo[ky]; oy < oy_hi[ky]; ++oy) {
                        const T* src = img + (oy * s + ky - 1) * W;
                        T* dst = row + oy * Wo;
                        for (std::size_t ox = ox_lo[kx]; ox < ox_hi[kx]; ++ox) dst[ox] = src[ox * s + kx - 1];
                    }
                }
            }
        }
    }
    std::vector<T> out(N * Cout * P, T{0});
    for (std::size_t n = 0; n < N; ++n)
        detail::gemm_nn(Cout, P, KK, w.data().data(), cols->data() + n * KK * P, out.data() + n * Cout * P);

    return Tensor<T>::make_result(
        "conv3x3", {N, Cout, Ho, Wo}, std::move(out), {&x, &w},
        [=, ox_lo = std::to_array(ox_lo), ox_hi = std::to_array(ox_hi), oy_lo = std::to_array(oy_lo),
         oy_hi = std::to_array(oy_hi)](detail::Node<T>& self) {
            const T* wv = self.parents[1]->value.data();
            if (T* gw = detail_ops::grad_of(self, 1)) {
                for (std::size_t n = 0; n < N; ++n)
                    detail::gemm_nt(Cout, KK, P, self.grad.data() + n * Cout * P, cols->data() + n * KK * P, gw);
            }
            if (T* gx = detail_ops::grad_of(self, 0)) {
                std::vector<T> dcol(KK * P);
                for (std::size_t n = 0; n < N; ++n) {
                    std::fill(dcol.begin(), dcol.end(), T{0});
                    detail::gemm_tn(KK, P, Cout, wv, self.grad.data() + n * Cout * P, dcol.data());
                    for (std::size_t c = 0; c < Cin; ++c) {
                        T* img = gx + (n * Cin + c) * H * W;
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                const T* row = dcol.data() + (c * 9 + ky * 3 + kx) * P;
                                for (std::size_t oy = oy_lo[ky]; oy < oy_hi[ky]; ++oy) {
                                    T* dst = img + (oy * s + ky - 1) * W;
                                    const T* src = row + oy * Wo;
                                    for (std::size_t ox = ox_lo[kx]; ox < ox_hi[kx]; ++ox)
                                        dst[ox * s + kx - 1] += src[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
}

// Nearest-neighbour x2 upsampling of an NCHW tensor.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    require(x.rank() == 4, "upsample2x: input must be NCHW");
    const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t H2 = 2 * H, W2 = 2 * W;
    std::vector<T> out(NC * H2 * W2);
    const T* xv = x.data().data();
    for (std::size_t p = 0; p < NC; ++p)
        for (std::size_t y = 0; y < H2; ++y)
            for (std::size_t xx = 0; xx < W2; ++xx) out[(p * H2 + y) * W2 + xx] = xv[(p * H + y / 2) * W + xx / 2];
    return Tensor<T>::make_result(
        "nearest-upsample", {x.dim(0), x.dim(1), H2, W2}, std::move(out), {&x}, [=](detail::Node<T>& self) {
            if (T* g = detail_ops::grad_of(self, 0)) {
                for (std::size_t p = 0; p < NC; ++p)
                    for (std::size_t y = 0; y < H2; ++y)
                        for (std::size_t xx = 0; xx < W2; ++xx)
                            g[(p * H + y / 2) * W + xx / 2] += self.grad[(p * H2 + y) * W2 + xx];
            }
        });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    auto sig = std::make_shared<std::vector<T>>(x.numel());
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.data()[i];
        (*sig)[i] = T{1} / (T{1} + std::exp(-v));
        out[i] = v * (*sig)[i];
    }
    return Tensor<T>::make_result("silu", x.shape(), std::move(out), {&x}, [sig](detail::Node<T>& self) {
        if (T* g = detail_ops::grad_of(self, 0)) {
            const auto& xv = self.parents[0]->value;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const T sg = (*sig)[i];
                g[i] += self.grad[i] * sg * (T{1} + xv[i] * (T{1} - sg));
            }
        }
    });
}

// Group normalization over (channels-in-group x spatial) per sample, with a
// per-channel affine. x: [N, C, ...], gamma/beta: [C].
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t groups = 8,
                     T eps = T(1e-5)) {
    require(x.rank() >= 2, "group-normalization: input rank must be >= 2");
    const std::size_t N = x.dim(0), C = x.dim(1);
    require(groups > 0 && C % groups == 0,
            "group-normalization: channels " + std::to_string(C) + " not divisible by " + std::to_string(groups));
    require(gamma.shape() == Shape{C} && beta.shape() == Shape{C}, "group-normalization: affine must be [C]");
    const std::size_t S = x.numel() / (N * C);
    const std::size_t cpg = C / groups, M = cpg * S;

    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_std = std::make_shared<std::vector<T>>(N * groups);
    std::vector<T> out(x.numel());
    const T* xv = x.data().data();
    const T* gv = gamma.data().data();
    const T* bv = beta.data().data();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = (n * C + g * cpg) * S;
            T mean{0};
            for (std::size_t i = 0; i < M; ++i) mean += xv[base + i];
            mean /= static_cast<T>(M);
            T var{0};
            for (std::size_t i = 0; i < M; ++i) {
                const T d = xv[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(M);
            const T is = T{1} / std::sqrt(var + eps);
            (*inv_std)[n * groups + g] = is;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
                const std::size_t c = g * cpg + cc, off = base + cc * S;
                for (std::size_t i = 0; i < S; ++i) {
                    const T h = (xv[off + i] - mean) * is;
                    (*xhat)[off + i] = h;
                    out[off + i] = gv[c] * h + bv[c];
                }
            }
        }
    }
    return Tensor<T>::make_result(
        "group-normalization", x.shape(), std::move(out), {&x, &gamma, &beta}, [=](detail::Node<T>& self) {
            const T* gam = self.parents[1]->value.data();
            T* gx = detail_ops::grad_of(self, 0);
            T* ggamma = detail_ops::grad_of(self, 1);
            T* gbeta = detail_ops::grad_of(self, 2);
            const T* dy = self.grad.data();
            const T* xh = xhat->data();
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t g = 0; g < groups; ++g) {
                    const std::size_t base = (n * C + g * cpg) * S;
                    T sum_dxh{0}, sum_dxh_xh{0};
                    for (std::size_t cc = 0; cc < cpg; ++cc) {
                        const std::size_t c = g * cpg + cc, off = base + cc * S;
                        T sum_dy{0}, sum_dy_xh{0};
                        for (std::size_t i = 0; i < S; ++i) {
                            sum_dy += dy[off + i];
                            sum_dy_xh += dy[off + i] * xh[off + i];
                        }
                        if (ggamma) ggamma[c] += sum_dy_xh;
                        if (gbeta) gbeta[c] += sum_dy;
                        sum_dxh += sum_dy * gam[c];
                        sum_dxh_xh += sum_dy_xh * gam[c];
                    }
                    if (gx) {
                        const T mean_dxh = sum_dxh / static_cast<T>(M);
                        const T mean_dxh_xh = sum_dxh_xh / static_cast<T>(M);
                        const T is = (*inv_std)[n * groups + g];
                        for (std::size_t cc = 0; cc < cpg; ++cc) {
                            const std::size_t c = g * cpg + cc, off = base + cc * S;
                            for (std::size_t i = 0; i < S; ++i)
                                gx[off + i] += is * (dy[off + i] * gam[c] - mean_dxh - xh[off + i] * mean_dxh_xh);
                        }
                    }
                }
            }
        });
}

// Concatenate along dim 1. Shapes must agree elsewhere.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() >= 2 && a.rank() == b.rank() && a.dim(0) == b.dim(0),
            "channel-concat: incompatible shapes " + shape_str(a.shape()) + ", " + shape_str(b.shape()));
    for (std::size_t d = 2; d < a.rank(); ++d)
        require(a.dim(d) == b.dim(d), "channel-concat: spatial mismatch " + shape_str(a.shape()) + ", " +
                                          shape_str(b.shape()));
    const std::size_t N = a.dim(0);
    const std::size_t sa = a.numel() / N, sb = b.numel() / N;
    std::vector<T> out(a.numel() + b.numel());
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(a.data().data() + n * sa, sa, out.data() + n * (sa + sb));
        std::copy_n(b.data().data() + n * sb, sb, out.data() + n * (sa + sb) + sa);
    }
    Shape shape = a.shape();
    shape[1] += b.dim(1);
    return Tensor<T>::make_result("channel-concat", std::move(shape), std::move(out), {&a, &b},
                                  [=](detail::Node<T>& self) {
                                      T* ga = detail_ops::grad_of(self, 0);
                                      T* gb = detail_ops::grad_of(self, 1);
                                      for (std::size_t n = 0; n < N; ++n) {
                                          const T* g = self.grad.data() + n * (sa + sb);
                                          if (ga)
                                              for (std::size_t i = 0; i < sa; ++i) ga[n * sa + i] += g[i];
                                          if (gb)
                                              for (std::size_t i = 0; i < sb; ++i) gb[n * sb + i] += g[sa + i];
                                      }
                                  });
}

// mean((a - b)^2) as a [1] tensor.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail_ops::require_same_shape(a, b, "mean-square-error");
    T acc{0};
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const T d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    const T n = static_cast<T>(a.numel());
    return Tensor<T>::make_result("mean-square-error", {1}, {acc / n}, {&a, &b}, [n](detail::Node<T>& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const T k = T{2} * self.grad[0] / n;
        if (T* g = detail_ops::grad_of(self, 0))
            for (std::size_t i = 0; i < av.size(); ++i) g[i] += k * (av[i] - bv[i]);
        if (T* g = detail_ops::grad_of(self, 1))
            for (std::size_t i = 0; i < av.size(); ++i) g[i] -= k * (av[i] - bv[i]);
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc{0};
    for (T v : a.data()) acc += v;
    return Tensor<T>::make_result("sum", {1}, {acc}, {&a}, [](detail::Node<T>& self) {
        if (T* g = detail_ops::grad_of(self, 0)) {
            const std::size_t n = self.parents[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
        }
    });
}

namespace detail_ops {

// b is [C] (shared across the batch) or [N, C] (per sample).
template <typename T>
std::size_t channel_index_mode(const Tensor<T>& x, const Tensor<T>& b, const char* op) {
    require(x.rank() >= 2, std::string(op) + ": input rank must be >= 2");
    const std::size_t N = x.dim(0), C = x.dim(1);
    if (b.shape() == Shape{C}) return 0;
    if (b.shape() == Shape{N, C}) return 1;
    throw ContractViolation(std::string(op) + ": channel operand " + shape_str(b.shape()) +
                            " does not fit input " + shape_str(x.shape()));
}

}  // namespace detail_ops

// x[n, c, ...] + b[c] or b[n, c]
template <typename T>
Tensor<T> add_channelwise(const Tensor<T>& x, const Tensor<T>& b) {
    const std::size_t per_sample = detail_ops::channel_index_mode(x, b, "broadcast-add-channelwise");
    const std::size_t N = x.dim(0), C = x.dim(1), S = x.numel() / (N * C);
    std::vector<T> out(x.numel());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const T bias = b.data()[per_sample ? n * C + c : c];
            const std::size_t base = (n * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) out[base + i] = x.data()[base + i] + bias;
        }
    return Tensor<T>::make_result("broadcast-add-channelwise", x.shape(), std::move(out), {&x, &b},
                                  [=](detail::Node<T>& self) {
                                      T* gx = detail_ops::grad_of(self, 0);
                                      T* gb = detail_ops::grad_of(self, 1);
                                      for (std::size_t n = 0; n < N; ++n)
                                          for (std::size_t c = 0; c < C; ++c) {
                                              const std::size_t base = (n * C + c) * S;
                                              T acc{0};
                                              for (std::size_t i = 0; i < S; ++i) {
                                                  if (gx) gx[base + i] += self.grad[base + i];
                                                  acc += self.grad[base + i];
                                              }
                                              if (gb) gb[per_sample ? n * C + c : c] += acc;
                                          }
                                  });
}

// x[n, c, ...] * s[c] or s[n, c]
template <typename T>
Tensor<T> mul_channelwise(const Tensor<T>& x, const Tensor<T>& s) {
    const std::size_t per_sample = detail_ops::channel_index_mode(x, s, "broadcast-mul-channelwise");
    const std::size_t N = x.dim(0), C = x.dim(1), S = x.numel() / (N * C);
    std::vector<T> out(x.numel());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const T k = s.data()[per_sample ? n * C + c : c];
            const std::size_t base = (n * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) out[base + i] = x.data()[base + i] * k;
        }
    return Tensor<T>::make_result("broadcast-mul-channelwise", x.shape(), std::move(out), {&x, &s},
                                  [=](detail::Node<T>& self) {
                                      const auto& xv = self.parents[0]->value;
                                      const auto& sv = self.parents[1]->value;
                                      T* gx = detail_ops::grad_of(self, 0);
                                      T* gs = detail_ops::grad_of(self, 1);
                                      for (std::size_t n = 0; n < N; ++n)
                                          for (std::size_t c = 0; c < C; ++c) {
                                              const std::size_t si = per_sample ? n * C + c : c;
                                              const std::size_t base = (n * C + c) * S;
                                              T acc{0};
                                              for (std::size_t i = 0; i < S; ++i) {
                                                  if (gx) gx[base + i] += self.grad[base + i] * sv[si];
                                                  acc += self.grad[base + i] * xv[base + i];
                                              }
                                              if (gs) gs[si] += acc;
                                          }
                                  });
}

}  // namespace ops
}  // namespace hapticgen
