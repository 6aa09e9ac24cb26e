#pragma once

#include <string>

#include "in2/ops.hpp"
#include "in2/rng.hpp"

namespace in2::nn {

using ag::Var;

inline std::int64_t conv_out_dim(std::int64_t h, std::int64_t k, std::int64_t stride,
                                 std::int64_t pad) {
    return (h + 2 * pad - k) / stride + 1;
}

// ---- padding / cropping plans ----

inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
}

// Reflect padding (no edge repeat), arbitrary per-side amounts < dim.
template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::int64_t top, std::int64_t bottom, std::int64_t left,
                   std::int64_t right) {
    if (top == 0 && bottom == 0 && left == 0 && right == 0) return x;
    std::int64_t H = x.shape()[1], W = x.shape()[2];
    check(top < H && bottom < H && left < W && right < W, "pad_reflect: pad exceeds dims");
    std::int64_t Ho = H + top + bottom, Wo = W + left + right;
    std::vector<std::int64_t> idx(Ho * Wo);
    for (std::int64_t y = 0; y < Ho; ++y) {
        std::int64_t sy = reflect_index(y - top, H);
        for (std::int64_t xx = 0; xx < Wo; ++xx)
            idx[y * Wo + xx] = sy * W + reflect_index(xx - left, W);
    }
    return ag::gather_cols(x, ag::make_plan(std::move(idx)), Shape{Ho, Wo});
}

// Zero padding via scatter (new cells stay zero).
template <typename T>
Var<T> pad_zero(const Var<T>& x, std::int64_t pad) {
    if (pad == 0) return x;
    std::int64_t H = x.shape()[1], W = x.shape()[2];
    std::int64_t Ho = H + 2 * pad, Wo = W + 2 * pad;
    std::vector<std::int64_t> idx(H * W);
    for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t xx = 0; xx < W; ++xx) idx[y * W + xx] = (y + pad) * Wo + (xx + pad);
    return ag::scatter_cols(x, ag::make_plan(std::move(idx)), Ho * Wo, Shape{Ho, Wo});
}

template <typename T>
Var<T> crop2d(const Var<T>& x, std::int64_t top, std::int64_t left, std::int64_t h,
              std::int64_t w) {
    std::int64_t W = x.shape()[2];
    check(top + h <= x.shape()[1] && left + w <= W, "crop2d: window out of range");
    std::vector<std::int64_t> idx(h * w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) idx[y * w + xx] = (top + y) * W + (left + xx);
    return ag::gather_cols(x, ag::make_plan(std::move(idx)), Shape{h, w});
}

enum class Pad { none, reflect, zero };

// conv2d on [Cin,H,W]. Weight layout [Cout, k*k*Cin] with the patch offset
// major: row col index = p * Cin + ci, p = ky * k + kx. Bias optional.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::int64_t k,
              std::int64_t stride, Pad pad_mode) {
    std::int64_t Cin = x.shape()[0];
    check(w.shape()[1] == k * k * Cin, "conv2d: weight/input channel mismatch");
    std::int64_t pad = pad_mode == Pad::none ? 0 : (k - 1) / 2;
    Var<T> xp = x;
    if (pad > 0) {
        xp = pad_mode == Pad::reflect ? pad_reflect(x, pad, pad, pad, pad) : pad_zero(x, pad);
    }
    std::int64_t Hp = xp.shape()[1], Wp = xp.shape()[2];
    std::int64_t Ho = (Hp - k) / stride + 1, Wo = (Wp - k) / stride + 1;
    check(Ho >= 1 && Wo >= 1, "conv2d: output would be empty");

    Var<T> col;
    if (k == 1 && stride == 1) {
        col = ag::reshape(xp, Shape{Cin, Hp * Wp});
    } else {
        std::vector<Var<T>> pieces;
        pieces.reserve(k * k);
        for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
                std::vector<std::int64_t> idx(Ho * Wo);
                for (std::int64_t y = 0; y < Ho; ++y)
                    for (std::int64_t xx = 0; xx < Wo; ++xx)
                        idx[y * Wo + xx] = (y * stride + ky) * Wp + (xx * stride + kx);
                pieces.push_back(
                    ag::gather_cols(xp, ag::make_plan(std::move(idx)), Shape{Ho * Wo}));
            }
        }
        col = ag::concat0(pieces);  // [k*k*Cin, Ho*Wo], p-major
    }
    Var<T> y = ag::matmul(w, col);
    y = ag::reshape(y, Shape{w.shape()[0], Ho, Wo});
    if (b.defined()) y = ag::add(y, ag::reshape(b, Shape{b.shape()[0], 1, 1}));
    return y;
}

// Pointwise linear over channels: x [Cin, ...] -> [Cout, ...].
template <typename T>
Var<T> conv1x1(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    Shape tail(x.shape().begin() + 1, x.shape().end());
    std::int64_t m = numel_of(tail);
    Var<T> y = ag::matmul(w, ag::reshape(x, Shape{x.shape()[0], m}));
    Shape out{w.shape()[0]};
    out.insert(out.end(), tail.begin(), tail.end());
    y = ag::reshape(y, out);
    if (b.defined()) {
        Shape bs{b.shape()[0]};
        for (std::size_t i = 0; i < tail.size(); ++i) bs.push_back(1);
        y = ag::add(y, ag::reshape(b, bs));
    }
    return y;
}

// Layer norm over the channel axis at every spatial position.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    std::int64_t C = x.shape()[0];
    Var<T> mu = ag::mul_scalar(ag::sum_axis(x, 0), T(1) / static_cast<T>(C));
    Var<T> xc = ag::sub(x, mu);
    Var<T> var = ag::mul_scalar(ag::sum_axis(ag::mul(xc, xc), 0), T(1) / static_cast<T>(C));
    Var<T> inv = ag::div(ag::constant(Tensor<T>::scalar(T(1))),
                         ag::sqrt_(ag::add_scalar(var, eps)));
    Var<T> y = ag::mul(xc, inv);
    Shape bs{C};
    for (std::size_t i = 1; i < x.shape().size(); ++i) bs.push_back(1);
    return ag::add(ag::mul(y, ag::reshape(gamma, bs)), ag::reshape(beta, bs));
}

// Global average pool over all spatial axes -> [C,1,..].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    Shape target = x.shape();
    std::int64_t n = 1;
    for (std::size_t i = 1; i < target.size(); ++i) {
        n *= target[i];
        target[i] = 1;
    }
    return ag::mul_scalar(ag::sum_to(x, target), T(1) / static_cast<T>(n));
}

}  // namespace in2::nn
