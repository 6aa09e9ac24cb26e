#pragma once

#include <cmath>
#include <complex>
#include <memory>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "in2/autograd.hpp"

namespace in2::ag {

namespace detail {

template <typename T>
bool any_requires(const std::vector<Var<T>>& ps) {
    for (const auto& p : ps)
        if (p.requires_grad()) return true;
    return false;
}

}  // namespace detail

// Builds a graph node; parents/backward are dropped when no parent needs
// gradients, so pure inference carries no graph.
template <typename T, typename BW>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, BW bw) {
    bool req = detail::any_requires(parents);
    Var<T> v(std::move(value), req);
    if (req) {
        v.node()->parents = std::move(parents);
        v.node()->backward = std::move(bw);
    }
    return v;
}

template <typename T>
Var<T> zeros_like(const Var<T>& v) {
    return constant(Tensor<T>::zeros(v.shape()));
}

template <typename T>
Var<T> sum_to(const Var<T>& a, const Shape& target);
template <typename T>
Var<T> broadcast_to(const Var<T>& a, const Shape& target);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

// ---- arithmetic ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(broadcast_binary(a.val(), b.val(), [](T x, T y) { return x + y; }),
                      {a, b}, [sa, sb](const Var<T>& g) {
                          return std::vector<Var<T>>{sum_to(g, sa), sum_to(g, sb)};
                      });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x = -x;
    return make_op<T>(std::move(v), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(broadcast_binary(a.val(), b.val(), [](T x, T y) { return x - y; }),
                      {a, b}, [sa, sb](const Var<T>& g) {
                          return std::vector<Var<T>>{sum_to(g, sa), neg(sum_to(g, sb))};
                      });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(broadcast_binary(a.val(), b.val(), [](T x, T y) { return x * y; }),
                      {a, b}, [a, b, sa, sb](const Var<T>& g) {
                          return std::vector<Var<T>>{sum_to(mul(g, b), sa),
                                                     sum_to(mul(g, a), sb)};
                      });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(broadcast_binary(a.val(), b.val(), [](T x, T y) { return x / y; }),
                      {a, b}, [a, b, sa, sb](const Var<T>& g) {
                          Var<T> ga = sum_to(div(g, b), sa);
                          Var<T> gb = sum_to(neg(div(mul(g, a), mul(b, b))), sb);
                          return std::vector<Var<T>>{ga, gb};
                      });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x += s;
    return make_op<T>(std::move(v), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x *= s;
    return make_op<T>(std::move(v), {a}, [s](const Var<T>& g) {
        return std::vector<Var<T>>{mul_scalar(g, s)};
    });
}

// ---- shape ----

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
    Shape orig = a.shape();
    return make_op<T>(a.val().reshaped(std::move(s)), {a}, [orig](const Var<T>& g) {
        return std::vector<Var<T>>{reshape(g, orig)};
    });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& a, const Shape& target) {
    if (a.shape() == target) return a;
    Shape orig = a.shape();
    Tensor<T> v = broadcast_binary(a.val(), Tensor<T>::zeros(target), [](T x, T) { return x; });
    check(v.shape() == target, "broadcast_to: incompatible target " + shape_str(target));
    return make_op<T>(std::move(v), {a}, [orig](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(g, orig)};
    });
}

template <typename T>
Var<T> sum_to(const Var<T>& a, const Shape& target) {
    if (a.shape() == target) return a;
    Shape orig = a.shape();
    return make_op<T>(sum_to_shape(a.val(), target), {a}, [orig](const Var<T>& g) {
        return std::vector<Var<T>>{broadcast_to(g, orig)};
    });
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T acc = 0;
    for (const T& x : a.val().vec()) acc += x;
    Shape orig = a.shape();
    return make_op<T>(Tensor<T>::scalar(acc), {a}, [orig](const Var<T>& g) {
        return std::vector<Var<T>>{broadcast_to(g, orig)};
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.val().numel()));
}

// Keeps the reduced axis with size 1.
template <typename T>
Var<T> sum_axis(const Var<T>& a, std::size_t axis) {
    Shape target = a.shape();
    target[axis] = 1;
    return sum_to(a, target);
}

// ---- pointwise nonlinear (backward recomputes from the parent so the
// closure never captures its own output) ----

template <typename T>
Var<T> exp_(const Var<T>& a) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x = std::exp(x);
    return make_op<T>(std::move(v), {a}, [a](const Var<T>& g) {
        return std::vector<Var<T>>{mul(g, exp_(a))};
    });
}

template <typename T>
Var<T> log_(const Var<T>& a) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x = std::log(x);
    return make_op<T>(std::move(v), {a}, [a](const Var<T>& g) {
        return std::vector<Var<T>>{div(g, a)};
    });
}

template <typename T>
Var<T> sqrt_(const Var<T>& a) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x = std::sqrt(x);
    return make_op<T>(std::move(v), {a}, [a](const Var<T>& g) {
        return std::vector<Var<T>>{div(mul_scalar(g, T(0.5)), sqrt_(a))};
    });
}

template <typename T>
Var<T> erf_(const Var<T>& a) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x = std::erf(x);
    return make_op<T>(std::move(v), {a}, [a](const Var<T>& g) {
        // d erf = 2/sqrt(pi) * exp(-x^2)
        Var<T> d = exp_(neg(mul(a, a)));
        return std::vector<Var<T>>{mul(g, mul_scalar(d, T(1.1283791670955126)))};
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> v = a.val();
    for (auto& x : v.vec()) x = T(1) / (T(1) + std::exp(-x));
    return make_op<T>(std::move(v), {a}, [a](const Var<T>& g) {
        Var<T> s = sigmoid(a);
        Var<T> one_minus = add_scalar(neg(s), T(1));
        return std::vector<Var<T>>{mul(g, mul(s, one_minus))};
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
    Tensor<T> v = a.val();
    Tensor<T> mask(v.shape());
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        mask[i] = v[i] > 0 ? T(1) : slope;
        v[i] = v[i] > 0 ? v[i] : v[i] * slope;
    }
    return make_op<T>(std::move(v), {a},
                      [m = constant(std::move(mask))](const Var<T>& g) {
                          return std::vector<Var<T>>{mul(g, m)};
                      });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    return leaky_relu(a, T(0));
}

template <typename T>
Var<T> abs_(const Var<T>& a) {
    Tensor<T> v = a.val();
    Tensor<T> sign(v.shape());
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        sign[i] = v[i] >= 0 ? T(1) : T(-1);
        v[i] = std::abs(v[i]);
    }
    return make_op<T>(std::move(v), {a},
                      [s = constant(std::move(sign))](const Var<T>& g) {
                          return std::vector<Var<T>>{mul(g, s)};
                      });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
    // 0.5 * x * (1 + erf(x / sqrt(2)))
    Var<T> e = erf_(mul_scalar(a, T(0.7071067811865476)));
    return mul_scalar(mul(a, add_scalar(e, T(1))), T(0.5));
}

// Numerically safe softplus: max(x,0) + log1p(exp(-|x|)).
template <typename T>
Var<T> softplus(const Var<T>& a) {
    Var<T> t = exp_(neg(abs_(a)));
    return add(relu(a), log_(add_scalar(t, T(1))));
}

// ---- linear algebra ----

template <typename T>
Var<T> transpose2(const Var<T>& a) {
    check(a.shape().size() == 2, "transpose2 expects rank 2");
    std::int64_t m = a.shape()[0], n = a.shape()[1];
    Tensor<T> v(Shape{n, m});
    const T* p = a.val().data();
    T* q = v.data();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) q[j * m + i] = p[i * n + j];
    return make_op<T>(std::move(v), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{transpose2(g)}; });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[0],
          "matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor<T> v(Shape{m, n});
    Eigen::Map<Mat>(v.data(), m, n) =
        Eigen::Map<const Mat>(a.val().data(), m, k) * Eigen::Map<const Mat>(b.val().data(), k, n);
    return make_op<T>(std::move(v), {a, b}, [a, b](const Var<T>& g) {
        return std::vector<Var<T>>{matmul(g, transpose2(b)), matmul(transpose2(a), g)};
    });
}

// ---- gather / scatter over the flattened spatial axis ----
//
// Tensors are treated as [C, S]: channel-major with a flattened spatial
// tail. One plan indexes spatial positions and is shared by all channels,
// which keeps plans small. gather and scatter are exact adjoints.

using GatherPlan = std::shared_ptr<const std::vector<std::int64_t>>;

inline GatherPlan make_plan(std::vector<std::int64_t> idx) {
    return std::make_shared<const std::vector<std::int64_t>>(std::move(idx));
}

template <typename T>
Var<T> scatter_cols(const Var<T>& a, const GatherPlan& plan, std::int64_t out_spatial,
                    Shape out_tail);

// out[c, m] = a[c, plan[m]]; result shape is [C] + out_tail.
template <typename T>
Var<T> gather_cols(const Var<T>& a, const GatherPlan& plan, Shape out_tail) {
    std::int64_t C = a.shape()[0];
    std::int64_t S = a.val().numel() / C;
    std::int64_t M = static_cast<std::int64_t>(plan->size());
    check(numel_of(out_tail) == M, "gather_cols: tail shape does not match plan");
    Shape out_shape{C};
    out_shape.insert(out_shape.end(), out_tail.begin(), out_tail.end());
    Tensor<T> v(out_shape);
    const T* p = a.val().data();
    T* q = v.data();
    const std::int64_t* ix = plan->data();
    for (std::int64_t c = 0; c < C; ++c) {
        const T* row = p + c * S;
        T* out_row = q + c * M;
        for (std::int64_t m = 0; m < M; ++m) out_row[m] = row[ix[m]];
    }
    Shape in_tail(a.shape().begin() + 1, a.shape().end());
    return make_op<T>(std::move(v), {a}, [plan, S, in_tail](const Var<T>& g) {
        return std::vector<Var<T>>{scatter_cols(g, plan, S, in_tail)};
    });
}

// out[c, plan[m]] += a[c, m]; result shape is [C] + out_tail with
// numel(out_tail) == out_spatial.
template <typename T>
Var<T> scatter_cols(const Var<T>& a, const GatherPlan& plan, std::int64_t out_spatial,
                    Shape out_tail) {
    std::int64_t C = a.shape()[0];
    std::int64_t M = a.val().numel() / C;
    check(static_cast<std::int64_t>(plan->size()) == M, "scatter_cols: plan size mismatch");
    check(numel_of(out_tail) == out_spatial, "scatter_cols: tail shape mismatch");
    Shape out_shape{C};
    out_shape.insert(out_shape.end(), out_tail.begin(), out_tail.end());
    Tensor<T> v(out_shape);
    const T* p = a.val().data();
    T* q = v.data();
    const std::int64_t* ix = plan->data();
    for (std::int64_t c = 0; c < C; ++c) {
        const T* row = p + c * M;
        T* out_row = q + c * out_spatial;
        for (std::int64_t m = 0; m < M; ++m) out_row[ix[m]] += row[m];
    }
    Shape in_tail(a.shape().begin() + 1, a.shape().end());
    return make_op<T>(std::move(v), {a}, [plan, in_tail](const Var<T>& g) {
        return std::vector<Var<T>>{gather_cols(g, plan, in_tail)};
    });
}

// ---- concat / slice along axis 0 ----

template <typename T>
Var<T> slice0(const Var<T>& a, std::int64_t begin, std::int64_t end);

template <typename T>
Var<T> concat0(const std::vector<Var<T>>& parts) {
    check(!parts.empty(), "concat0: empty");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::int64_t d0 = 0;
    for (const auto& p : parts) {
        Shape t(p.shape().begin() + 1, p.shape().end());
        check(t == tail, "concat0: tail shape mismatch");
        d0 += p.shape()[0];
    }
    Shape out_shape{d0};
    out_shape.insert(out_shape.end(), tail.begin(), tail.end());
    Tensor<T> v(out_shape);
    std::int64_t stride = numel_of(tail);
    std::int64_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.val().data(), p.val().data() + p.val().numel(), v.data() + off);
        off += p.val().numel();
    }
    std::vector<std::int64_t> dims;
    for (const auto& p : parts) dims.push_back(p.shape()[0]);
    return make_op<T>(std::move(v), parts, [dims, stride](const Var<T>& g) {
        std::vector<Var<T>> out;
        std::int64_t at = 0;
        for (std::int64_t d : dims) {
            out.push_back(slice0(g, at, at + d));
            at += d;
        }
        return out;
    });
}

template <typename T>
Var<T> slice0(const Var<T>& a, std::int64_t begin, std::int64_t end) {
    check(begin >= 0 && end <= a.shape()[0] && begin < end, "slice0: bad range");
    Shape out_shape = a.shape();
    out_shape[0] = end - begin;
    Shape tail(a.shape().begin() + 1, a.shape().end());
    std::int64_t stride = numel_of(tail);
    Tensor<T> v(out_shape);
    std::copy(a.val().data() + begin * stride, a.val().data() + end * stride, v.data());
    std::int64_t d0 = a.shape()[0];
    return make_op<T>(std::move(v), {a}, [begin, end, d0, tail](const Var<T>& g) {
        std::vector<Var<T>> pieces;
        if (begin > 0) {
            Shape s{begin};
            s.insert(s.end(), tail.begin(), tail.end());
            pieces.push_back(constant(Tensor<T>::zeros(s)));
        }
        pieces.push_back(g);
        if (end < d0) {
            Shape s{d0 - end};
            s.insert(s.end(), tail.begin(), tail.end());
            pieces.push_back(constant(Tensor<T>::zeros(s)));
        }
        return std::vector<Var<T>>{concat0(pieces)};
    });
}

// ---- 2-D DFT over the trailing two axes ----
//
// Input [2, C, H, W] holds (real, imaginary) planes. The transform is the
// unnormalized complex DFT per channel; `inverse` flips the twiddle sign.
// The adjoint of one direction is exactly the other, which makes the
// backward (and double backward) a single call.

namespace detail {

template <typename T>
void dft_axis(std::vector<std::complex<T>>& scratch_in, std::vector<std::complex<T>>& scratch_out,
              Eigen::FFT<T>& fft, bool inverse) {
    if (inverse)
        for (auto& z : scratch_in) z = std::conj(z);
    fft.fwd(scratch_out, scratch_in);
    if (inverse)
        for (auto& z : scratch_out) z = std::conj(z);
}

template <typename T>
Tensor<T> dft2_value(const Tensor<T>& x, bool inverse) {
    check(x.rank() == 4 && x.shape()[0] == 2, "dft2 expects [2,C,H,W]");
    std::int64_t C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    Tensor<T> out(x.shape());
    Eigen::FFT<T> fft;
    std::vector<std::complex<T>> in_row(W), out_row(W), in_col(H), out_col(H);
    const T* re = x.data();
    const T* im = x.data() + C * H * W;
    T* ore = out.data();
    T* oim = out.data() + C * H * W;
    std::vector<std::complex<T>> plane(H * W);
    for (std::int64_t c = 0; c < C; ++c) {
        const T* rp = re + c * H * W;
        const T* ip = im + c * H * W;
        for (std::int64_t i = 0; i < H * W; ++i) plane[i] = {rp[i], ip[i]};
        for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t xidx = 0; xidx < W; ++xidx) in_row[xidx] = plane[y * W + xidx];
            dft_axis(in_row, out_row, fft, inverse);
            for (std::int64_t xidx = 0; xidx < W; ++xidx) plane[y * W + xidx] = out_row[xidx];
        }
        for (std::int64_t xidx = 0; xidx < W; ++xidx) {
            for (std::int64_t y = 0; y < H; ++y) in_col[y] = plane[y * W + xidx];
            dft_axis(in_col, out_col, fft, inverse);
            for (std::int64_t y = 0; y < H; ++y) plane[y * W + xidx] = out_col[y];
        }
        T* orp = ore + c * H * W;
        T* oip = oim + c * H * W;
        for (std::int64_t i = 0; i < H * W; ++i) {
            orp[i] = plane[i].real();
            oip[i] = plane[i].imag();
        }
    }
    return out;
}

}  // namespace detail

template <typename T>
Var<T> dft2(const Var<T>& a, bool inverse) {
    return make_op<T>(detail::dft2_value(a.val(), inverse), {a}, [inverse](const Var<T>& g) {
        return std::vector<Var<T>>{dft2(g, !inverse)};
    });
}

// ---- value-level reductions used for detached stabilizers ----

template <typename T>
Tensor<T> reduce_max_axis0(const Tensor<T>& t) {
    Shape s = t.shape();
    std::int64_t d0 = s[0];
    s[0] = 1;
    Tensor<T> out(s);
    std::int64_t stride = out.numel();
    for (std::int64_t i = 0; i < stride; ++i) {
        T m = t[i];
        for (std::int64_t j = 1; j < d0; ++j) m = std::max(m, t[j * stride + i]);
        out[i] = m;
    }
    return out;
}

// Softmax over axis 0 with a detached max subtraction.
template <typename T>
Var<T> softmax0(const Var<T>& a) {
    Var<T> z = sub(a, constant(reduce_max_axis0(a.val())));
    Var<T> e = exp_(z);
    return div(e, sum_axis(e, 0));
}

// ---- operator sugar ----

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
    return add(a, b);
}
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
    return sub(a, b);
}
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
    return mul(a, b);
}
template <typename T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) {
    return div(a, b);
}

}  // namespace in2::ag
