#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "in2/common.hpp"

namespace in2 {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Dense row-major n-d array. Value semantics throughout; every op that
// changes layout materializes.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(numel_of(shape_), T(0)) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check(static_cast<std::int64_t>(data_.size()) == numel_of(shape_),
              "tensor data size does not match shape " + shape_str(shape_));
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, {v}); }

    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[i]; }
    const T& operator[](std::int64_t i) const { return data_[i]; }

    // (c,y,x) indexing for rank-3 tensors, the common feature-map case.
    T& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    Tensor reshaped(Shape s) const {
        check(numel_of(s) == numel(), "reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor t = *this;
        t.shape_ = std::move(s);
        return t;
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) t[i] = static_cast<U>(data_[i]);
        return t;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

// numpy-style broadcast of two shapes (trailing alignment, size-1 stretches).
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::int64_t da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        std::int64_t db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        check(da == db || da == 1 || db == 1,
              "shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

// Row-major strides padded on the left to `rank`, with 0 stride on broadcast dims.
inline std::vector<std::int64_t> broadcast_strides(const Shape& s, std::size_t rank,
                                                   const Shape& out) {
    std::vector<std::int64_t> st(rank, 0);
    std::int64_t acc = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t j = s.size() - 1 - i;
        st[rank - 1 - i] = (s[j] == 1 && out[rank - 1 - i] != 1) ? 0 : acc;
        acc *= s[j];
    }
    return st;
}

}  // namespace detail

// out[i] = f(a[map_a(i)], b[map_b(i)]) over the broadcast shape.
template <typename T, typename F>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
    if (a.shape() == b.shape()) {
        Tensor<T> out(a.shape());
        const T* pa = a.data();
        const T* pb = b.data();
        T* po = out.data();
        for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor<T> out(os);
    std::size_t rank = os.size();
    auto sa = detail::broadcast_strides(a.shape(), rank, os);
    auto sb = detail::broadcast_strides(b.shape(), rank, os);
    std::vector<std::int64_t> idx(rank, 0);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    std::int64_t n = out.numel();
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        po[i] = f(pa[ia], pb[ib]);
        for (std::int64_t d = static_cast<std::int64_t>(rank) - 1; d >= 0; --d) {
            idx[d]++;
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            ia -= sa[d] * os[d];
            ib -= sb[d] * os[d];
        }
    }
    return out;
}

// Sum `src` down to `target` shape (adjoint of broadcasting).
template <typename T>
Tensor<T> sum_to_shape(const Tensor<T>& src, const Shape& target) {
    if (src.shape() == target) return src;
    check(numel_of(target) <= src.numel(), "sum_to target larger than source");
    Tensor<T> out(target);
    std::size_t rank = src.rank();
    auto st = detail::broadcast_strides(target, rank, src.shape());
    std::vector<std::int64_t> idx(rank, 0);
    const T* ps = src.data();
    T* po = out.data();
    std::int64_t io = 0;
    for (std::int64_t i = 0; i < src.numel(); ++i) {
        po[io] += ps[i];
        for (std::int64_t d = static_cast<std::int64_t>(rank) - 1; d >= 0; --d) {
            idx[d]++;
            io += st[d];
            if (idx[d] < src.shape()[d]) break;
            idx[d] = 0;
            io -= st[d] * src.shape()[d];
        }
    }
    return out;
}

}  // namespace in2
