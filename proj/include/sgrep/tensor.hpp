// Dense row-major tensor container used by the autodiff engine.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sgrep/common.hpp"

namespace sgrep {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Values in row-major order; rank-0 tensors (shape {}) hold one scalar.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), T(0)) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<int64_t>(data.size()) != numel(shape))
            throw ShapeMismatch("tensor data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
    }
    static Tensor scalar(T v) { return Tensor({}, {v}); }
    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    bool is_scalar() const { return data.size() == 1 && shape.empty(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
Tensor<T> randn(Shape shape, std::mt19937_64& rng, T stddev = T(1)) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.data) v = static_cast<T>(dist(rng) * static_cast<double>(stddev));
    return t;
}

template <typename T>
Tensor<T> uniform(Shape shape, std::mt19937_64& rng, T lo, T hi) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

// numpy-style broadcast of two shapes; throws ShapeMismatch when incompatible.
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()), 1);
    for (size_t i = 0; i < out.size(); ++i) {
        int64_t da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        int64_t db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeMismatch("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

inline std::vector<int64_t> row_major_strides(const Shape& shape) {
    std::vector<int64_t> st(shape.size(), 1);
    for (int64_t i = static_cast<int64_t>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * shape[i + 1];
    return st;
}

// Strides for reading `from` as if broadcast to `to` (0 on broadcast axes).
inline std::vector<int64_t> broadcast_strides(const Shape& from, const Shape& to) {
    std::vector<int64_t> st(to.size(), 0);
    auto base = row_major_strides(from);
    size_t off = to.size() - from.size();
    for (size_t i = 0; i < from.size(); ++i)
        st[off + i] = from[i] == 1 && to[off + i] != 1 ? 0 : base[i];
    return st;
}

}  // namespace sgrep
