// Reverse-mode autodiff on dynamically built graphs.
//
// Var<T> is a handle to a graph node. Ops record parents and a backward
// closure; backward() walks the graph in reverse topological order, then
// releases edges and closures so intermediates free as handles drop.
// Gradients of leaves accumulate across backward calls until zero_grad().
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sgrep/tensor.hpp"

namespace sgrep {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Tensor<T>&)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (!grad_ready) {
            grad = Tensor<T>(value.shape);
            grad_ready = true;
        }
        return grad;
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> v, bool requires_grad = false) : n_(std::make_shared<Node<T>>()) {
        n_->value = std::move(v);
        n_->requires_grad = requires_grad;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const NodePtr<T>& node() const { return n_; }

    const Tensor<T>& value() const { return n_->value; }
    Tensor<T>& value() { return n_->value; }
    const Shape& shape() const { return n_->value.shape; }
    bool requires_grad() const { return n_->requires_grad; }

    const Tensor<T>& grad() const { return n_->ensure_grad(); }
    void zero_grad() const {
        if (n_->grad_ready) std::fill(n_->grad.data.begin(), n_->grad.data.end(), T(0));
    }

private:
    NodePtr<T> n_;
};

// Generic op constructor; nn-level fused ops build on this too.
template <typename T>
Var<T> make_var(Tensor<T> value, const std::vector<Var<T>>& parents,
                std::function<void(const Tensor<T>&)> backward_fn) {
    Var<T> out(std::move(value), false);
    bool req = false;
    for (const auto& p : parents)
        if (p.requires_grad()) req = true;
    if (req) {
        out.node()->requires_grad = true;
        for (const auto& p : parents)
            if (p.requires_grad()) out.node()->parents.push_back(p.node());
        out.node()->backward_fn = std::move(backward_fn);
    }
    return out;
}

template <typename T>
void backward(const Var<T>& loss) {
    const NodePtr<T>& root = loss.node();
    if (root->value.size() != 1)
        throw NonScalarLoss("backward requires a scalar, got shape " + shape_str(root->value.shape));

    std::vector<NodePtr<T>> order;
    std::unordered_set<const Node<T>*> seen;
    std::vector<std::pair<NodePtr<T>, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->parents.size()) {
            NodePtr<T> p = top.first->parents[top.second++];
            if (seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }

    root->ensure_grad().data[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>& n = **it;
        if (n.backward_fn && n.grad_ready) n.backward_fn(n.grad);
        n.backward_fn = nullptr;
        n.parents.clear();
    }
}

namespace detail {

template <typename T, class F>
Tensor<T> ew_map2(const Tensor<T>& a, const Tensor<T>& b, F f) {
    if (a.shape == b.shape) {
        Tensor<T> out(a.shape);
        for (int64_t i = 0; i < out.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
        return out;
    }
    Shape os = broadcast_shapes(a.shape, b.shape);
    Tensor<T> out(os);
    auto sa = broadcast_strides(a.shape, os);
    auto sb = broadcast_strides(b.shape, os);
    std::vector<int64_t> idx(os.size(), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t i = 0; i < out.size(); ++i) {
        out.data[i] = f(a.data[oa], b.data[ob]);
        for (int64_t d = static_cast<int64_t>(os.size()) - 1; d >= 0; --d) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            oa -= sa[d] * os[d];
            ob -= sb[d] * os[d];
        }
    }
    return out;
}

// Adds g (broadcast shape) into `into`, summing over broadcast axes.
template <typename T>
void add_reduced(const Tensor<T>& g, Tensor<T>& into) {
    if (g.shape == into.shape) {
        for (int64_t i = 0; i < g.size(); ++i) into.data[i] += g.data[i];
        return;
    }
    auto st = broadcast_strides(into.shape, g.shape);
    std::vector<int64_t> idx(g.shape.size(), 0);
    int64_t off = 0;
    for (int64_t i = 0; i < g.size(); ++i) {
        into.data[off] += g.data[i];
        for (int64_t d = static_cast<int64_t>(g.shape.size()) - 1; d >= 0; --d) {
            ++idx[d];
            off += st[d];
            if (idx[d] < g.shape[d]) break;
            idx[d] = 0;
            off -= st[d] * g.shape[d];
        }
    }
}

template <typename T>
Tensor<T> transpose_tensor(const Tensor<T>& a, const std::vector<int64_t>& perm) {
    if (perm.size() != a.shape.size())
        throw AxisOutOfRange("permutation rank " + std::to_string(perm.size()) +
                             " does not match tensor rank " + std::to_string(a.shape.size()));
    std::vector<bool> used(perm.size(), false);
    Shape os(perm.size());
    auto in_st = row_major_strides(a.shape);
    std::vector<int64_t> st(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] < 0 || perm[i] >= static_cast<int64_t>(perm.size()) || used[perm[i]])
            throw AxisOutOfRange("invalid permutation axis " + std::to_string(perm[i]));
        used[perm[i]] = true;
        os[i] = a.shape[perm[i]];
        st[i] = in_st[perm[i]];
    }
    Tensor<T> out(os);
    if (out.size() == 0) return out;
    std::vector<int64_t> idx(os.size(), 0);
    int64_t off = 0;
    for (int64_t i = 0; i < out.size(); ++i) {
        out.data[i] = a.data[off];
        for (int64_t d = static_cast<int64_t>(os.size()) - 1; d >= 0; --d) {
            ++idx[d];
            off += st[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            off -= st[d] * os[d];
        }
    }
    return out;
}

template <typename T>
using EMat = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using EMatC = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = detail::ew_map2(a.value(), b.value(), [](T x, T y) { return x + y; });
    return make_var<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a.requires_grad()) detail::add_reduced(g, a.node()->ensure_grad());
        if (b.requires_grad()) detail::add_reduced(g, b.node()->ensure_grad());
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = detail::ew_map2(a.value(), b.value(), [](T x, T y) { return x - y; });
    return make_var<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a.requires_grad()) detail::add_reduced(g, a.node()->ensure_grad());
        if (b.requires_grad()) {
            Tensor<T> ng(g.shape);
            for (int64_t i = 0; i < g.size(); ++i) ng.data[i] = -g.data[i];
            detail::add_reduced(ng, b.node()->ensure_grad());
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = detail::ew_map2(a.value(), b.value(), [](T x, T y) { return x * y; });
    return make_var<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
        if (a.requires_grad()) {
            Tensor<T> t = detail::ew_map2(g, b.value(), [](T x, T y) { return x * y; });
            detail::add_reduced(t, a.node()->ensure_grad());
        }
        if (b.requires_grad()) {
            Tensor<T> t = detail::ew_map2(g, a.value(), [](T x, T y) { return x * y; });
            detail::add_reduced(t, b.node()->ensure_grad());
        }
    });
}

template <typename T>
Var<T> mulc(const Var<T>& a, T c) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] * c;
    return make_var<T>(std::move(out), {a}, [a, c](const Tensor<T>& g) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * c;
    });
}

template <typename T>
Var<T> addc(const Var<T>& a, T c) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] + c;
    return make_var<T>(std::move(out), {a}, [a](const Tensor<T>& g) {
        detail::add_reduced(g, a.node()->ensure_grad());
    });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    return mulc(a, T(-1));
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out(a.shape());
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] > T(0) ? a.value().data[i] : T(0);
    return make_var<T>(std::move(out), {a}, [a](const Tensor<T>& g) {
        Tensor<T>& ga = a.node()->ensure_grad();
        const Tensor<T>& v = a.value();
        for (int64_t i = 0; i < g.size(); ++i)
            if (v.data[i] > T(0)) ga.data[i] += g.data[i];
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    if (numel(shape) != a.value().size())
        throw ShapeMismatch("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                            " changes element count");
    Tensor<T> out(std::move(shape), a.value().data);
    return make_var<T>(std::move(out), {a}, [a](const Tensor<T>& g) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    });
}

template <typename T>
Var<T> transpose(const Var<T>& a, std::vector<int64_t> perm) {
    Tensor<T> out = detail::transpose_tensor(a.value(), perm);
    std::vector<int64_t> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int64_t>(i);
    return make_var<T>(std::move(out), {a}, [a, inv](const Tensor<T>& g) {
        Tensor<T> gt = detail::transpose_tensor(g, inv);
        detail::add_reduced(gt, a.node()->ensure_grad());
    });
}

// Batched matmul: (..., M, K) x (..., K, N) with broadcasting over batch dims.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.rank() < 2 || bv.rank() < 2)
        throw ShapeMismatch("matmul needs rank >= 2, got " + shape_str(av.shape) + " x " +
                            shape_str(bv.shape));
    int64_t M = av.shape[av.rank() - 2], K = av.shape[av.rank() - 1];
    int64_t K2 = bv.shape[bv.rank() - 2], N = bv.shape[bv.rank() - 1];
    if (K != K2)
        throw ShapeMismatch("matmul inner dims disagree: " + shape_str(av.shape) + " x " +
                            shape_str(bv.shape));

    Shape abatch(av.shape.begin(), av.shape.end() - 2);
    Shape bbatch(bv.shape.begin(), bv.shape.end() - 2);
    Shape obatch = broadcast_shapes(abatch, bbatch);
    Shape oshape = obatch;
    oshape.push_back(M);
    oshape.push_back(N);

    int64_t nb = numel(obatch);
    auto sa = broadcast_strides(abatch, obatch);  // in units of batch slices
    auto sb = broadcast_strides(bbatch, obatch);
    // flatten batch index -> slice index for an operand, honoring broadcast
    auto slice_of = [obatch](int64_t flat, const std::vector<int64_t>& st) {
        int64_t s = 0;
        for (int64_t d = static_cast<int64_t>(obatch.size()) - 1; d >= 0; --d) {
            s += (flat % obatch[d]) * st[d];
            flat /= obatch[d];
        }
        return s;
    };

    Tensor<T> out(oshape);
    for (int64_t i = 0; i < nb; ++i) {
        detail::EMatC<T> A(av.ptr() + slice_of(i, sa) * M * K, M, K);
        detail::EMatC<T> B(bv.ptr() + slice_of(i, sb) * K * N, K, N);
        detail::EMat<T> O(out.ptr() + i * M * N, M, N);
        O.noalias() = A * B;
    }

    return make_var<T>(std::move(out), {a, b},
                       [a, b, M, K, N, nb, sa, sb, slice_of](const Tensor<T>& g) {
                           const Tensor<T>& av2 = a.value();
                           const Tensor<T>& bv2 = b.value();
                           if (a.requires_grad()) {
                               Tensor<T>& ga = a.node()->ensure_grad();
                               for (int64_t i = 0; i < nb; ++i) {
                                   detail::EMatC<T> G(g.ptr() + i * M * N, M, N);
                                   detail::EMatC<T> B(bv2.ptr() + slice_of(i, sb) * K * N, K, N);
                                   detail::EMat<T> GA(ga.ptr() + slice_of(i, sa) * M * K, M, K);
                                   GA.noalias() += G * B.transpose();
                               }
                           }
                           if (b.requires_grad()) {
                               Tensor<T>& gb = b.node()->ensure_grad();
                               for (int64_t i = 0; i < nb; ++i) {
                                   detail::EMatC<T> G(g.ptr() + i * M * N, M, N);
                                   detail::EMatC<T> A(av2.ptr() + slice_of(i, sa) * M * K, M, K);
                                   detail::EMat<T> GB(gb.ptr() + slice_of(i, sb) * K * N, K, N);
                                   GB.noalias() += A.transpose() * G;
                               }
                           }
                       });
}

// Softmax over the last axis, numerically stabilized by row max.
template <typename T>
Var<T> softmax_lastdim(const Var<T>& a) {
    const Tensor<T>& av = a.value();
    if (av.rank() < 1) throw AxisOutOfRange("softmax needs rank >= 1");
    int64_t C = av.shape.back();
    int64_t rows = av.size() / C;
    Tensor<T> out(av.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = av.ptr() + r * C;
        T* y = out.ptr() + r * C;
        T mx = x[0];
        for (int64_t j = 1; j < C; ++j) mx = std::max(mx, x[j]);
        T sum = T(0);
        for (int64_t j = 0; j < C; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (int64_t j = 0; j < C; ++j) y[j] /= sum;
    }
    Tensor<T> saved = out;
    return make_var<T>(std::move(out), {a}, [a, saved, C, rows](const Tensor<T>& g) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* y = saved.ptr() + r * C;
            const T* gy = g.ptr() + r * C;
            T dot = T(0);
            for (int64_t j = 0; j < C; ++j) dot += gy[j] * y[j];
            T* gx = ga.ptr() + r * C;
            for (int64_t j = 0; j < C; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

// Softmax over an arbitrary axis; non-terminal axes go through transpose.
template <typename T>
Var<T> softmax(const Var<T>& a, int64_t axis) {
    int64_t rank = a.value().rank();
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw AxisOutOfRange("softmax axis " + std::to_string(axis) + " for rank " +
                             std::to_string(rank));
    if (axis == rank - 1) return softmax_lastdim(a);
    std::vector<int64_t> perm(rank);
    for (int64_t i = 0; i < rank; ++i) perm[i] = i;
    std::swap(perm[axis], perm[rank - 1]);
    return transpose(softmax_lastdim(transpose(a, perm)), perm);
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T s = T(0);
    for (T v : a.value().data) s += v;
    return make_var<T>(Tensor<T>::scalar(s), {a}, [a](const Tensor<T>& g) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (auto& v : ga.data) v += g.data[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    if (a.value().size() == 0) throw EmptyInput("mean of empty tensor");
    T inv = T(1) / static_cast<T>(a.value().size());
    Var<T> s = sum_all(a);
    return mulc(s, inv);
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

}  // namespace sgrep
