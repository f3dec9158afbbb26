// Network building blocks on top of the autodiff graph: fused layer norm,
// embedding gather, inverted dropout, padded cross entropy, positions.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sgrep/autograd.hpp"

namespace sgrep {

// y = gain * (x - mu) / sqrt(var + eps) + bias, normalized over the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
    const Tensor<T>& xv = x.value();
    if (xv.rank() < 1) throw AxisOutOfRange("layer_norm needs rank >= 1");
    int64_t D = xv.shape.back();
    if (gain.value().size() != D || bias.value().size() != D)
        throw ShapeMismatch("layer_norm gain/bias must have " + std::to_string(D) + " elements");
    int64_t rows = xv.size() / D;

    Tensor<T> out(xv.shape);
    Tensor<T> xhat(xv.shape);
    Tensor<T> inv_std({rows});
    const T* gp = gain.value().ptr();
    const T* bp = bias.value().ptr();
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = xv.ptr() + r * D;
        T mu = T(0);
        for (int64_t j = 0; j < D; ++j) mu += xr[j];
        mu /= static_cast<T>(D);
        T var = T(0);
        for (int64_t j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(D);
        T is = T(1) / std::sqrt(var + eps);
        inv_std.data[r] = is;
        T* hr = xhat.ptr() + r * D;
        T* yr = out.ptr() + r * D;
        for (int64_t j = 0; j < D; ++j) {
            hr[j] = (xr[j] - mu) * is;
            yr[j] = gp[j] * hr[j] + bp[j];
        }
    }

    return make_var<T>(
        std::move(out), {x, gain, bias},
        [x, gain, bias, xhat, inv_std, D, rows](const Tensor<T>& g) {
            const T* gp2 = gain.value().ptr();
            Tensor<T>* gx = x.requires_grad() ? &x.node()->ensure_grad() : nullptr;
            Tensor<T>* gg = gain.requires_grad() ? &gain.node()->ensure_grad() : nullptr;
            Tensor<T>* gb = bias.requires_grad() ? &bias.node()->ensure_grad() : nullptr;
            std::vector<T> h(D);
            for (int64_t r = 0; r < rows; ++r) {
                const T* gr = g.ptr() + r * D;
                const T* hr = xhat.ptr() + r * D;
                if (gg)
                    for (int64_t j = 0; j < D; ++j) gg->data[j] += gr[j] * hr[j];
                if (gb)
                    for (int64_t j = 0; j < D; ++j) gb->data[j] += gr[j];
                if (gx) {
                    T mean_h = T(0), mean_hx = T(0);
                    for (int64_t j = 0; j < D; ++j) {
                        h[j] = gr[j] * gp2[j];
                        mean_h += h[j];
                        mean_hx += h[j] * hr[j];
                    }
                    mean_h /= static_cast<T>(D);
                    mean_hx /= static_cast<T>(D);
                    T is = inv_std.data[r];
                    T* gxr = gx->ptr() + r * D;
                    for (int64_t j = 0; j < D; ++j)
                        gxr[j] += is * (h[j] - mean_h - hr[j] * mean_hx);
                }
            }
        });
}

// Row gather from an embedding table (V, D); ids laid out as id_shape.
template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<int32_t>& ids, Shape id_shape) {
    const Tensor<T>& tv = table.value();
    if (tv.rank() != 2) throw ShapeMismatch("embedding table must be rank 2");
    int64_t V = tv.shape[0], D = tv.shape[1];
    if (static_cast<int64_t>(ids.size()) != numel(id_shape))
        throw ShapeMismatch("id count does not match id_shape " + shape_str(id_shape));
    for (int32_t id : ids)
        if (id < 0 || id >= V)
            throw IdOutOfRange("token id " + std::to_string(id) + " outside vocabulary of " +
                               std::to_string(V));

    Shape oshape = id_shape;
    oshape.push_back(D);
    Tensor<T> out(oshape);
    for (size_t i = 0; i < ids.size(); ++i) {
        const T* src = tv.ptr() + static_cast<int64_t>(ids[i]) * D;
        std::copy(src, src + D, out.ptr() + static_cast<int64_t>(i) * D);
    }

    return make_var<T>(std::move(out), {table}, [table, ids, D](const Tensor<T>& g) {
        Tensor<T>& gt = table.node()->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            const T* gr = g.ptr() + static_cast<int64_t>(i) * D;
            T* dst = gt.ptr() + static_cast<int64_t>(ids[i]) * D;
            for (int64_t j = 0; j < D; ++j) dst[j] += gr[j];
        }
    });
}

// Inverted dropout; keep mask drawn from the given seed so a step replays
// identically. p = 0 is a true no-op returning the input var.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, uint64_t seed) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw InvalidConfig("dropout rate must be < 1, got " + std::to_string(p));
    std::mt19937_64 eng = make_engine(seed);
    T scale = static_cast<T>(1.0 / (1.0 - p));
    Tensor<T> mask(x.shape());
    for (auto& m : mask.data) {
        double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
        m = u < p ? T(0) : scale;
    }
    Tensor<T> out(x.shape());
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = x.value().data[i] * mask.data[i];
    return make_var<T>(std::move(out), {x}, [x, mask](const Tensor<T>& g) {
        Tensor<T>& gx = x.node()->ensure_grad();
        for (int64_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * mask.data[i];
    });
}

// Mean token-level cross entropy over rows whose target is not ignore_id.
// logits: (..., V) flattened to one row per target.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int32_t>& targets, int32_t ignore_id) {
    const Tensor<T>& lv = logits.value();
    if (lv.rank() < 2) throw ShapeMismatch("cross_entropy logits need rank >= 2");
    int64_t V = lv.shape.back();
    int64_t rows = lv.size() / V;
    if (rows != static_cast<int64_t>(targets.size()))
        throw LengthMismatch("cross_entropy got " + std::to_string(rows) + " rows for " +
                             std::to_string(targets.size()) + " targets");

    int64_t n_valid = 0;
    for (int32_t t : targets)
        if (t != ignore_id) {
            if (t < 0 || t >= V)
                throw IdOutOfRange("target id " + std::to_string(t) + " outside vocabulary of " +
                                   std::to_string(V));
            ++n_valid;
        }
    if (n_valid == 0) throw AllPadded("cross_entropy: every target is the ignore id");

    Tensor<T> probs(lv.shape);
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = lv.ptr() + r * V;
        T* pr = probs.ptr() + r * V;
        T mx = x[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < V; ++j) {
            pr[j] = std::exp(x[j] - mx);
            sum += static_cast<double>(pr[j]);
        }
        T inv = static_cast<T>(1.0 / sum);
        for (int64_t j = 0; j < V; ++j) pr[j] *= inv;
        if (targets[r] != ignore_id) {
            double lse = static_cast<double>(mx) + std::log(sum);
            total += lse - static_cast<double>(x[targets[r]]);
        }
    }
    T loss = static_cast<T>(total / static_cast<double>(n_valid));

    return make_var<T>(Tensor<T>::scalar(loss), {logits},
                       [logits, probs, targets, ignore_id, V, rows, n_valid](const Tensor<T>& g) {
                           T gs = g.data[0] / static_cast<T>(n_valid);
                           Tensor<T>& gl = logits.node()->ensure_grad();
                           for (int64_t r = 0; r < rows; ++r) {
                               if (targets[r] == ignore_id) continue;
                               const T* pr = probs.ptr() + r * V;
                               T* gr = gl.ptr() + r * V;
                               for (int64_t j = 0; j < V; ++j) gr[j] += gs * pr[j];
                               gr[targets[r]] -= gs;
                           }
                       });
}

// Fixed sin/cos position table, (max_len, d_model).
template <typename T>
Tensor<T> sinusoidal_positions(int64_t max_len, int64_t d_model) {
    Tensor<T> pe({max_len, d_model});
    for (int64_t pos = 0; pos < max_len; ++pos) {
        for (int64_t j = 0; j + 1 < d_model; j += 2) {
            double angle = pos * std::exp(-std::log(10000.0) * static_cast<double>(j) /
                                          static_cast<double>(d_model));
            pe.data[pos * d_model + j] = static_cast<T>(std::sin(angle));
            pe.data[pos * d_model + j + 1] = static_cast<T>(std::cos(angle));
        }
        if (d_model % 2 == 1) {
            double angle = pos * std::exp(-std::log(10000.0) *
                                          static_cast<double>(d_model - 1) /
                                          static_cast<double>(d_model));
            pe.data[pos * d_model + d_model - 1] = static_cast<T>(std::sin(angle));
        }
    }
    return pe;
}

// x: (..., in) times weight (in, out), no bias.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
    if (w.value().rank() != 2) throw ShapeMismatch("linear weight must be rank 2");
    if (x.value().rank() == 2) return matmul(x, w);
    Shape xs = x.shape();
    int64_t in = xs.back();
    if (in != w.shape()[0])
        throw ShapeMismatch("linear: input dim " + std::to_string(in) + " vs weight " +
                            shape_str(w.shape()));
    Var<T> flat = reshape(x, {x.value().size() / in, in});
    Var<T> y = matmul(flat, w);
    Shape os(xs.begin(), xs.end() - 1);
    os.push_back(w.shape()[1]);
    return reshape(y, os);
}

template <typename T>
Var<T> constant(Tensor<T> t) {
    return Var<T>(std::move(t), false);
}

}  // namespace sgrep
