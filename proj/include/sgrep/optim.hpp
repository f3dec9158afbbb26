// Adam with bias correction and the warmup-cosine learning-rate schedule.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "sgrep/tensor.hpp"

namespace sgrep {

template <typename T>
struct AdamState {
    Tensor<T> m, v;
    int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

// One Adam update for a single parameter tensor; moments lazily sized.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr) {
    if (grad.shape != param.shape)
        throw ShapeMismatch("adam_step: grad " + shape_str(grad.shape) + " vs param " +
                            shape_str(param.shape));
    if (state.m.size() == 0) state.m = Tensor<T>(param.shape);
    if (state.v.size() == 0) state.v = Tensor<T>(param.shape);
    if (state.m.shape != param.shape || state.v.shape != param.shape)
        throw ShapeMismatch("adam_step: moment shape does not match param");

    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (int64_t i = 0; i < param.size(); ++i) {
        double g = static_cast<double>(grad.data[i]);
        double m = b1 * static_cast<double>(state.m.data[i]) + (1.0 - b1) * g;
        double v = b2 * static_cast<double>(state.v.data[i]) + (1.0 - b2) * g * g;
        state.m.data[i] = static_cast<T>(m);
        state.v.data[i] = static_cast<T>(v);
        double mhat = m / bc1;
        double vhat = v / bc2;
        param.data[i] = static_cast<T>(static_cast<double>(param.data[i]) -
                                       lr * mhat / (std::sqrt(vhat) + state.eps));
    }
}

struct LrSchedule {
    double base_lr = 1e-3;
    int64_t warmup_steps = 0;
    int64_t total_steps = 1;
};

// Linear warmup 0 -> base_lr over warmup_steps, cosine decay to 0 at
// total_steps, 0 afterwards.
inline double lr_at(int64_t step, const LrSchedule& sched) {
    if (sched.base_lr <= 0.0) throw InvalidConfig("base_lr must be > 0");
    if (sched.total_steps <= sched.warmup_steps)
        throw InvalidConfig("total_steps must exceed warmup_steps");
    if (step < 0) step = 0;
    if (step < sched.warmup_steps)
        return sched.base_lr * static_cast<double>(step) /
               static_cast<double>(sched.warmup_steps);
    if (step >= sched.total_steps) return 0.0;
    double progress = static_cast<double>(step - sched.warmup_steps) /
                      static_cast<double>(sched.total_steps - sched.warmup_steps);
    return sched.base_lr * 0.5 * (1.0 + std::cos(progress * std::numbers::pi));
}

}  // namespace sgrep
