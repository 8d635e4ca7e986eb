#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "terranet/tensor.hpp"

namespace terranet {

/// Adam optimizer moments, congruent with one ordered parameter list.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::int64_t t = 0;
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T epsilon = static_cast<T>(1e-8);

    static AdamState like(const std::vector<Tensor<T>*>& params) {
        AdamState state;
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const Tensor<T>* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
        return state;
    }
};

/// One Adam update with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads,
               AdamState<T>& state, T lr) {
    if (!(lr > T{0})) throw DomainError("adam_step: learning rate must be positive");
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw DimensionError("adam_step: parameter/gradient/state count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.m[i])) {
            throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(i) +
                                 ": " + shape_string(params[i]->shape()) + " vs " +
                                 shape_string(grads[i]->shape()));
        }
        require_finite(*grads[i], "adam_step gradient");
    }

    state.t += 1;
    const T bc1 = T{1} - std::pow(state.beta1, static_cast<T>(state.t));
    const T bc2 = T{1} - std::pow(state.beta2, static_cast<T>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = *grads[i];
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (T{1} - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (T{1} - state.beta2) * g[j] * g[j];
            const T m_hat = m[j] / bc1;
            const T v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

} // namespace terranet
