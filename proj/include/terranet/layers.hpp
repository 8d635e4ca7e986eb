#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "terranet/tensor.hpp"

namespace terranet {

/// One shared dense layer: the same affine map applied independently to
/// every trailing feature vector. Equivalent to a 1x1 convolution over the
/// feature axis.
template <typename T>
struct DenseLayerParams {
    Tensor<T> weights; // fan_in x fan_out
    Tensor<T> biases;  // fan_out

    std::size_t fan_in() const { return weights.dim(0); }
    std::size_t fan_out() const { return weights.dim(1); }

    static DenseLayerParams zeros(std::size_t in, std::size_t out) {
        return {Tensor<T>({in, out}), Tensor<T>({out})};
    }
};

namespace detail {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

template <typename T>
std::size_t leading_count(const Tensor<T>& t) {
    std::size_t rows = 1;
    for (std::size_t a = 0; a + 1 < t.rank(); ++a) rows *= t.dim(a);
    return rows;
}

} // namespace detail

/// output[..., j] = sum_i input[..., i] * W[i, j] + b[j]. Leading dimensions
/// are preserved, so NxF and NxKxF inputs go through the same path.
template <typename T>
Tensor<T> shared_dense_forward(const Tensor<T>& input, const DenseLayerParams<T>& layer) {
    if (input.rank() < 1 || input.dim(input.rank() - 1) != layer.fan_in()) {
        throw DimensionError("shared_dense_forward: input " + shape_string(input.shape()) +
                             " incompatible with weights " + shape_string(layer.weights.shape()));
    }
    const std::size_t rows = detail::leading_count(input);
    const std::size_t fin = layer.fan_in();
    const std::size_t fout = layer.fan_out();

    std::vector<std::size_t> out_shape = input.shape();
    out_shape.back() = fout;
    Tensor<T> output(std::move(out_shape));

    detail::ConstMapRM<T> x(input.data(), rows, fin);
    detail::ConstMapRM<T> w(layer.weights.data(), fin, fout);
    Eigen::Map<const Eigen::RowVector<T, Eigen::Dynamic>> b(layer.biases.data(), fout);
    detail::MapRM<T> y(output.data(), rows, fout);
    y.noalias() = x * w;
    y.rowwise() += b;

    require_finite(output, "shared_dense_forward");
    return output;
}

template <typename T>
struct DenseGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> biases;
};

template <typename T>
DenseGrads<T> shared_dense_backward(const Tensor<T>& input, const DenseLayerParams<T>& layer,
                                    const Tensor<T>& grad_output) {
    const std::size_t rows = detail::leading_count(input);
    if (detail::leading_count(grad_output) != rows ||
        grad_output.dim(grad_output.rank() - 1) != layer.fan_out()) {
        throw DimensionError("shared_dense_backward: gradient " +
                             shape_string(grad_output.shape()) + " incompatible with input " +
                             shape_string(input.shape()));
    }
    const std::size_t fin = layer.fan_in();
    const std::size_t fout = layer.fan_out();

    DenseGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>({fin, fout}), Tensor<T>({fout})};
    detail::ConstMapRM<T> x(input.data(), rows, fin);
    detail::ConstMapRM<T> w(layer.weights.data(), fin, fout);
    detail::ConstMapRM<T> gy(grad_output.data(), rows, fout);

    detail::MapRM<T>(grads.weights.data(), fin, fout).noalias() = x.transpose() * gy;
    Eigen::Map<Eigen::RowVector<T, Eigen::Dynamic>>(grads.biases.data(), fout) = gy.colwise().sum();
    detail::MapRM<T>(grads.input.data(), rows, fin).noalias() = gy * w.transpose();
    return grads;
}

/// Elementwise max(0, x).
template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    const T* src = input.data();
    T* dst = out.data();
    for (std::size_t i = 0; i < input.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
    return out;
}

/// Gradient mask from the cached forward output (derivative 0 at the kink).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
    if (!output.same_shape(grad_output)) {
        throw DimensionError("relu_backward: output " + shape_string(output.shape()) +
                             " vs gradient " + shape_string(grad_output.shape()));
    }
    Tensor<T> grad(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) {
        grad[i] = output[i] > T{0} ? grad_output[i] : T{0};
    }
    return grad;
}

/// Max over one axis with the argmax retained for the backward pass.
template <typename T>
struct MaxPoolResult {
    Tensor<T> values;                  // input shape with `axis` dropped
    std::vector<std::uint32_t> argmax; // first maximal index along `axis`, per output entry
    std::vector<std::size_t> input_shape;
    std::size_t axis = 0;
};

template <typename T>
MaxPoolResult<T> maxpool_axis(const Tensor<T>& input, std::size_t axis) {
    if (axis >= input.rank()) {
        throw DimensionError("maxpool_axis: axis " + std::to_string(axis) +
                             " out of range for " + shape_string(input.shape()));
    }
    const std::size_t mid = input.dim(axis);
    if (mid == 0) {
        throw DomainError("maxpool_axis: pooled dimension is empty in " +
                          shape_string(input.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t a = 0; a < axis; ++a) outer *= input.dim(a);
    for (std::size_t a = axis + 1; a < input.rank(); ++a) inner *= input.dim(a);

    std::vector<std::size_t> out_shape;
    for (std::size_t a = 0; a < input.rank(); ++a) {
        if (a != axis) out_shape.push_back(input.dim(a));
    }
    MaxPoolResult<T> result;
    result.values = Tensor<T>(std::move(out_shape));
    result.argmax.assign(outer * inner, 0);
    result.input_shape = input.shape();
    result.axis = axis;

    const T* src = input.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            T best = src[(o * mid) * inner + in];
            std::uint32_t best_m = 0;
            for (std::size_t m = 1; m < mid; ++m) {
                const T v = src[(o * mid + m) * inner + in];
                if (v > best) { // strict: first occurrence wins on ties
                    best = v;
                    best_m = static_cast<std::uint32_t>(m);
                }
            }
            result.values[o * inner + in] = best;
            result.argmax[o * inner + in] = best_m;
        }
    }
    return result;
}

/// Routes each output gradient back to the cached argmax position.
template <typename T>
Tensor<T> maxpool_backward(const MaxPoolResult<T>& pool, const Tensor<T>& grad_output) {
    if (!pool.values.same_shape(grad_output)) {
        throw DimensionError("maxpool_backward: gradient " + shape_string(grad_output.shape()) +
                             " vs pooled values " + shape_string(pool.values.shape()));
    }
    Tensor<T> grad(pool.input_shape);
    const std::size_t mid = pool.input_shape[pool.axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t a = 0; a < pool.axis; ++a) outer *= pool.input_shape[a];
    for (std::size_t a = pool.axis + 1; a < pool.input_shape.size(); ++a)
        inner *= pool.input_shape[a];
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t flat = o * inner + in;
            grad[(o * mid + pool.argmax[flat]) * inner + in] += grad_output[flat];
        }
    }
    return grad;
}

/// Column-wise concatenation of three NxW tensors, in order (a, b, c).
template <typename T>
Tensor<T> concat_last_axis(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
    if (a.rank() != 2 || b.rank() != 2 || c.rank() != 2 || a.dim(0) != b.dim(0) ||
        a.dim(0) != c.dim(0)) {
        throw DimensionError("concat_last_axis: leading dimensions differ: " +
                             shape_string(a.shape()) + ", " + shape_string(b.shape()) + ", " +
                             shape_string(c.shape()));
    }
    const std::size_t n = a.dim(0);
    const std::size_t wa = a.dim(1), wb = b.dim(1), wc = c.dim(1);
    Tensor<T> out({n, wa + wb + wc});
    for (std::size_t i = 0; i < n; ++i) {
        T* row = out.data() + i * (wa + wb + wc);
        for (std::size_t j = 0; j < wa; ++j) row[j] = a(i, j);
        for (std::size_t j = 0; j < wb; ++j) row[wa + j] = b(i, j);
        for (std::size_t j = 0; j < wc; ++j) row[wa + wb + j] = c(i, j);
    }
    return out;
}

/// Inverse of concat_last_axis for the backward pass.
template <typename T>
std::array<Tensor<T>, 3> split_last_axis(const Tensor<T>& t, std::size_t wa, std::size_t wb,
                                         std::size_t wc) {
    if (t.rank() != 2 || t.dim(1) != wa + wb + wc) {
        throw DimensionError("split_last_axis: " + shape_string(t.shape()) +
                             " cannot split into widths " + std::to_string(wa) + "+" +
                             std::to_string(wb) + "+" + std::to_string(wc));
    }
    const std::size_t n = t.dim(0);
    std::array<Tensor<T>, 3> parts{Tensor<T>({n, wa}), Tensor<T>({n, wb}), Tensor<T>({n, wc})};
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = t.data() + i * (wa + wb + wc);
        for (std::size_t j = 0; j < wa; ++j) parts[0](i, j) = row[j];
        for (std::size_t j = 0; j < wb; ++j) parts[1](i, j) = row[wa + j];
        for (std::size_t j = 0; j < wc; ++j) parts[2](i, j) = row[wa + wb + j];
    }
    return parts;
}

template <typename T>
struct LossResult {
    T loss;
    Tensor<T> grad; // d loss / d prediction
};

namespace detail {

/// log(cosh(x)) via the overflow-safe identity |x| + log1p(e^{-2|x|}) - log 2.
template <typename T>
T logcosh(T x) {
    const T ax = std::abs(x);
    return ax + std::log1p(std::exp(T{-2} * ax)) - static_cast<T>(0.6931471805599453094172321);
}

} // namespace detail

/// Sum_i log(cosh(truth_i - pred_i)) and its gradient w.r.t. predictions.
template <typename T>
LossResult<T> logcosh_loss(const Tensor<T>& truth, const Tensor<T>& pred) {
    if (truth.rank() != 1 || pred.rank() != 1 || truth.size() != pred.size()) {
        throw DimensionError("logcosh_loss: truth " + shape_string(truth.shape()) + " vs pred " +
                             shape_string(pred.shape()));
    }
    if (truth.size() == 0) throw DomainError("logcosh_loss: empty input");

    LossResult<T> result{T{0}, Tensor<T>(truth.shape())};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const T r = truth[i] - pred[i];
        if (!std::isfinite(static_cast<double>(r))) {
            throw NumericError("logcosh_loss: non-finite residual at index " + std::to_string(i));
        }
        result.loss += detail::logcosh(r);
        result.grad[i] = -std::tanh(r);
    }
    return result;
}

} // namespace terranet
