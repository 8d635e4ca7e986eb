#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "terranet/adam.hpp"
#include "terranet/layers.hpp"
#include "terranet/rng.hpp"
#include "terranet/tensor.hpp"

namespace terranet {

/// Layer widths of the three branches. The point branch needs at least two
/// entries: the second-to-last layer provides the per-point features P, the
/// last one feeds the pooled block-global vector B.
struct NetConfig {
    std::vector<int> point_branch_widths{64, 64, 128, 1024};
    std::vector<int> neighborhood_branch_widths{64, 128};
    std::vector<int> head_widths{512, 256, 128, 1};
    int input_features = 10;

    void validate() const {
        auto all_positive = [](const std::vector<int>& widths) {
            for (int w : widths) {
                if (w < 1) return false;
            }
            return true;
        };
        if (input_features < 1) throw ConfigError("net: input_features must be >= 1");
        if (point_branch_widths.size() < 2) {
            throw ConfigError("net: point_branch_widths needs >= 2 layers (features + global)");
        }
        // An empty neighborhood width list bypasses the branch entirely.
        if (head_widths.empty() || head_widths.back() != 1) {
            throw ConfigError("net: head_widths must end in a width-1 layer");
        }
        if (!all_positive(point_branch_widths) || !all_positive(neighborhood_branch_widths) ||
            !all_positive(head_widths)) {
            throw ConfigError("net: all layer widths must be >= 1");
        }
    }

    std::size_t point_feature_width() const {
        return static_cast<std::size_t>(point_branch_widths[point_branch_widths.size() - 2]);
    }
    std::size_t global_width() const {
        return static_cast<std::size_t>(point_branch_widths.back());
    }
    std::size_t neighborhood_width() const {
        return neighborhood_branch_widths.empty()
                   ? 0
                   : static_cast<std::size_t>(neighborhood_branch_widths.back());
    }
    std::size_t concat_width() const {
        return point_feature_width() + global_width() + neighborhood_width();
    }

    bool operator==(const NetConfig&) const = default;
};

/// All learnable weights, ordered point branch, neighborhood branch, head.
template <typename T>
struct NetParams {
    NetConfig config;
    std::vector<DenseLayerParams<T>> point_layers;
    std::vector<DenseLayerParams<T>> nbr_layers;
    std::vector<DenseLayerParams<T>> head_layers;

    /// Stable parameter ordering shared by gradients and optimizer state.
    std::vector<Tensor<T>*> parameter_list() {
        std::vector<Tensor<T>*> out;
        for (auto* branch : {&point_layers, &nbr_layers, &head_layers}) {
            for (auto& layer : *branch) {
                out.push_back(&layer.weights);
                out.push_back(&layer.biases);
            }
        }
        return out;
    }
    std::vector<const Tensor<T>*> parameter_list() const {
        std::vector<const Tensor<T>*> out;
        for (const auto* branch : {&point_layers, &nbr_layers, &head_layers}) {
            for (const auto& layer : *branch) {
                out.push_back(&layer.weights);
                out.push_back(&layer.biases);
            }
        }
        return out;
    }

    template <typename U>
    NetParams<U> cast() const {
        NetParams<U> out;
        out.config = config;
        auto convert = [](const std::vector<DenseLayerParams<T>>& src,
                          std::vector<DenseLayerParams<U>>& dst) {
            dst.reserve(src.size());
            for (const auto& layer : src) {
                DenseLayerParams<U> converted =
                    DenseLayerParams<U>::zeros(layer.fan_in(), layer.fan_out());
                for (std::size_t i = 0; i < layer.weights.size(); ++i) {
                    converted.weights[i] = static_cast<U>(layer.weights[i]);
                }
                for (std::size_t i = 0; i < layer.biases.size(); ++i) {
                    converted.biases[i] = static_cast<U>(layer.biases[i]);
                }
                dst.push_back(std::move(converted));
            }
        };
        convert(point_layers, out.point_layers);
        convert(nbr_layers, out.nbr_layers);
        convert(head_layers, out.head_layers);
        return out;
    }
};

/// Parameter gradients with the same branch/layer layout as NetParams.
template <typename T>
struct NetGrads {
    std::vector<DenseLayerParams<T>> point_layers;
    std::vector<DenseLayerParams<T>> nbr_layers;
    std::vector<DenseLayerParams<T>> head_layers;

    static NetGrads zeros_like(const NetParams<T>& params) {
        NetGrads grads;
        auto make = [](const std::vector<DenseLayerParams<T>>& src) {
            std::vector<DenseLayerParams<T>> out;
            out.reserve(src.size());
            for (const auto& layer : src) {
                out.push_back(DenseLayerParams<T>::zeros(layer.fan_in(), layer.fan_out()));
            }
            return out;
        };
        grads.point_layers = make(params.point_layers);
        grads.nbr_layers = make(params.nbr_layers);
        grads.head_layers = make(params.head_layers);
        return grads;
    }

    std::vector<const Tensor<T>*> gradient_list() const {
        std::vector<const Tensor<T>*> out;
        for (const auto* branch : {&point_layers, &nbr_layers, &head_layers}) {
            for (const auto& layer : *branch) {
                out.push_back(&layer.weights);
                out.push_back(&layer.biases);
            }
        }
        return out;
    }
    std::vector<Tensor<T>*> gradient_list() {
        std::vector<Tensor<T>*> out;
        for (auto* branch : {&point_layers, &nbr_layers, &head_layers}) {
            for (auto& layer : *branch) {
                out.push_back(&layer.weights);
                out.push_back(&layer.biases);
            }
        }
        return out;
    }

    void accumulate(const NetGrads& other) {
        auto add = [](std::vector<DenseLayerParams<T>>& dst,
                      const std::vector<DenseLayerParams<T>>& src) {
            for (std::size_t l = 0; l < dst.size(); ++l) {
                for (std::size_t i = 0; i < dst[l].weights.size(); ++i) {
                    dst[l].weights[i] += src[l].weights[i];
                }
                for (std::size_t i = 0; i < dst[l].biases.size(); ++i) {
                    dst[l].biases[i] += src[l].biases[i];
                }
            }
        };
        add(point_layers, other.point_layers);
        add(nbr_layers, other.nbr_layers);
        add(head_layers, other.head_layers);
    }

    void scale(T factor) {
        for (Tensor<T>* g : gradient_list()) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] *= factor;
        }
    }
};

/// Glorot-uniform weights, zero biases, reproducible by seed.
template <typename T>
NetParams<T> init_network(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, {0x696e6974ull})); // "init"
    NetParams<T> params;
    params.config = config;

    auto build_branch = [&](std::size_t fan_in, const std::vector<int>& widths,
                            std::vector<DenseLayerParams<T>>& layers) {
        for (int width : widths) {
            const std::size_t fan_out = static_cast<std::size_t>(width);
            DenseLayerParams<T> layer = DenseLayerParams<T>::zeros(fan_in, fan_out);
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (std::size_t i = 0; i < layer.weights.size(); ++i) {
                layer.weights[i] = static_cast<T>(rng.uniform(-bound, bound));
            }
            layers.push_back(std::move(layer));
            fan_in = fan_out;
        }
    };

    const std::size_t f = static_cast<std::size_t>(config.input_features);
    build_branch(f, config.point_branch_widths, params.point_layers);
    build_branch(f, config.neighborhood_branch_widths, params.nbr_layers);
    build_branch(config.concat_width(), config.head_widths, params.head_layers);
    return params;
}

/// Every activation and argmax needed to run the exact backward pass.
template <typename T>
struct ForwardCache {
    Tensor<T> points;                      // NxF input
    Tensor<T> neighborhoods;               // NxKxF input
    std::vector<Tensor<T>> point_acts;     // post-relu, one per point layer
    MaxPoolResult<T> global_pool;          // pool of the last point activation over N
    std::vector<Tensor<T>> nbr_acts;       // post-relu, one per neighborhood layer
    MaxPoolResult<T> nbr_pool;             // pool of the last neighborhood activation over K
    Tensor<T> concat;                      // T = [P | B | G']
    std::vector<Tensor<T>> head_acts;      // post-relu, one per head layer
};

template <typename T>
struct ForwardResult {
    Tensor<T> pred; // length-N, all entries >= 0
    ForwardCache<T> cache;
};

/// Two-branch forward pass: per-point features P, block-global vector B
/// (max over the block, replicated to each row), per-point neighborhood
/// vector G' (max over the K sampled neighbors), concatenated and regressed
/// through relu layers so predictions are nonnegative by construction.
template <typename T>
ForwardResult<T> forward(const NetParams<T>& params, const Tensor<T>& points,
                         const Tensor<T>& neighborhoods) {
    const NetConfig& cfg = params.config;
    const std::size_t f = static_cast<std::size_t>(cfg.input_features);
    if (points.rank() != 2 || points.dim(1) != f) {
        throw DimensionError("forward: points " + shape_string(points.shape()) + " expected Nx" +
                             std::to_string(f));
    }
    if (neighborhoods.rank() != 3 || neighborhoods.dim(0) != points.dim(0) ||
        neighborhoods.dim(2) != f) {
        throw DimensionError("forward: neighborhoods " + shape_string(neighborhoods.shape()) +
                             " expected " + std::to_string(points.dim(0)) + "xKx" +
                             std::to_string(f));
    }
    require_finite(points, "forward points");
    require_finite(neighborhoods, "forward neighborhoods");

    const std::size_t n = points.dim(0);
    ForwardCache<T> cache;
    cache.points = points;
    cache.neighborhoods = neighborhoods;

    // Point branch.
    const Tensor<T>* prev = &cache.points;
    for (const auto& layer : params.point_layers) {
        cache.point_acts.push_back(relu(shared_dense_forward(*prev, layer)));
        prev = &cache.point_acts.back();
    }
    const Tensor<T>& point_features = cache.point_acts[cache.point_acts.size() - 2];

    // Block-global vector: max over the N points, replicated to every row.
    cache.global_pool = maxpool_axis(cache.point_acts.back(), 0);
    const std::size_t gw = cfg.global_width();
    Tensor<T> global_rows({n, gw});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < gw; ++j) global_rows(i, j) = cache.global_pool.values[j];
    }

    // Neighborhood branch (absent widths bypass it with a zero-width G').
    Tensor<T> nbr_vector({n, 0});
    if (!params.nbr_layers.empty()) {
        prev = &cache.neighborhoods;
        for (const auto& layer : params.nbr_layers) {
            cache.nbr_acts.push_back(relu(shared_dense_forward(*prev, layer)));
            prev = &cache.nbr_acts.back();
        }
        cache.nbr_pool = maxpool_axis(cache.nbr_acts.back(), 1);
        nbr_vector = cache.nbr_pool.values;
    }

    cache.concat = concat_last_axis(point_features, global_rows, nbr_vector);

    // Regression head; the final relu enforces nonnegative output.
    prev = &cache.concat;
    for (const auto& layer : params.head_layers) {
        cache.head_acts.push_back(relu(shared_dense_forward(*prev, layer)));
        prev = &cache.head_acts.back();
    }

    Tensor<T> pred({n});
    const Tensor<T>& last = cache.head_acts.back();
    for (std::size_t i = 0; i < n; ++i) pred[i] = last(i, 0);

    ForwardResult<T> result;
    result.pred = std::move(pred);
    result.cache = std::move(cache);
    return result;
}

/// Exact analytic gradients of the loss w.r.t. every parameter, given
/// d loss / d prediction. Maxpools route through cached argmaxes; the
/// replicated global vector accumulates gradients from all N rows.
template <typename T>
NetGrads<T> backward(const NetParams<T>& params, const ForwardCache<T>& cache,
                     const Tensor<T>& loss_grad) {
    const NetConfig& cfg = params.config;
    const std::size_t n = cache.points.dim(0);
    if (loss_grad.rank() != 1 || loss_grad.size() != n) {
        throw DimensionError("backward: loss gradient " + shape_string(loss_grad.shape()) +
                             " expected length " + std::to_string(n));
    }
    if (cache.head_acts.empty() || cache.head_acts.back().dim(0) != n) {
        throw DimensionError("backward: stale cache (shape mismatch with loss gradient)");
    }
    NetGrads<T> grads = NetGrads<T>::zeros_like(params);

    // Head, last layer first.
    Tensor<T> grad({n, 1});
    for (std::size_t i = 0; i < n; ++i) grad(i, 0) = loss_grad[i];
    for (std::size_t l = params.head_layers.size(); l-- > 0;) {
        grad = relu_backward(cache.head_acts[l], grad);
        const Tensor<T>& input = l == 0 ? cache.concat : cache.head_acts[l - 1];
        DenseGrads<T> dg = shared_dense_backward(input, params.head_layers[l], grad);
        grads.head_layers[l].weights = std::move(dg.weights);
        grads.head_layers[l].biases = std::move(dg.biases);
        grad = std::move(dg.input);
    }

    auto parts = split_last_axis(grad, cfg.point_feature_width(), cfg.global_width(),
                                 cfg.neighborhood_width());
    Tensor<T>& grad_point_features = parts[0];
    Tensor<T>& grad_global_rows = parts[1];
    Tensor<T>& grad_nbr_vector = parts[2];

    // Replicated B: sum the row gradients, then scatter to the pooled argmax.
    const std::size_t gw = cfg.global_width();
    Tensor<T> grad_global({gw});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < gw; ++j) grad_global[j] += grad_global_rows(i, j);
    }
    Tensor<T> grad_point = maxpool_backward(cache.global_pool, grad_global);

    // Point branch; P feeds both the head (directly) and the global layer.
    for (std::size_t l = params.point_layers.size(); l-- > 0;) {
        grad_point = relu_backward(cache.point_acts[l], grad_point);
        const Tensor<T>& input = l == 0 ? cache.points : cache.point_acts[l - 1];
        DenseGrads<T> dg = shared_dense_backward(input, params.point_layers[l], grad_point);
        grads.point_layers[l].weights = std::move(dg.weights);
        grads.point_layers[l].biases = std::move(dg.biases);
        grad_point = std::move(dg.input);
        if (l == params.point_layers.size() - 1) {
            for (std::size_t i = 0; i < grad_point.size(); ++i) {
                grad_point[i] += grad_point_features[i];
            }
        }
    }

    // Neighborhood branch through the K-axis pool.
    if (params.nbr_layers.empty()) return grads;
    Tensor<T> grad_nbr = maxpool_backward(cache.nbr_pool, grad_nbr_vector);
    for (std::size_t l = params.nbr_layers.size(); l-- > 0;) {
        grad_nbr = relu_backward(cache.nbr_acts[l], grad_nbr);
        const Tensor<T>& input = l == 0 ? cache.neighborhoods : cache.nbr_acts[l - 1];
        DenseGrads<T> dg = shared_dense_backward(input, params.nbr_layers[l], grad_nbr);
        grads.nbr_layers[l].weights = std::move(dg.weights);
        grads.nbr_layers[l].biases = std::move(dg.biases);
        grad_nbr = std::move(dg.input);
    }

    return grads;
}

/// Compares analytic parameter gradients against central finite differences
/// of the logcosh objective, one parameter at a time. Returns the max over
/// parameters of |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
/// Meant to run in double precision.
template <typename T>
double gradient_check(NetParams<T>& params, const Tensor<T>& points,
                      const Tensor<T>& neighborhoods, const Tensor<T>& truth, double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-4) {
        throw DomainError("gradient_check: epsilon must lie in [1e-7, 1e-4]");
    }
    auto loss_at = [&]() {
        ForwardResult<T> fr = forward(params, points, neighborhoods);
        const LossResult<T> lr = logcosh_loss(truth, fr.pred);
        if (!std::isfinite(static_cast<double>(lr.loss))) {
            throw NumericError("gradient_check: non-finite loss while probing");
        }
        return static_cast<double>(lr.loss);
    };

    ForwardResult<T> fr = forward(params, points, neighborhoods);
    const LossResult<T> lr = logcosh_loss(truth, fr.pred);
    const NetGrads<T> analytic = backward(params, fr.cache, lr.grad);

    double max_rel = 0.0;
    const auto param_tensors = params.parameter_list();
    const auto grad_tensors = analytic.gradient_list();
    for (std::size_t t = 0; t < param_tensors.size(); ++t) {
        Tensor<T>& p = *param_tensors[t];
        const Tensor<T>& g = *grad_tensors[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const T saved = p[i];
            p[i] = saved + static_cast<T>(epsilon);
            const double loss_plus = loss_at();
            p[i] = saved - static_cast<T>(epsilon);
            const double loss_minus = loss_at();
            p[i] = saved;
            const double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
            const double ana = static_cast<double>(g[i]);
            const double rel =
                std::abs(ana - numeric) / std::max(1e-12, std::abs(ana) + std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace terranet
