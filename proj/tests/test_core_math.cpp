#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "terranet/adam.hpp"
#include "terranet/layers.hpp"
#include "terranet/rng.hpp"
#include "terranet/tensor.hpp"

using namespace terranet;

namespace {

template <typename T>
Tensor<T> make(std::vector<std::size_t> shape, std::vector<T> values) {
    return Tensor<T>(std::move(shape), std::move(values));
}

} // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor<double> t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK_THROWS_AS(make<double>({2, 2}, {1.0, 2.0, 3.0}), DimensionError);

    Tensor<double> empty_cols({4, 0});
    CHECK(empty_cols.size() == 0);
}

TEST_CASE("shared dense forward matches hand-computed values") {
    // identity weights pass the input through
    auto layer = DenseLayerParams<double>{make<double>({2, 2}, {1, 0, 0, 1}),
                                          make<double>({2}, {0, 0})};
    auto out = shared_dense_forward(make<double>({1, 2}, {1, 2}), layer);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.0);

    // zero input returns the bias
    layer.biases = make<double>({2}, {3, -1});
    out = shared_dense_forward(make<double>({1, 2}, {0, 0}), layer);
    CHECK(out[0] == 3.0);
    CHECK(out[1] == -1.0);

    // general case, multiplied out by hand
    layer.weights = make<double>({2, 2}, {1, 0, 1, 1});
    layer.biases = make<double>({2}, {0.5, 0});
    out = shared_dense_forward(make<double>({1, 2}, {1, 2}), layer);
    CHECK(out[0] == Catch::Approx(3.5));
    CHECK(out[1] == Catch::Approx(2.0));
}

TEST_CASE("shared dense reports shape mismatches with both shapes") {
    auto layer = DenseLayerParams<double>::zeros(3, 2);
    try {
        shared_dense_forward(make<double>({1, 2}, {1, 2}), layer);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[1x2]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("shared dense on NxKxF equals per-row application") {
    Rng rng(11);
    const std::size_t n = 3, k = 4, fin = 5, fout = 6;
    Tensor<double> input({n, k, fin});
    for (auto& v : input.values()) v = rng.uniform(-2, 2);
    DenseLayerParams<double> layer{Tensor<double>({fin, fout}), Tensor<double>({fout})};
    for (auto& v : layer.weights.values()) v = rng.uniform(-1, 1);
    for (auto& v : layer.biases.values()) v = rng.uniform(-1, 1);

    const auto out = shared_dense_forward(input, layer);
    REQUIRE(out.shape() == std::vector<std::size_t>{n, k, fout});

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            Tensor<double> row({1, fin});
            for (std::size_t f = 0; f < fin; ++f) row[f] = input(i, j, f);
            const auto row_out = shared_dense_forward(row, layer);
            for (std::size_t f = 0; f < fout; ++f) {
                CHECK(out(i, j, f) == Catch::Approx(row_out[f]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("relu clamps negatives and keeps nonnegatives") {
    const auto out = relu(make<double>({3}, {-1, 0, 2}));
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 2.0);

    const auto all_negative = relu(make<double>({3}, {-5, -1, -0.25}));
    for (double v : all_negative.values()) CHECK(v == 0.0);

    const auto nonneg = make<double>({4}, {0, 1, 2.5, 7});
    CHECK(relu(nonneg).values() == nonneg.values());
}

TEST_CASE("maxpool over an axis with argmax") {
    auto pooled = maxpool_axis(make<double>({1, 3}, {1, 5, 2}), 1);
    REQUIRE(pooled.values.size() == 1);
    CHECK(pooled.values[0] == 5.0);
    CHECK(pooled.argmax[0] == 1);

    pooled = maxpool_axis(make<double>({2, 2}, {1, 2, 4, 3}), 1);
    CHECK(pooled.values[0] == 2.0);
    CHECK(pooled.values[1] == 4.0);

    // duplicated maxima change nothing; first occurrence wins
    pooled = maxpool_axis(make<double>({1, 4}, {1, 5, 5, 2}), 1);
    CHECK(pooled.values[0] == 5.0);
    CHECK(pooled.argmax[0] == 1);

    CHECK_THROWS_AS(maxpool_axis(make<double>({2, 2}, {1, 2, 3, 4}), 2), DimensionError);
}

TEST_CASE("maxpool is invariant under permutation along the pooled axis") {
    Rng rng(3);
    Tensor<double> input({4, 6, 3});
    for (auto& v : input.values()) v = rng.uniform(-10, 10);
    const auto base = maxpool_axis(input, 1);

    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    Tensor<double> shuffled({4, 6, 3});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            for (std::size_t c = 0; c < 3; ++c) shuffled(i, j, c) = input(i, perm[j], c);

    const auto permuted = maxpool_axis(shuffled, 1);
    for (std::size_t i = 0; i < base.values.size(); ++i) {
        CHECK(permuted.values[i] == base.values[i]);
    }
}

TEST_CASE("maxpool backward routes gradient to the argmax") {
    const auto input = make<double>({2, 3}, {1, 9, 2, 7, 7, 0});
    auto pooled = maxpool_axis(input, 1);
    const auto grad = maxpool_backward(pooled, make<double>({2}, {0.5, -1.0}));
    CHECK(grad(0, 1) == 0.5);
    CHECK(grad(1, 0) == -1.0); // tie: first occurrence
    CHECK(grad(0, 0) == 0.0);
    CHECK(grad(1, 1) == 0.0);
}

TEST_CASE("concat over the last axis") {
    auto out = concat_last_axis(make<double>({1, 1}, {1}), make<double>({1, 1}, {2}),
                                make<double>({1, 1}, {3}));
    CHECK(out.values() == std::vector<double>{1, 2, 3});

    // degenerate middle width
    out = concat_last_axis(make<double>({2, 1}, {1, 4}), Tensor<double>({2, 0}),
                           make<double>({2, 1}, {3, 6}));
    CHECK(out.values() == std::vector<double>{1, 3, 4, 6});

    // rows stay in order
    out = concat_last_axis(make<double>({2, 2}, {1, 2, 5, 6}), make<double>({2, 1}, {3, 7}),
                           make<double>({2, 1}, {4, 8}));
    CHECK(out.values() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});

    CHECK_THROWS_AS(concat_last_axis(Tensor<double>({2, 1}), Tensor<double>({3, 1}),
                                     Tensor<double>({2, 1})),
                    DimensionError);
}

TEST_CASE("split undoes concat") {
    Rng rng(5);
    Tensor<double> a({3, 2}), b({3, 4}), c({3, 1});
    for (auto* t : {&a, &b, &c}) {
        for (auto& v : t->values()) v = rng.uniform(-1, 1);
    }
    const auto joined = concat_last_axis(a, b, c);
    const auto parts = split_last_axis(joined, 2, 4, 1);
    CHECK(parts[0].values() == a.values());
    CHECK(parts[1].values() == b.values());
    CHECK(parts[2].values() == c.values());
}

TEST_CASE("logcosh loss values and gradient") {
    const auto zero = logcosh_loss(make<double>({2}, {1, 2}), make<double>({2}, {1, 2}));
    CHECK(zero.loss == 0.0);
    CHECK(zero.grad[0] == 0.0);
    CHECK(zero.grad[1] == 0.0);

    const auto unit = logcosh_loss(make<double>({1}, {1}), make<double>({1}, {0}));
    CHECK(unit.loss == Catch::Approx(0.433781).margin(1e-6));
    CHECK(unit.grad[0] == Catch::Approx(-std::tanh(1.0)).epsilon(1e-12));

    // overflow-safe for large residuals
    const auto big = logcosh_loss(make<double>({1}, {100}), make<double>({1}, {0}));
    CHECK(std::isfinite(big.loss));
    CHECK(big.loss == Catch::Approx(100.0 - std::log(2.0)).margin(1e-6));

    CHECK_THROWS_AS(logcosh_loss(Tensor<double>({2}), Tensor<double>({3})), DimensionError);
    CHECK_THROWS_AS(logcosh_loss(Tensor<double>({0}), Tensor<double>({0})), DomainError);
}

TEST_CASE("logcosh bounds hold for random residuals") {
    Rng rng(17);
    const double ln2 = std::log(2.0);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.uniform(-60, 60);
        const double lc = detail::logcosh(x);
        CHECK(lc >= 0.0);
        CHECK(lc <= x * x / 2 + 1e-12);
        CHECK(lc >= std::abs(x) - ln2 - 1e-12);
        CHECK(std::abs(std::tanh(x)) <= 1.0);
    }
}

TEST_CASE("adam with zero gradient is the identity") {
    Tensor<double> p({3}, {1.0, -2.0, 0.5});
    Tensor<double> g({3});
    auto state = AdamState<double>::like({&p});
    // second moments may be anything; only a zero first moment keeps Adam still
    state.v[0][1] = 0.75;
    state.t = 5;
    const auto before = p.values();
    adam_step<double>({&p}, {&g}, state, 0.001);
    adam_step<double>({&p}, {&g}, state, 0.001);
    CHECK(p.values() == before);
    CHECK(state.t == 7);
}

TEST_CASE("adam first-step magnitude approximates lr across gradient scales") {
    const double lr = 0.001;
    for (double scale : {1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e3}) {
        for (double sign : {-1.0, 1.0}) {
            Tensor<double> p({1}, {0.0});
            Tensor<double> g({1}, {sign * scale});
            auto state = AdamState<double>::like({&p});
            adam_step<double>({&p}, {&g}, state, lr);
            CHECK(std::abs(p[0]) == Catch::Approx(lr).epsilon(0.01));
            CHECK(std::signbit(p[0]) != std::signbit(sign)); // moves against the gradient
        }
    }
}

TEST_CASE("adam is deterministic and validates inputs") {
    auto run = [] {
        Tensor<double> p({4}, {0.1, 0.2, 0.3, 0.4});
        Tensor<double> g({4}, {0.5, -0.25, 1.5, -2.0});
        auto state = AdamState<double>::like({&p});
        for (int i = 0; i < 10; ++i) adam_step<double>({&p}, {&g}, state, 0.01);
        return p.values();
    };
    CHECK(run() == run());

    Tensor<double> p({2});
    Tensor<double> bad({3});
    auto state = AdamState<double>::like({&p});
    CHECK_THROWS_AS(adam_step<double>({&p}, {&bad}, state, 0.01), DimensionError);

    Tensor<double> nan_grad({2}, {0.0, std::nan("")});
    CHECK_THROWS_AS(adam_step<double>({&p}, {&nan_grad}, state, 0.01), NumericError);
    CHECK_THROWS_AS(adam_step<double>({&p}, {&nan_grad}, state, -1.0), DomainError);
}

TEST_CASE("dense layer gradients agree with finite differences") {
    Rng rng(23);
    const std::size_t n = 4, fin = 3, fout = 2;
    Tensor<double> input({n, fin});
    for (auto& v : input.values()) v = rng.uniform(-1, 1);
    DenseLayerParams<double> layer{Tensor<double>({fin, fout}), Tensor<double>({fout})};
    for (auto& v : layer.weights.values()) v = rng.uniform(-1, 1);
    for (auto& v : layer.biases.values()) v = rng.uniform(-1, 1);
    Tensor<double> target({n * fout});
    for (auto& v : target.values()) v = rng.uniform(-1, 1);

    auto loss_of = [&]() {
        const auto out = shared_dense_forward(input, layer);
        double loss = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - target[i];
            loss += 0.5 * d * d;
        }
        return loss;
    };

    const auto out = shared_dense_forward(input, layer);
    Tensor<double> grad_out(out.shape());
    for (std::size_t i = 0; i < out.size(); ++i) grad_out[i] = out[i] - target[i];
    const auto grads = shared_dense_backward(input, layer, grad_out);

    const double eps = 1e-6;
    for (auto [param, grad] : {std::pair{&layer.weights, &grads.weights},
                               std::pair{&layer.biases, &grads.biases}}) {
        for (std::size_t i = 0; i < param->size(); ++i) {
            const double saved = (*param)[i];
            (*param)[i] = saved + eps;
            const double lp = loss_of();
            (*param)[i] = saved - eps;
            const double lm = loss_of();
            (*param)[i] = saved;
            const double numeric = (lp - lm) / (2 * eps);
            CHECK((*grad)[i] == Catch::Approx(numeric).margin(1e-6));
        }
    }
}

TEST_CASE("finiteness is rejected at layer boundaries") {
    auto layer = DenseLayerParams<double>::zeros(2, 2);
    layer.weights[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(shared_dense_forward(make<double>({1, 2}, {1, 1}), layer), NumericError);
}

TEST_CASE("rng streams are deterministic and well-scaled") {
    Rng a(42), b(42), c(43);
    bool all_equal = true;
    bool any_diff_seed = false;
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        all_equal = all_equal && va == b.next_u64();
        any_diff_seed = any_diff_seed || va != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);

    Rng r(7);
    double sum = 0;
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / 10000 == Catch::Approx(0.5).margin(0.02));

    double nsum = 0, nsq = 0;
    for (int i = 0; i < 10000; ++i) {
        const double v = r.normal(2.0);
        nsum += v;
        nsq += v * v;
    }
    CHECK(nsum / 10000 == Catch::Approx(0.0).margin(0.08));
    CHECK(std::sqrt(nsq / 10000) == Catch::Approx(2.0).margin(0.08));

    CHECK(mix_seed(1, {2, 3}) != mix_seed(1, {3, 2}));
    CHECK(mix_seed(1, {2, 3}) == mix_seed(1, {2, 3}));
}
