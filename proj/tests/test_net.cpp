#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "terranet/checkpoint.hpp"
#include "terranet/net.hpp"
#include "terranet/rng.hpp"

using namespace terranet;

namespace {

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.point_branch_widths = {8, 8, 16};
    cfg.neighborhood_branch_widths = {8, 16};
    cfg.head_widths = {16, 1};
    cfg.input_features = 10;
    return cfg;
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
struct NetInputs {
    Tensor<T> points;
    Tensor<T> neighborhoods;
    Tensor<T> truth;
};

template <typename T>
NetInputs<T> random_inputs(std::size_t n, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    NetInputs<T> in{Tensor<T>({n, 10}), Tensor<T>({n, k, 10}), Tensor<T>({n})};
    fill_uniform(in.points, rng, -1.5, 1.5);
    fill_uniform(in.neighborhoods, rng, -1.5, 1.5);
    fill_uniform(in.truth, rng, 0.0, 4.0);
    return in;
}

} // namespace

TEST_CASE("init_network is seeded and respects the glorot bound") {
    const auto cfg = tiny_config();
    auto a = init_network<float>(cfg, 7);
    auto b = init_network<float>(cfg, 7);
    auto c = init_network<float>(cfg, 8);

    const auto pa = a.parameter_list();
    const auto pb = b.parameter_list();
    const auto pc = c.parameter_list();
    bool identical = true, differs = false;
    for (std::size_t t = 0; t < pa.size(); ++t) {
        for (std::size_t i = 0; i < pa[t]->size(); ++i) {
            identical = identical && (*pa[t])[i] == (*pb[t])[i];
            differs = differs || (*pa[t])[i] != (*pc[t])[i];
        }
    }
    CHECK(identical);
    CHECK(differs);

    for (const auto& layer : a.point_layers) {
        const double bound =
            std::sqrt(6.0 / static_cast<double>(layer.fan_in() + layer.fan_out()));
        for (float w : layer.weights.values()) {
            CHECK(std::abs(w) < bound);
        }
        for (float bias : layer.biases.values()) CHECK(bias == 0.0f);
    }

    NetConfig bad = cfg;
    bad.head_widths = {16, 2};
    CHECK_THROWS_AS(init_network<float>(bad, 1), ConfigError);
    bad = cfg;
    bad.point_branch_widths = {8};
    CHECK_THROWS_AS(init_network<float>(bad, 1), ConfigError);
}

TEST_CASE("predictions are nonnegative for random inputs") {
    auto params = init_network<float>(tiny_config(), 3);
    for (int trial = 0; trial < 25; ++trial) {
        const auto in = random_inputs<float>(16, 4, 100 + trial);
        const auto out = forward(params, in.points, in.neighborhoods);
        for (float v : out.pred.values()) CHECK(v >= 0.0f);
    }
}

TEST_CASE("permuting points permutes predictions identically") {
    auto params = init_network<double>(tiny_config(), 5);
    const std::size_t n = 12, k = 3;
    const auto in = random_inputs<double>(n, k, 42);
    const auto base = forward(params, in.points, in.neighborhoods);

    Rng rng(9);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(perm);

    Tensor<double> px({n, 10}), pn({n, k, 10});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < 10; ++f) px(i, f) = in.points(perm[i], f);
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t f = 0; f < 10; ++f) pn(i, j, f) = in.neighborhoods(perm[i], j, f);
    }
    const auto permuted = forward(params, px, pn);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(permuted.pred[i] == Catch::Approx(base.pred[perm[i]]).epsilon(1e-12));
    }
}

TEST_CASE("duplicating a neighbor row leaves predictions unchanged") {
    auto params = init_network<float>(tiny_config(), 11);
    const std::size_t n = 6, k = 5;
    const auto in = random_inputs<float>(n, k, 77);

    const auto base = forward(params, in.points, in.neighborhoods);
    Tensor<float> replicated = in.neighborhoods;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < 10; ++f) replicated(i, 4, f) = replicated(i, 2, f);
    const auto out = forward(params, in.points, replicated);
    // row 4 now duplicates row 2: the max over K is unchanged
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(out.pred[i] == base.pred[i]);
    }
}

TEST_CASE("one point can influence another through the global vector") {
    auto params = init_network<float>(tiny_config(), 21);
    const std::size_t n = 8, k = 2;
    bool found = false;
    for (int trial = 0; trial < 20 && !found; ++trial) {
        auto in = random_inputs<float>(n, k, 500 + trial);
        const auto base = forward(params, in.points, in.neighborhoods);
        in.points(0, 2) += 4.0f; // perturb one feature of point 0
        const auto bumped = forward(params, in.points, in.neighborhoods);
        for (std::size_t i = 1; i < n; ++i) {
            if (bumped.pred[i] != base.pred[i]) found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("single point, single neighbor matches replayed layer calls") {
    NetConfig cfg;
    cfg.point_branch_widths = {4, 6};
    cfg.neighborhood_branch_widths = {5};
    cfg.head_widths = {3, 1};
    auto params = init_network<double>(cfg, 2);
    const auto in = random_inputs<double>(1, 1, 9);

    const auto out = forward(params, in.points, in.neighborhoods);

    // replay the network one layer at a time
    auto point_feats = relu(shared_dense_forward(in.points, params.point_layers[0]));
    auto global_row = relu(shared_dense_forward(point_feats, params.point_layers[1]));
    // with N = 1 the pooled global vector is that single row
    auto nbr_emb = relu(shared_dense_forward(in.neighborhoods, params.nbr_layers[0]));
    Tensor<double> nbr_vec({1, 5});
    for (std::size_t f = 0; f < 5; ++f) nbr_vec(0, f) = nbr_emb(0, 0, f);
    const auto joined = concat_last_axis(point_feats, global_row, nbr_vec);
    auto h = relu(shared_dense_forward(joined, params.head_layers[0]));
    h = relu(shared_dense_forward(h, params.head_layers[1]));
    CHECK(out.pred[0] == Catch::Approx(h(0, 0)).epsilon(1e-12));
}

TEST_CASE("zero loss gradient produces zero parameter gradients") {
    auto params = init_network<double>(tiny_config(), 6);
    const auto in = random_inputs<double>(5, 3, 13);
    const auto out = forward(params, in.points, in.neighborhoods);
    const auto grads = backward(params, out.cache, Tensor<double>({5}));
    for (const Tensor<double>* g : grads.gradient_list()) {
        for (double v : g->values()) CHECK(v == 0.0);
    }
}

TEST_CASE("full-network gradient check stays under 1e-4") {
    auto params = init_network<double>(tiny_config(), 4);
    const auto in = random_inputs<double>(8, 4, 2024);
    const double err = gradient_check(params, in.points, in.neighborhoods, in.truth, 1e-5);
    INFO("max relative error " << err);
    CHECK(err < 1e-4);
}

TEST_CASE("gradient check on a neighborhood-bypass network") {
    NetConfig cfg = tiny_config();
    cfg.neighborhood_branch_widths = {};
    auto params = init_network<double>(cfg, 4);
    CHECK(params.nbr_layers.empty());
    const auto in = random_inputs<double>(6, 2, 31);
    const auto out = forward(params, in.points, in.neighborhoods);
    REQUIRE(out.pred.size() == 6);
    const double err = gradient_check(params, in.points, in.neighborhoods, in.truth, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("zero-residual input gives near-zero gradients both ways") {
    auto params = init_network<double>(tiny_config(), 15);
    const auto in = random_inputs<double>(6, 3, 55);
    const auto out = forward(params, in.points, in.neighborhoods);
    const auto loss = logcosh_loss(out.pred, out.pred); // truth == pred
    CHECK(loss.loss == 0.0);
    const auto grads = backward(params, out.cache, loss.grad);
    for (const Tensor<double>* g : grads.gradient_list()) {
        for (double v : g->values()) CHECK(std::abs(v) < 1e-8);
    }
}

TEST_CASE("checkpoint round-trips bit-exactly with metadata") {
    const auto dir = std::filesystem::temp_directory_path() / "terranet_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "net.tnet";

    auto params = init_network<float>(tiny_config(), 77);
    const nlohmann::json meta{{"epoch", 3}, {"val_loss", 0.125}};
    save_checkpoint(params, meta, path);

    const auto loaded = load_checkpoint(path);
    CHECK(loaded.params.config == params.config);
    CHECK(loaded.metadata.at("epoch") == 3);
    CHECK(loaded.metadata.at("val_loss") == 0.125);

    const auto orig = params.parameter_list();
    const auto back = loaded.params.parameter_list();
    REQUIRE(orig.size() == back.size());
    for (std::size_t t = 0; t < orig.size(); ++t) {
        REQUIRE(orig[t]->size() == back[t]->size());
        CHECK(std::memcmp(orig[t]->data(), back[t]->data(), orig[t]->size() * sizeof(float)) == 0);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted checkpoints are rejected whole") {
    const auto dir = std::filesystem::temp_directory_path() / "terranet_ckpt_corrupt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "net.tnet";
    save_checkpoint(init_network<float>(tiny_config(), 1), {{"epoch", 0}}, path);

    // flip one byte in the middle of the parameter payload
    const auto size = std::filesystem::file_size(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(static_cast<std::streamoff>(size / 2));
        char byte = 0;
        f.read(&byte, 1);
        byte = static_cast<char>(byte ^ 0x40);
        f.seekp(static_cast<std::streamoff>(size / 2));
        f.write(&byte, 1);
    }
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);

    // truncation is also detected
    std::filesystem::resize_file(path, size - 8);
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);

    std::filesystem::remove_all(dir);
}
