#include "support.hpp"

#include "tslt/error.hpp"
#include "tslt/gradcheck.hpp"
#include "tslt/layers.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

using namespace tslt;
using testing::random_matrix;
using testing::weighted_sum;

namespace {

constexpr double kStep = 1e-5;
constexpr int kSeeds = 20;

void randomize(Matrix& m, RandSource& rng, double scale = 0.5) {
    for (double& v : m.values()) {
        v = scale * rng.normal();
    }
}

double dense_error(std::uint64_t seed, Activation act) {
    RandSource rng(seed);
    DenseLayer layer = make_dense(5, 4, act);
    randomize(layer.weights, rng);
    randomize(layer.bias, rng);
    Matrix x = random_matrix(6, 5, rng);
    const Matrix r = random_matrix(6, 4, rng);

    DenseCache cache;
    dense_forward(layer, x, &cache);
    DenseLayer grads = layer;
    const Matrix dx = dense_backward(layer, cache, r, grads);

    const std::vector<TensorRef> params = {{"weights", 0, &layer.weights}, {"bias", 0, &layer.bias}, {"x", 0, &x}};
    const std::vector<Matrix> analytic = {grads.weights, grads.bias, dx};
    const auto loss = [&] { return weighted_sum(dense_forward(layer, x), r); };
    return finite_difference_check(loss, params, analytic, kStep, 0, rng).max_relative_error;
}

double layernorm_error(std::uint64_t seed) {
    RandSource rng(seed);
    LayerNormLayer layer = make_layernorm(8);
    randomize(layer.gamma, rng);
    randomize(layer.beta, rng);
    Matrix h = random_matrix(4, 8, rng);
    const Matrix r = random_matrix(4, 8, rng);

    LayerNormCache cache;
    layernorm_forward(layer, h, &cache);
    LayerNormLayer grads = layer;
    const Matrix dh = layernorm_backward(layer, cache, r, grads);

    const std::vector<TensorRef> params = {{"gamma", 0, &layer.gamma}, {"beta", 0, &layer.beta}, {"h", 0, &h}};
    const std::vector<Matrix> analytic = {grads.gamma, grads.beta, dh};
    const auto loss = [&] { return weighted_sum(layernorm_forward(layer, h), r); };
    return finite_difference_check(loss, params, analytic, kStep, 0, rng).max_relative_error;
}

MhaLayer random_mha(RandSource& rng) {
    MhaLayer layer = make_mha(8, 2, 4, 16);
    for (Matrix* m : {&layer.query_weights, &layer.key_weights, &layer.value_weights, &layer.output_weights,
                      &layer.query_bias, &layer.key_bias, &layer.value_bias, &layer.output_bias}) {
        randomize(*m, rng);
    }
    return layer;
}

double mha_error(std::uint64_t seed) {
    RandSource rng(seed);
    MhaLayer layer = random_mha(rng);
    Matrix h = random_matrix(2 * 16, 8, rng);
    const Matrix r = random_matrix(2 * 16, 8, rng);

    MhaCache cache;
    mha_forward(layer, h, &cache);
    MhaLayer grads = layer;
    const Matrix dh = mha_backward(layer, cache, r, grads);

    const std::vector<TensorRef> params = {
        {"query_weights", 0, &layer.query_weights}, {"query_bias", 0, &layer.query_bias},
        {"key_weights", 0, &layer.key_weights},     {"key_bias", 0, &layer.key_bias},
        {"value_weights", 0, &layer.value_weights}, {"value_bias", 0, &layer.value_bias},
        {"output_weights", 0, &layer.output_weights}, {"output_bias", 0, &layer.output_bias},
        {"h", 0, &h}};
    const std::vector<Matrix> analytic = {grads.query_weights, grads.query_bias, grads.key_weights,
                                          grads.key_bias,      grads.value_weights, grads.value_bias,
                                          grads.output_weights, grads.output_bias, dh};
    const auto loss = [&] { return weighted_sum(mha_forward(layer, h), r); };
    return finite_difference_check(loss, params, analytic, kStep, 0, rng).max_relative_error;
}

double batchnorm_error(std::uint64_t seed) {
    RandSource rng(seed);
    BatchNormLayer layer = make_batchnorm(5);
    randomize(layer.gamma, rng);
    randomize(layer.beta, rng);
    Matrix x = random_matrix(7, 5, rng, 2.0);
    const Matrix r = random_matrix(7, 5, rng);

    BatchNormCache cache;
    batchnorm_forward(layer, x, Mode::train, &cache);
    BatchNormLayer grads = layer;
    const Matrix dx = batchnorm_backward(layer, cache, r, grads);

    const std::vector<TensorRef> params = {{"gamma", 0, &layer.gamma}, {"beta", 0, &layer.beta}, {"x", 0, &x}};
    const std::vector<Matrix> analytic = {grads.gamma, grads.beta, dx};
    const auto loss = [&] {
        BatchNormLayer probe = layer;
        return weighted_sum(batchnorm_forward(probe, x, Mode::train), r);
    };
    return finite_difference_check(loss, params, analytic, kStep, 0, rng).max_relative_error;
}

double loss_error(std::uint64_t seed) {
    RandSource rng(seed);
    Matrix logits = random_matrix(6, 5, rng, 2.0);
    std::vector<int> labels(6);
    for (int& y : labels) {
        y = static_cast<int>(rng.uniform_index(5));
    }
    const Matrix onehot = one_hot(labels, 5);
    const LossResult res = softmax_cross_entropy(logits, onehot);
    const std::vector<TensorRef> params = {{"logits", 0, &logits}};
    const std::vector<Matrix> analytic = {res.grad};
    const auto loss = [&] { return softmax_cross_entropy(logits, onehot).loss; };
    return finite_difference_check(loss, params, analytic, kStep, 0, rng).max_relative_error;
}

Matrix permute_sequence(const Matrix& h, const std::vector<std::size_t>& perm) {
    Matrix out(h.rows(), h.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t c = 0; c < h.cols(); ++c) {
            out(i, c) = h(perm[i], c);
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("dense identity layer passes input through") {
    DenseLayer layer = make_dense(2, 2, Activation::none);
    layer.weights = Matrix::identity(2);
    const Matrix x = Matrix::from_rows({{-1, 2}, {3.5, -4}});
    CHECK(dense_forward(layer, x) == x);
}

TEST_CASE("dense relu clips negatives") {
    DenseLayer layer = make_dense(2, 2, Activation::relu);
    layer.weights = Matrix::identity(2);
    CHECK(dense_forward(layer, Matrix::from_rows({{-1, 2}})) == Matrix::from_rows({{0, 2}}));
}

TEST_CASE("dense relu derivative at zero is zero") {
    DenseLayer layer = make_dense(1, 1, Activation::relu);
    layer.weights = Matrix::from_rows({{1}});
    DenseCache cache;
    dense_forward(layer, Matrix::from_rows({{0}}), &cache);
    DenseLayer grads = layer;
    const Matrix dx = dense_backward(layer, cache, Matrix::from_rows({{1}}), grads);
    CHECK(dx(0, 0) == 0.0);
    CHECK(grads.bias(0, 0) == 0.0);
}

TEST_CASE("dense rejects a wrong input width") {
    const DenseLayer layer = make_dense(3, 2, Activation::none);
    CHECK_THROWS_AS(dense_forward(layer, Matrix(1, 4)), ShapeError);
}

TEST_CASE("dense gradients match finite differences over 20 seeds") {
    double worst_none = 0.0;
    double worst_relu = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
        worst_none = std::max(worst_none, dense_error(100 + s, Activation::none));
        worst_relu = std::max(worst_relu, dense_error(200 + s, Activation::relu));
    }
    CHECK(worst_none < 1e-6);
    CHECK(worst_relu < 1e-6);
}

TEST_CASE("layernorm of a constant row is zero") {
    const LayerNormLayer layer = make_layernorm(8);
    const Matrix y = layernorm_forward(layer, Matrix(16, 8, 3.25));
    for (double v : y.values()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("layernorm rows have zero mean and unit variance") {
    RandSource rng(31);
    const LayerNormLayer layer = make_layernorm(8);
    const Matrix y = layernorm_forward(layer, random_matrix(16, 8, rng, 1000.0));
    for (std::size_t r = 0; r < y.rows(); ++r) {
        const auto row = y.row(r);
        const double mean = std::accumulate(row.begin(), row.end(), 0.0) / 8.0;
        double var = 0.0;
        for (double v : row) {
            var += (v - mean) * (v - mean);
        }
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var / 8.0 - 1.0) < 1e-6);
    }
}

TEST_CASE("layernorm gradients match finite differences over 20 seeds") {
    double worst = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
        worst = std::max(worst, layernorm_error(300 + s));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("layernorm rejects a wrong feature width") {
    const LayerNormLayer layer = make_layernorm(8);
    CHECK_THROWS_AS(layernorm_forward(layer, Matrix(16, 7)), ShapeError);
}

TEST_CASE("attention with zero projections returns the output bias") {
    MhaLayer layer = make_mha(8, 2, 4, 16);
    for (Matrix* m : {&layer.query_weights, &layer.key_weights, &layer.value_weights, &layer.output_weights}) {
        m->fill(0.0);
    }
    for (std::size_t c = 0; c < 8; ++c) {
        layer.output_bias(0, c) = 0.5 * static_cast<double>(c) - 1.0;
    }
    RandSource rng(1);
    const Matrix y = mha_forward(layer, random_matrix(16, 8, rng));
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(y(r, c) == layer.output_bias(0, c));
        }
    }
}

TEST_CASE("attention over identical rows is uniform") {
    RandSource rng(2);
    const MhaLayer layer = random_mha(rng);
    const Matrix v = random_matrix(1, 8, rng);
    Matrix h(16, 8);
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            h(r, c) = v(0, c);
        }
    }
    MhaCache cache;
    const Matrix y = mha_forward(layer, h, &cache);
    for (double a : cache.attention.values()) {
        CHECK(a == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
    }
    for (std::size_t r = 1; r < 16; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(y(r, c) == doctest::Approx(y(0, c)).epsilon(1e-12));
        }
    }

    // one head evaluated by hand: scores are equal, so the context is the shared value row
    const std::size_t head = 1;
    std::vector<double> value(4);
    for (std::size_t j = 0; j < 4; ++j) {
        double s = layer.value_bias(0, head * 4 + j);
        for (std::size_t c = 0; c < 8; ++c) {
            s += layer.value_weights(head * 4 + j, c) * v(0, c);
        }
        value[j] = s;
    }
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(cache.context(0, head * 4 + j) == doctest::Approx(value[j]).epsilon(1e-12));
    }
}

TEST_CASE("attention matches a brute-force evaluation on random input") {
    RandSource rng(4);
    const MhaLayer layer = random_mha(rng);
    const Matrix h = random_matrix(16, 8, rng);
    const Matrix y = mha_forward(layer, h);

    const auto project = [&](const Matrix& w, const Matrix& b) {
        Matrix out(16, 8);
        for (std::size_t r = 0; r < 16; ++r) {
            for (std::size_t o = 0; o < 8; ++o) {
                double s = b(0, o);
                for (std::size_t c = 0; c < 8; ++c) {
                    s += w(o, c) * h(r, c);
                }
                out(r, o) = s;
            }
        }
        return out;
    };
    const Matrix q = project(layer.query_weights, layer.query_bias);
    const Matrix k = project(layer.key_weights, layer.key_bias);
    const Matrix v = project(layer.value_weights, layer.value_bias);
    Matrix context(16, 8);
    for (std::size_t head = 0; head < 2; ++head) {
        for (std::size_t i = 0; i < 16; ++i) {
            std::vector<double> w(16);
            double mx = -1e300;
            for (std::size_t j = 0; j < 16; ++j) {
                double s = 0.0;
                for (std::size_t d = 0; d < 4; ++d) {
                    s += q(i, head * 4 + d) * k(j, head * 4 + d);
                }
                w[j] = s / 2.0;
                mx = std::max(mx, w[j]);
            }
            double z = 0.0;
            for (double& x : w) {
                x = std::exp(x - mx);
                z += x;
            }
            for (std::size_t d = 0; d < 4; ++d) {
                double s = 0.0;
                for (std::size_t j = 0; j < 16; ++j) {
                    s += w[j] / z * v(j, head * 4 + d);
                }
                context(i, head * 4 + d) = s;
            }
        }
    }
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t o = 0; o < 8; ++o) {
            double s = layer.output_bias(0, o);
            for (std::size_t c = 0; c < 8; ++c) {
                s += layer.output_weights(o, c) * context(r, c);
            }
            CHECK(y(r, o) == doctest::Approx(s).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention gradients match finite differences over 20 seeds") {
    double worst = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
        worst = std::max(worst, mha_error(400 + s));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("attention is permutation equivariant and pooling makes it invariant") {
    RandSource rng(6);
    const MhaLayer layer = random_mha(rng);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix h = random_matrix(16, 8, rng);
        std::vector<std::size_t> perm(16);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<std::size_t>(perm));
        const Matrix y = mha_forward(layer, h);
        const Matrix y_perm = mha_forward(layer, permute_sequence(h, perm));
        CHECK(max_abs_diff(y_perm, permute_sequence(y, perm)) < 1e-12);
        CHECK(max_abs_diff(global_average_pool(y, 16), global_average_pool(y_perm, 16)) < 1e-12);
    }
}

TEST_CASE("sequences in a stacked batch do not attend to each other") {
    RandSource rng(8);
    const MhaLayer layer = random_mha(rng);
    const Matrix a = random_matrix(16, 8, rng);
    const Matrix b = random_matrix(16, 8, rng);
    Matrix both(32, 8);
    std::copy(a.values().begin(), a.values().end(), both.values().begin());
    std::copy(b.values().begin(), b.values().end(), both.values().begin() + 128);
    const Matrix y = mha_forward(layer, both);
    const Matrix ya = mha_forward(layer, a);
    const Matrix yb = mha_forward(layer, b);
    for (std::size_t i = 0; i < 128; ++i) {
        CHECK(y.values()[i] == ya.values()[i]);
        CHECK(y.values()[128 + i] == yb.values()[i]);
    }
}

TEST_CASE("attention rejects a partial sequence") {
    const MhaLayer layer = make_mha(8, 2, 4, 16);
    CHECK_THROWS_AS(mha_forward(layer, Matrix(15, 8)), ShapeError);
}

TEST_CASE("global average pool") {
    SUBCASE("identical rows give that row") {
        Matrix h(16, 8);
        for (std::size_t r = 0; r < 16; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                h(r, c) = static_cast<double>(c) - 3.5;
            }
        }
        const Matrix p = global_average_pool(h, 16);
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(p(0, c) == static_cast<double>(c) - 3.5);
        }
    }
    SUBCASE("backward spreads g/16 to every row") {
        const Matrix g = Matrix::from_rows({{16, -32, 8, 0, 1, 2, 3, 4}});
        const Matrix d = global_average_pool_backward(g, 16);
        CHECK(d.rows() == 16);
        for (std::size_t r = 0; r < 16; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                CHECK(d(r, c) == g(0, c) / 16.0);
            }
        }
    }
    SUBCASE("agrees with mean_over_rows") {
        RandSource rng(12);
        const Matrix h = random_matrix(16, 8, rng);
        CHECK(global_average_pool(h, 16) == mean_over_rows(h));
    }
    SUBCASE("rejects a row count that is not a multiple of the sequence") {
        CHECK_THROWS_AS(global_average_pool(Matrix(17, 8), 16), ShapeError);
    }
}

TEST_CASE("dropout") {
    RandSource rng(14);
    const Matrix x = random_matrix(10, 10, rng);
    SUBCASE("rate 0 in train mode is the identity") {
        Matrix mask;
        CHECK(dropout_apply(DropoutSpec{0.0}, x, Mode::train, &rng, &mask) == x);
    }
    SUBCASE("infer mode is the bit-exact identity and draws nothing") {
        RandSource a(99);
        RandSource b(99);
        Matrix mask(1, 1, 5.0);
        CHECK(dropout_apply(DropoutSpec{0.3}, x, Mode::infer, &a, &mask) == x);
        CHECK(mask.empty());
        CHECK(a.next_u64() == b.next_u64());
    }
    SUBCASE("rate 0.3 keeps about 70% of 10^6 entries and scales them by 1/0.7") {
        RandSource drng(15);
        const Matrix ones(1000, 1000, 1.0);
        Matrix mask;
        const Matrix y = dropout_apply(DropoutSpec{0.3}, ones, Mode::train, &drng, &mask);
        std::size_t kept = 0;
        for (double v : y.values()) {
            if (v != 0.0) {
                ++kept;
                REQUIRE(v == doctest::Approx(1.0 / 0.7).epsilon(1e-15));
            }
        }
        CHECK(std::abs(static_cast<double>(kept) / 1e6 - 0.7) < 0.01);
        CHECK(dropout_backward(mask, ones) == y);
    }
}

TEST_CASE("batchnorm train mode centres every column") {
    RandSource rng(16);
    BatchNormLayer layer = make_batchnorm(6);
    const Matrix y = batchnorm_forward(layer, random_matrix(20, 6, rng, 4.0), Mode::train);
    const Matrix mean = mean_over_rows(y);
    for (double v : mean.values()) {
        CHECK(std::abs(v) < 1e-9);
    }
}

TEST_CASE("batchnorm updates running statistics with momentum") {
    BatchNormLayer layer = make_batchnorm(1);
    batchnorm_forward(layer, Matrix::from_rows({{1}, {3}}), Mode::train);
    CHECK(layer.running_mean(0, 0) == doctest::Approx(0.99 * 0.0 + 0.01 * 2.0));
    CHECK(layer.running_var(0, 0) == doctest::Approx(0.99 * 1.0 + 0.01 * 1.0));
}

TEST_CASE("batchnorm inference with unit running stats is nearly the identity") {
    RandSource rng(18);
    const BatchNormLayer layer = make_batchnorm(4);
    const Matrix x = random_matrix(5, 4, rng);
    const Matrix y = batchnorm_forward(layer, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(y.values()[i] == doctest::Approx(x.values()[i] / std::sqrt(1.0 + 1e-3)).epsilon(1e-14));
    }
}

TEST_CASE("batchnorm gradients match finite differences over 20 seeds") {
    double worst = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
        worst = std::max(worst, batchnorm_error(500 + s));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("batchnorm refuses a single-row training batch") {
    BatchNormLayer layer = make_batchnorm(3);
    CHECK_THROWS_AS(batchnorm_forward(layer, Matrix(1, 3), Mode::train), Error);
}

TEST_CASE("cross-entropy") {
    SUBCASE("a confident correct prediction has almost no loss") {
        const Matrix logits = Matrix::from_rows({{60, 0, 0}, {0, 0, 60}});
        CHECK(softmax_cross_entropy(logits, one_hot(std::vector<int>{0, 2}, 3)).loss <= 1e-9);
    }
    SUBCASE("uniform logits give log K") {
        for (std::size_t k : {2, 5, 10}) {
            const Matrix logits(3, k, 0.7);
            const auto res = softmax_cross_entropy(logits, one_hot(std::vector<int>{0, 1, 1}, k));
            CHECK(res.loss == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-10));
        }
    }
    SUBCASE("fused gradient matches finite differences over 20 seeds") {
        double worst = 0.0;
        for (int s = 0; s < kSeeds; ++s) {
            worst = std::max(worst, loss_error(600 + s));
        }
        CHECK(worst < 1e-6);
    }
    SUBCASE("malformed one-hot rows are rejected") {
        const Matrix logits(2, 3);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, Matrix::from_rows({{1, 0, 0}, {1, 1, 0}})), Error);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, Matrix::from_rows({{1, 0, 0}, {0, 0, 0}})), Error);
    }
}

TEST_CASE("finite difference harness") {
    RandSource rng(20);
    SUBCASE("a linear function is checked to 1e-10") {
        Matrix theta = Matrix::from_rows({{0.3, -1.2, 2.0}});
        const Matrix slope = Matrix::from_rows({{2.5, -0.75, 4.0}});
        const auto loss = [&] { return weighted_sum(theta, slope); };
        const std::vector<TensorRef> params = {{"theta", 0, &theta}};
        const std::vector<Matrix> analytic = {slope};
        CHECK(finite_difference_check(loss, params, analytic, kStep, 0, rng).max_relative_error < 1e-10);
        CHECK(theta == Matrix::from_rows({{0.3, -1.2, 2.0}}));
    }
    SUBCASE("a corrupted bias gradient is caught") {
        DenseLayer layer = make_dense(4, 3, Activation::none);
        randomize(layer.weights, rng);
        randomize(layer.bias, rng);
        const Matrix x = random_matrix(5, 4, rng);
        const Matrix r = random_matrix(5, 3, rng);
        DenseCache cache;
        dense_forward(layer, x, &cache);
        DenseLayer grads = layer;
        dense_backward(layer, cache, r, grads);
        for (double& v : grads.bias.values()) {
            v *= 1.1;
        }
        const std::vector<TensorRef> params = {{"weights", 1, &layer.weights}, {"bias", 1, &layer.bias}};
        const std::vector<Matrix> analytic = {grads.weights, grads.bias};
        const auto res = finite_difference_check([&] { return weighted_sum(dense_forward(layer, x), r); }, params,
                                                 analytic, kStep, 0, rng);
        CHECK(res.max_relative_error > 1e-2);
        CHECK(res.worst_tensor == "bias");
    }
    SUBCASE("a non-finite loss is an error") {
        Matrix theta(1, 1, 1.0);
        const std::vector<TensorRef> params = {{"theta", 0, &theta}};
        const std::vector<Matrix> analytic = {Matrix(1, 1)};
        CHECK_THROWS_AS(finite_difference_check([] { return std::nan(""); }, params, analytic, kStep, 0, rng),
                        NumericError);
    }
}

}
