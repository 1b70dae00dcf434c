#include "support.hpp"

#include "tslt/error.hpp"
#include "tslt/matrix.hpp"
#include "tslt/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

using namespace tslt;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += a(i, k) * b(k, j);
            }
            c(i, j) = s;
        }
    }
    return c;
}

// Reference SplitMix64 / xoshiro256** written out independently of the library.
struct ReferenceXoshiro {
    std::uint64_t s[4];
    explicit ReferenceXoshiro(std::uint64_t seed) {
        for (auto& word : s) {
            seed += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = seed;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            word = z ^ (z >> 31);
        }
    }
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t next() {
        const std::uint64_t out = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return out;
    }
};

}  // namespace

TEST_SUITE("numcore") {

TEST_CASE("matmul by the identity returns the left operand") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(a, Matrix::identity(2)) == a);
}

TEST_CASE("matmul of a 2x2 pair agrees with a triple loop") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
    const Matrix c = matmul(a, b);
    CHECK(c == naive_matmul(a, b));
    CHECK(c == Matrix::from_rows({{19, 22}, {43, 50}}));
}

TEST_CASE("matmul rejects incompatible shapes and names both") {
    const Matrix a(2, 3);
    const Matrix b(2, 2);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("2x2") != std::string::npos);
    }
}

TEST_CASE("matmul variants match explicit transposes on random input") {
    RandSource rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = 1 + rng.uniform_index(6);
        const auto k = 1 + rng.uniform_index(6);
        const auto m = 1 + rng.uniform_index(6);
        const Matrix a = testing::random_matrix(n, k, rng);
        const Matrix b = testing::random_matrix(k, m, rng);
        const Matrix bt = transpose(b);
        CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
        CHECK(max_abs_diff(matmul_nt(a, bt), naive_matmul(a, b)) < 1e-12);
        CHECK(max_abs_diff(matmul_tn(transpose(a), b), naive_matmul(a, b)) < 1e-12);
    }
}

TEST_CASE("matmul is associative within 1e-9 relative error") {
    RandSource rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix a = testing::random_matrix(4, 5, rng);
        const Matrix b = testing::random_matrix(5, 3, rng);
        const Matrix c = testing::random_matrix(3, 6, rng);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double scale = std::max(1.0, std::abs(left.values()[i]));
            CHECK(std::abs(left.values()[i] - right.values()[i]) / scale < 1e-9);
        }
    }
}

TEST_CASE("softmax of a zero row is uniform") {
    const Matrix p = rowwise_softmax(Matrix::from_rows({{0, 0, 0}}));
    for (double v : p.values()) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
}

TEST_CASE("softmax is invariant to a per-row shift") {
    RandSource rng(5);
    const Matrix x = testing::random_matrix(4, 7, rng, 3.0);
    Matrix shifted = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double c = rng.uniform(-50, 50);
        for (double& v : shifted.row(r)) {
            v += c;
        }
    }
    CHECK(max_abs_diff(rowwise_softmax(x), rowwise_softmax(shifted)) < 1e-12);
}

TEST_CASE("softmax of log 1, log 2, log 3 gives 1/6, 2/6, 3/6") {
    const Matrix p = rowwise_softmax(Matrix::from_rows({{std::log(1.0), std::log(2.0), std::log(3.0)}}));
    // direct evaluation: exp(log k) / (1 + 2 + 3)
    CHECK(p(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(p(0, 2) == doctest::Approx(3.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one for entries in [-700, 700]") {
    RandSource rng(17);
    Matrix x(200, 12);
    for (double& v : x.values()) {
        v = rng.uniform(-700, 700);
    }
    const Matrix p = rowwise_softmax(x);
    CHECK(all_finite(p));
    for (std::size_t r = 0; r < p.rows(); ++r) {
        const auto row = p.row(r);
        const double s = std::accumulate(row.begin(), row.end(), 0.0);
        CHECK(std::abs(s - 1.0) < 1e-9);
        CHECK(std::all_of(row.begin(), row.end(), [](double v) { return v >= 0.0; }));
    }
}

TEST_CASE("mean over rows") {
    SUBCASE("identical rows give that row") {
        const Matrix m = Matrix::from_rows({{1.5, -2, 3}, {1.5, -2, 3}, {1.5, -2, 3}});
        CHECK(mean_over_rows(m) == Matrix::from_rows({{1.5, -2, 3}}));
    }
    SUBCASE("two mirrored rows") {
        CHECK(mean_over_rows(Matrix::from_rows({{1, 3}, {3, 1}})) == Matrix::from_rows({{2, 2}}));
    }
    SUBCASE("random 16x8 against an explicit sum") {
        RandSource rng(23);
        const Matrix m = testing::random_matrix(16, 8, rng);
        const Matrix mean = mean_over_rows(m);
        for (std::size_t c = 0; c < 8; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < 16; ++r) {
                s += m(r, c);
            }
            CHECK(mean(0, c) == doctest::Approx(s / 16.0).epsilon(1e-14));
        }
    }
    SUBCASE("zero rows is an error") {
        CHECK_THROWS_AS(mean_over_rows(Matrix(0, 3)), EmptyInputError);
    }
}

TEST_CASE("reshape relabels the buffer without copying order") {
    Matrix m(2, 6);
    std::iota(m.values().begin(), m.values().end(), 0.0);
    const Matrix r = m.reshaped(3, 4);
    CHECK(r.rows() == 3);
    CHECK(r(1, 0) == 4.0);
    CHECK(r.reshaped(2, 6) == m);
    CHECK_THROWS_AS(m.reshaped(5, 2), ShapeError);
}

TEST_CASE("SplitMix64 seeding matches the published first output") {
    // SplitMix64 from state 0 yields 0xE220A8397B1DCDAF first
    ReferenceXoshiro ref(0);
    CHECK(ref.s[0] == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("RandSource follows the reference xoshiro256** stream") {
    for (std::uint64_t seed : {0ULL, 1ULL, 7ULL, 0xDEADBEEFULL, ~0ULL}) {
        RandSource rng(seed);
        ReferenceXoshiro ref(seed);
        for (int i = 0; i < 1000; ++i) {
            REQUIRE(rng.next_u64() == ref.next());
        }
    }
}

TEST_CASE("RandSource with equal seeds agrees on the first 10^4 draws") {
    RandSource a(42);
    RandSource b(42);
    RandSource c(43);
    bool differs = false;
    for (int i = 0; i < 10000; ++i) {
        const double x = a.uniform();
        REQUIRE(x == b.uniform());
        differs = differs || x != c.uniform();
    }
    CHECK(differs);
}

TEST_CASE("uniform draws stay in [0, 1) and normals have unit moments") {
    RandSource rng(9);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("uniform_index covers its range evenly") {
    RandSource rng(13);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto k = rng.uniform_index(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (int c : counts) {
        CHECK(std::abs(c - 10000) < 500);
    }
}

TEST_CASE("shuffle produces a permutation and depends on the seed") {
    std::vector<int> a(100);
    std::iota(a.begin(), a.end(), 0);
    std::vector<int> b = a;
    RandSource ra(1);
    RandSource rb(2);
    ra.shuffle(std::span<int>(a));
    rb.shuffle(std::span<int>(b));
    CHECK(std::set<int>(a.begin(), a.end()).size() == 100);
    CHECK(a != b);
    std::sort(a.begin(), a.end());
    CHECK(a.front() == 0);
    CHECK(a.back() == 99);
}

TEST_CASE("derived seeds differ per stream") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 100; ++s) {
        seen.insert(derive_seed(7, s));
    }
    CHECK(seen.size() == 100);
    CHECK(derive_seed(7, 1) == derive_seed(7, 1));
    CHECK(derive_seed(7, 1) != derive_seed(8, 1));
}

}
