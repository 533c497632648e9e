#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "streamattn/rng.hpp"
#include "streamattn/rope.hpp"

using namespace streamattn;

namespace {

std::vector<double> random_vec(SplitMix64& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_CASE("thetas start at one and decrease strictly") {
    const RotaryParams p(16);
    REQUIRE(p.thetas().size() == 8);
    CHECK(p.thetas()[0] == 1.0);
    for (std::size_t i = 1; i < 8; ++i) {
        CHECK(p.thetas()[i] < p.thetas()[i - 1]);
        CHECK(p.thetas()[i] == doctest::Approx(std::pow(10000.0, -2.0 * static_cast<double>(i) / 16.0)));
    }
    CHECK_THROWS_AS(RotaryParams(3), ContractError);
    CHECK_THROWS_AS(RotaryParams(0), ContractError);
}

TEST_CASE("position ids reject negative and non-finite values") {
    CHECK_NOTHROW(PositionId(0.5));
    CHECK_THROWS_AS(PositionId(-1.0), ContractError);
    CHECK_THROWS_AS(PositionId(std::nan("")), ContractError);
}

TEST_CASE("rotation examples") {
    const RotaryParams p2(2);
    const std::vector<double> e0{1.0, 0.0}, e1{0.0, 1.0};
    const auto a = rotation_apply(p2, e0, PositionId(1.0));
    CHECK(a[0] == doctest::Approx(0.540302).epsilon(1e-6));
    CHECK(a[1] == doctest::Approx(0.841471).epsilon(1e-6));
    const auto b = rotation_apply(p2, e1, PositionId(1.0));
    CHECK(b[0] == doctest::Approx(-0.841471).epsilon(1e-6));
    CHECK(b[1] == doctest::Approx(0.540302).epsilon(1e-6));
    CHECK(relative_score(p2, e0, e0, PositionId(0.0), PositionId(1.0)) == doctest::Approx(std::cos(1.0)));

    const RotaryParams p4(4);
    const std::vector<double> v{0.3, -1.2, 2.5, 0.7};
    CHECK(rotation_apply(p4, v, PositionId(0.0)) == v);
    CHECK_THROWS_AS(rotation_apply(p4, e0, PositionId(1.0)), ContractError);
    CHECK_THROWS_AS(relative_score(p4, v, e0, PositionId(1.0), PositionId(1.0)), ContractError);
}

TEST_CASE("relative score equals the dot product of rotated vectors") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 2 * (1 + rng.below(32));
        const RotaryParams p(d);
        const auto q = random_vec(rng, d);
        const auto k = random_vec(rng, d);
        const PositionId n(rng.uniform() * 4096.0), m(rng.uniform() * 4096.0);
        const double direct = dot(rotation_apply(p, q, n), rotation_apply(p, k, m));
        CHECK(std::abs(direct - relative_score(p, q, k, n, m)) <= 1e-9);
    }
}

TEST_CASE("relative score is shift invariant and depends only on m - n") {
    SplitMix64 rng(7);
    const RotaryParams p(8);
    const auto q = random_vec(rng, 8);
    const auto k = random_vec(rng, 8);
    CHECK(relative_score(p, q, k, PositionId(2), PositionId(5)) ==
          doctest::Approx(relative_score(p, q, k, PositionId(0), PositionId(3))).epsilon(1e-12));
    CHECK(relative_score(p, q, k, PositionId(4), PositionId(4)) == doctest::Approx(dot(q, k)).epsilon(1e-12));
    for (int trial = 0; trial < 200; ++trial) {
        const double n = rng.uniform() * 100.0, m = rng.uniform() * 100.0;
        const double c = rng.uniform() * 300.0 - std::min(n, m);
        const double a = relative_score(p, q, k, PositionId(n), PositionId(m));
        const double b = relative_score(p, q, k, PositionId(n + c), PositionId(m + c));
        CHECK(std::abs(a - b) <= 1e-9);
    }
}

TEST_CASE("rotation preserves norms and composes additively") {
    SplitMix64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const RotaryParams p(16);
        const auto v = random_vec(rng, 16);
        const double a = rng.uniform() * 1000.0, b = rng.uniform() * 1000.0;
        const auto ra = rotation_apply(p, v, PositionId(a));
        CHECK(std::abs(std::sqrt(dot(ra, ra)) - std::sqrt(dot(v, v))) <= 1e-12);
        const auto rab = rotation_apply(p, ra, PositionId(b));
        const auto direct = rotation_apply(p, v, PositionId(a + b));
        for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(rab[i] - direct[i]) <= 1e-9);
    }
}

TEST_CASE("in-place rotation and its inverse round-trip in float lanes") {
    const RotaryParams p(8);
    const RotationTable t(p, 37.25);
    std::vector<float> v{1.f, 2.f, -3.f, 0.5f, 0.f, 1.f, 4.f, -2.f};
    const auto orig = v;
    rotate_inplace(t, std::span<float>(v));
    rotate_inverse_inplace(t, std::span<float>(v));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(orig[i]).epsilon(1e-6));
}

TEST_CASE("relative distance matrix under the group layout") {
    const auto m = relative_distance_matrix(3, 2, PositionId(3.0));
    REQUIRE(m.rows == 5);
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t i = 0; i < 3; ++i) CHECK(m(3 + j, i) == 3.0 + static_cast<double>(j) - static_cast<double>(i));
    }
    // Upper-triangle (future) entries are populated too.
    CHECK(m(0, 4) == 0.0 - 4.0);
    CHECK(relative_distance_matrix(2, 2, PositionId(0.0))(2, 0) == 0.0);
    CHECK(relative_distance_matrix(1, 1, PositionId(0.5))(1, 0) == 0.5);
    CHECK(relative_distance_matrix(0, 0, PositionId(0.0)).rows == 0);

    // phi = M reproduces the contiguous layout exactly.
    for (std::size_t src = 0; src <= 6; ++src) {
        for (std::size_t tgt = 0; tgt <= 6; ++tgt) {
            const auto g = relative_distance_matrix(src, tgt, PositionId(static_cast<double>(src)));
            for (std::size_t r = 0; r < src + tgt; ++r) {
                for (std::size_t c = 0; c < src + tgt; ++c) {
                    CHECK(g(r, c) == static_cast<double>(r) - static_cast<double>(c));
                }
            }
        }
    }
}
