#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "x0t/errors.hpp"
#include "x0t/transfer.hpp"

using namespace x0t;

namespace {

ObjectMask random_mask(std::mt19937_64& gen, int h, int w) {
    ObjectMask m = ObjectMask::empty_mask(h, w);
    for (auto& v : m.data) {
        v = gen() % 2;
    }
    return m;
}

}  // namespace

TEST_SUITE("transfer") {

TEST_CASE("delta zero returns the source exactly") {
    std::mt19937_64 gen(51);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const ObjectMask m = random_mask(gen, 8, 8);
    const Latent out = transfer_x0(src, tar, m, 0.0f);
    CHECK(out.data == src.data);
}

TEST_CASE("all-zero mask returns the source exactly") {
    std::mt19937_64 gen(52);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const Latent out = transfer_x0(src, tar, ObjectMask::empty_mask(8, 8), 0.6f);
    CHECK(out.data == src.data);
}

TEST_CASE("full mask, delta 0.6, constant inputs") {
    const Latent src(4, 4, 4, 1.0f);
    const Latent tar(4, 4, 4, 0.0f);
    const Latent out = transfer_x0(src, tar, ObjectMask::full(4, 4), 0.6f);
    for (float v : out.data) {
        CHECK(v == doctest::Approx(0.4f).epsilon(1e-6));
    }
}

TEST_CASE("delta 1 replaces in-mask content with the aligned target") {
    std::mt19937_64 gen(53);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const ObjectMask m = random_mask(gen, 8, 8);
    const Latent out = transfer_x0(src, tar, m, 1.0f);
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                const float expected = m.at(y, x) ? tar.at(c, y, x) : src.at(c, y, x);
                CHECK(out.at(c, y, x) == expected);
            }
        }
    }
}

TEST_CASE("background is bit-identical outside the mask") {
    std::mt19937_64 gen(54);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const ObjectMask m = random_mask(gen, 8, 8);
    const Latent out = transfer_x0(src, tar, m, 0.6f);
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                if (!m.at(y, x)) {
                    CHECK(out.at(c, y, x) == src.at(c, y, x));
                }
            }
        }
    }
}

TEST_CASE("output is affine in delta") {
    std::mt19937_64 gen(55);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const ObjectMask m = random_mask(gen, 8, 8);
    const Latent lo = transfer_x0(src, tar, m, 0.2f);
    const Latent hi = transfer_x0(src, tar, m, 0.8f);
    const Latent mid = transfer_x0(src, tar, m, 0.5f);
    for (size_t i = 0; i < src.size(); ++i) {
        CHECK(mid.data[i] == doctest::Approx(0.5f * (lo.data[i] + hi.data[i])).epsilon(1e-5));
    }
}

TEST_CASE("transfer_delta: residual identity and support") {
    std::mt19937_64 gen(56);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const ObjectMask m = random_mask(gen, 8, 8);
    const Latent xp = transfer_x0(src, tar, m, 0.6f);
    const Latent td = transfer_delta(xp, src);

    // x'0 == x0: zero array.
    const Latent zero_delta = transfer_delta(src, src);
    CHECK(max_abs(zero_delta) == 0.0f);

    // Add-back on random pairs.
    const Latent back = add(src, td);
    CHECK(max_abs_diff(back, xp) < 1e-6f);

    // T == M * delta * (tar - src), checked numerically.
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                const float expected =
                    m.at(y, x) ? 0.6f * (tar.at(c, y, x) - src.at(c, y, x)) : 0.0f;
                CHECK(td.at(c, y, x) == doctest::Approx(expected).epsilon(1e-5));
            }
        }
    }

    // Support of T is contained in the mask support.
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                if (!m.at(y, x)) {
                    CHECK(td.at(c, y, x) == 0.0f);
                }
            }
        }
    }
}

TEST_CASE("params validation and errors") {
    std::mt19937_64 gen(57);
    const Latent src = test::random_latent(gen, 4, 8, 8);
    const Latent tar = test::random_latent(gen, 4, 8, 8);
    const ObjectMask m = random_mask(gen, 8, 8);

    CHECK_THROWS_AS(transfer_x0(src, tar, m, 1.5f), DomainError);
    CHECK_THROWS_AS(transfer_x0(src, tar, m, -0.1f), DomainError);
    CHECK_THROWS_AS(transfer_x0(src, Latent(4, 4, 4), m, 0.5f), ShapeError);
    CHECK_THROWS_AS(transfer_x0(src, tar, ObjectMask::full(4, 4), 0.5f), ShapeError);
    CHECK_THROWS_AS(transfer_delta(src, Latent(4, 4, 4)), ShapeError);

    TransferParams p;
    p.validate(50);
    p.delta = 2.0f;
    CHECK_THROWS_AS(p.validate(50), DomainError);
    p.delta = 0.6f;
    p.start_step = 21;
    p.end_step = 12;
    CHECK_THROWS_AS(p.validate(50), ConfigError);
    p.start_step = 12;
    p.end_step = 60;
    CHECK_THROWS_AS(p.validate(50), ConfigError);
}

}  // TEST_SUITE
