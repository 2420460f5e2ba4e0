#include <cmath>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "x0t/backend.hpp"
#include "x0t/errors.hpp"
#include "x0t/matching.hpp"

using namespace x0t;

namespace {

MockBackendConfig small_cfg() {
    MockBackendConfig cfg;
    cfg.seed = 99;
    cfg.latent_height = 8;
    cfg.latent_width = 8;
    return cfg;
}

}  // namespace

TEST_SUITE("backend") {

TEST_CASE("mock determinism across instances") {
    auto a = make_mock_backend(small_cfg());
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(5);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding cond = a->embed_text("a cat");
    const TextEmbedding uncond = a->embed_text("");

    const Latent ea = a->predict_noise(x, 500, cond, uncond, 7.5f);
    const Latent eb = b->predict_noise(x, 500, cond, uncond, 7.5f);
    CHECK(ea.data == eb.data);

    CHECK(a->embed_text("hello").data == b->embed_text("hello").data);
    CHECK(a->extract_dift_features(x, 261, "up1").data ==
          b->extract_dift_features(x, 261, "up1").data);
}

TEST_CASE("cfg formula recomputed from raw calls") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(6);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding cond = b->embed_text("a dog");
    const TextEmbedding uncond = b->embed_text("");

    const Latent u = b->predict_noise_single(x, 300, uncond);
    const Latent c = b->predict_noise_single(x, 300, cond);
    const Latent guided = b->predict_noise(x, 300, cond, uncond, 7.5f);
    for (size_t i = 0; i < x.size(); ++i) {
        CHECK(guided.data[i] == u.data[i] + 7.5f * (c.data[i] - u.data[i]));
    }
    // Text-independent mock: guided equals the raw prediction at any scale.
    CHECK(guided.data == u.data);
}

TEST_CASE("cfg identity at scale 1 with cond == uncond") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(8);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding u = b->embed_text("");
    const Latent single = b->predict_noise_single(x, 100, u);
    const Latent guided = b->predict_noise(x, 100, u, u, 1.0f);
    CHECK(guided.data == single.data);
}

TEST_CASE("cfg is affine in the guidance scale") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(9);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding cond = b->embed_text("a bird");
    const TextEmbedding uncond = b->embed_text("");
    const Latent lo = b->predict_noise(x, 700, cond, uncond, 1.0f);
    const Latent hi = b->predict_noise(x, 700, cond, uncond, 9.0f);
    const Latent mid = b->predict_noise(x, 700, cond, uncond, 5.0f);
    for (size_t i = 0; i < x.size(); ++i) {
        CHECK(mid.data[i] == doctest::Approx(0.5f * (lo.data[i] + hi.data[i])).epsilon(1e-6));
    }
}

TEST_CASE("noise predictor is nonlinear and pointwise-local") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(10);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    Latent x2 = x;
    x2.at(1, 3, 3) += 0.5f;
    const TextEmbedding u = b->embed_text("");
    const Latent e1 = b->predict_noise_single(x, 500, u);
    const Latent e2 = b->predict_noise_single(x2, 500, u);
    bool changed_at_cell = false;
    for (int c = 0; c < 4; ++c) {
        changed_at_cell = changed_at_cell || e1.at(c, 3, 3) != e2.at(c, 3, 3);
        for (int y = 0; y < 8; ++y) {
            for (int xx = 0; xx < 8; ++xx) {
                if (y == 3 && xx == 3) {
                    continue;
                }
                CHECK(e1.at(c, y, xx) == e2.at(c, y, xx));
            }
        }
    }
    CHECK(changed_at_cell);

    // Different timestep bands use different filters.
    const Latent e_low = b->predict_noise_single(x, 50, u);
    const Latent e_high = b->predict_noise_single(x, 950, u);
    CHECK(max_abs_diff(e_low, e_high) > 0.0f);
}

TEST_CASE("codec is lossless") {
    auto b = make_mock_backend(small_cfg());
    const ImageRgb img = test::synth_image(8, 8, 3);
    const Latent enc = b->encode_image(img);
    const ImageRgb back = b->decode_latent(enc);
    CHECK(back.data == img.data);

    const ImageRgb zero(8, 8);
    CHECK(max_abs(b->encode_image(zero)) == 0.0f);

    CHECK_THROWS_AS(b->encode_image(ImageRgb(4, 4)), ShapeError);
    CHECK_THROWS_AS(b->decode_latent(Latent(4, 2, 2)), ShapeError);
}

TEST_CASE("embed_text determinism and kinds") {
    auto b = make_mock_backend(small_cfg());
    const TextEmbedding u = b->embed_text("");
    CHECK(u.kind == TextEmbedding::Kind::Unconditional);
    const TextEmbedding c = b->embed_text("a red fox");
    CHECK(c.kind == TextEmbedding::Kind::Conditional);
    CHECK(b->embed_text("a red fox").data == c.data);
    CHECK(b->embed_text("a red fox").data != b->embed_text("a blue fox").data);
    CHECK(c.tokens == 8);
    CHECK(c.dim == 16);
}

TEST_CASE("dift features: determinism, locality grid, identical inputs match") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(12);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const FeatureMap f1 = b->extract_dift_features(x, 261, "up1");
    const FeatureMap f2 = b->extract_dift_features(x, 261, "up1");
    CHECK(f1.data == f2.data);
    CHECK(f1.height == 8);
    CHECK(f1.width == 8);

    // Structurally identical latents: cosine 1 at corresponding locations.
    const std::vector<float> sim = cosine_similarity_field(f1, f2);
    for (int y = 0; y < 8; ++y) {
        for (int xx = 0; xx < 8; ++xx) {
            const size_t diag =
                ((static_cast<size_t>(y) * 8 + xx) * 8 + y) * 8 + xx;
            CHECK(sim[diag] == doctest::Approx(1.0f).epsilon(1e-6));
        }
    }

    CHECK_THROWS_AS(b->extract_dift_features(x, 261, "nope"), ConfigError);
}

TEST_CASE("cross attention: normalization, grid, errors") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(13);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding cond = b->embed_text("a cat sits");

    std::vector<int> all_tokens;
    for (int k = 0; k < 8; ++k) {
        all_tokens.push_back(k);
    }
    const AttentionCapture cap = b->capture_cross_attention(x, 500, cond, all_tokens);
    CHECK(cap.height == 8);
    CHECK(cap.width == 8);
    // Per head, per location the full-token weights sum to 1.
    for (int head = 0; head < 2; ++head) {
        std::vector<float> sums(64, 0.0f);
        int maps_seen = 0;
        for (const auto& m : cap.maps) {
            if (m.head != head) {
                continue;
            }
            ++maps_seen;
            for (int i = 0; i < 64; ++i) {
                sums[i] += m.weights[i];
            }
        }
        CHECK(maps_seen == 8);
        for (int i = 0; i < 64; ++i) {
            CHECK(sums[i] == doctest::Approx(1.0f).epsilon(1e-5));
        }
    }

    const AttentionCapture one = b->capture_cross_attention(x, 500, cond, {0});
    CHECK(one.maps.size() == 2);  // one per head
    CHECK(one.maps[0].weights.size() == 64);

    CHECK_THROWS_AS(b->capture_cross_attention(x, 500, cond, {42}), IndexError);
    CHECK_THROWS_AS(b->capture_cross_attention(x, 500, b->embed_text(""), {0}), ContractError);
}

TEST_CASE("tokenizer word lookup") {
    auto b = make_mock_backend(small_cfg());
    CHECK(b->token_indices_for_word("a cat on a mat", "cat") == std::vector<int>{1});
    CHECK(b->token_indices_for_word("cat cat", "cat") == std::vector<int>{0, 1});
    CHECK(b->token_indices_for_word("a dog", "cat").empty());
}

TEST_CASE("embedding gradient support") {
    auto b = make_mock_backend(small_cfg());
    CHECK(b->supports_embedding_gradient());
    std::mt19937_64 gen(14);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding u = b->embed_text("");
    const TextEmbedding g = b->predict_noise_vjp_uncond(x, 500, u, x);
    CHECK(g.tokens == u.tokens);
    CHECK(g.dim == u.dim);
    for (float v : g.data) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("mock is safe for concurrent read-only use") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(16);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding cond = b->embed_text("a cat");
    const TextEmbedding uncond = b->embed_text("");
    const Latent expected = b->predict_noise(x, 500, cond, uncond, 1.0f);

    std::vector<std::thread> workers;
    std::vector<int> ok(4, 0);
    for (int w = 0; w < 4; ++w) {
        workers.emplace_back([&, w] {
            for (int rep = 0; rep < 50; ++rep) {
                const Latent got = b->predict_noise(x, 500, cond, uncond, 1.0f);
                if (got.data != expected.data) {
                    return;
                }
            }
            ok[w] = 1;
        });
    }
    for (auto& t : workers) {
        t.join();
    }
    CHECK(ok == std::vector<int>(4, 1));
}

TEST_CASE("timestep range and backend factory") {
    auto b = make_mock_backend(small_cfg());
    std::mt19937_64 gen(15);
    const Latent x = test::random_latent(gen, 4, 8, 8);
    const TextEmbedding u = b->embed_text("");
    CHECK_THROWS_AS(b->predict_noise_single(x, 1000, u), BackendError);
    CHECK_THROWS_AS(b->predict_noise_single(x, -1, u), BackendError);

    BackendConfig cfg;
    cfg.kind = "diffusion";
    CHECK_THROWS_AS(make_backend(cfg), BackendError);
    cfg.kind = "bogus";
    CHECK_THROWS_AS(make_backend(cfg), ConfigError);
    cfg.kind = "mock";
    CHECK(make_backend(cfg) != nullptr);
}

}  // TEST_SUITE
