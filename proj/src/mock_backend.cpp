#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>

#include "x0t/backend.hpp"
#include "x0t/errors.hpp"

namespace x0t {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::vector<float> seeded_normals(uint64_t seed, size_t count, float stddev) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<float> n(0.0f, stddev);
    std::vector<float> out(count);
    for (float& v : out) {
        v = n(gen);
    }
    return out;
}

std::vector<float> seeded_uniforms(uint64_t seed, size_t count, float lo, float hi) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    std::vector<float> out(count);
    for (float& v : out) {
        v = u(gen);
    }
    return out;
}

class MockBackend final : public Backend {
public:
    explicit MockBackend(const MockBackendConfig& config) : cfg_(config) {
        info_.name = "mock";
        info_.latent_channels = cfg_.latent_channels;
        info_.latent_height = cfg_.latent_height;
        info_.latent_width = cfg_.latent_width;
        info_.image_height = cfg_.latent_height;
        info_.image_width = cfg_.latent_width;
        info_.token_count = cfg_.token_count;
        info_.embed_dim = cfg_.embed_dim;
        info_.feature_dim = cfg_.feature_dim;
        info_.train_steps = cfg_.train_steps;
        info_.default_guidance_scale = cfg_.default_guidance_scale;
        info_.default_dift_timestep = cfg_.default_dift_timestep;

        // Per-band channel-mixing filters for the noise predictor.
        const int c = cfg_.latent_channels;
        filters_.resize(cfg_.timestep_bands);
        for (int b = 0; b < cfg_.timestep_bands; ++b) {
            filters_[b] = seeded_uniforms(splitmix64(cfg_.seed ^ (0x6e6f697365ull + b)),
                                          static_cast<size_t>(c) * c, -cfg_.filter_scale,
                                          cfg_.filter_scale);
        }
    }

    const BackendInfo& info() const override { return info_; }

    Latent predict_noise_single(const Latent& x, int t, const TextEmbedding&) override {
        check_latent_shape(x, "predict_noise");
        check_timestep(t);
        const std::vector<float>& w = filters_[band_of(t)];
        const int c = cfg_.latent_channels;
        Latent out(x.channels, x.height, x.width);
        out.step = t;
        for (int y = 0; y < x.height; ++y) {
            for (int xx = 0; xx < x.width; ++xx) {
                for (int co = 0; co < c; ++co) {
                    float acc = 0.0f;
                    for (int ci = 0; ci < c; ++ci) {
                        acc += w[static_cast<size_t>(co) * c + ci] * x.at(ci, y, xx);
                    }
                    out.at(co, y, xx) = std::tanh(acc);
                }
            }
        }
        return out;
    }

    Latent encode_image(const ImageRgb& image) override {
        if (image.height != cfg_.latent_height || image.width != cfg_.latent_width) {
            throw ShapeError("mock encode_image: expected " +
                             std::to_string(cfg_.latent_height) + "x" +
                             std::to_string(cfg_.latent_width) + " RGB, got " +
                             std::to_string(image.height) + "x" + std::to_string(image.width));
        }
        // Lossless codec: channels 0..2 carry RGB, channel 3 is zero.
        Latent out(cfg_.latent_channels, cfg_.latent_height, cfg_.latent_width);
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    out.at(c, y, x) = image.at(y, x, c);
                }
            }
        }
        return out;
    }

    ImageRgb decode_latent(const Latent& x0) override {
        check_latent_shape(x0, "decode_latent");
        ImageRgb out(x0.height, x0.width);
        for (int y = 0; y < x0.height; ++y) {
            for (int x = 0; x < x0.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    out.at(y, x, c) = x0.at(c, y, x);
                }
            }
        }
        return out;
    }

    TextEmbedding embed_text(const std::string& prompt) override {
        TextEmbedding e(cfg_.token_count, cfg_.embed_dim,
                        prompt.empty() ? TextEmbedding::Kind::Unconditional
                                       : TextEmbedding::Kind::Conditional);
        e.data = seeded_normals(splitmix64(cfg_.seed ^ fnv1a64(prompt)), e.size(), 1.0f);
        return e;
    }

    FeatureMap extract_dift_features(const Latent& x0, int t, const std::string& layer) override {
        check_latent_shape(x0, "extract_dift_features");
        check_timestep(t);
        bool known = false;
        for (const auto& l : info_.dift_layers) {
            known = known || l == layer;
        }
        if (!known) {
            throw ConfigError("unknown DIFT layer: " + layer);
        }

        const int c = cfg_.latent_channels;
        const int patch = c * 9;
        const uint64_t key =
            splitmix64(cfg_.seed ^ fnv1a64(layer) ^ (0xd1f7ull * (band_of(t) + 1)));
        const std::vector<float> proj = seeded_normals(
            key, static_cast<size_t>(cfg_.feature_dim) * patch, 1.0f / std::sqrt(9.0f * c));

        FeatureMap f(cfg_.feature_dim, x0.height, x0.width);
        f.source_timestep = t;
        f.source_layer = layer;
        std::vector<float> p(patch);
        for (int y = 0; y < x0.height; ++y) {
            for (int x = 0; x < x0.width; ++x) {
                int k = 0;
                for (int ci = 0; ci < c; ++ci) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int yy = std::clamp(y + dy, 0, x0.height - 1);
                            const int xx = std::clamp(x + dx, 0, x0.width - 1);
                            p[k++] = x0.at(ci, yy, xx);
                        }
                    }
                }
                for (int d = 0; d < cfg_.feature_dim; ++d) {
                    float acc = 0.0f;
                    for (int j = 0; j < patch; ++j) {
                        acc += proj[static_cast<size_t>(d) * patch + j] * p[j];
                    }
                    f.at(d, y, x) = acc;
                }
            }
        }
        return f;
    }

    AttentionCapture capture_cross_attention(const Latent& x, int t, const TextEmbedding& cond,
                                             const std::vector<int>& token_indices) override {
        check_latent_shape(x, "capture_cross_attention");
        check_timestep(t);
        if (cond.kind != TextEmbedding::Kind::Conditional) {
            throw ContractError("capture_cross_attention requires a conditional embedding");
        }
        for (int k : token_indices) {
            if (k < 0 || k >= cfg_.token_count) {
                throw IndexError("token index out of range: " + std::to_string(k));
            }
        }

        const int h = cfg_.latent_height;
        const int w = cfg_.latent_width;
        AttentionCapture cap;
        cap.height = h;
        cap.width = w;
        for (int head = 0; head < cfg_.attention_heads; ++head) {
            const float sigma = (head + 2) * h / 12.0f;
            // Raw bump per token, normalized per location across all tokens.
            std::vector<std::vector<float>> raw(cfg_.token_count);
            for (int k = 0; k < cfg_.token_count; ++k) {
                raw[k] = token_bump(k, h, w, sigma);
            }
            for (int i = 0; i < h * w; ++i) {
                float total = 0.0f;
                for (int k = 0; k < cfg_.token_count; ++k) {
                    total += raw[k][i];
                }
                for (int k = 0; k < cfg_.token_count; ++k) {
                    raw[k][i] /= total;
                }
            }
            for (int k : token_indices) {
                AttentionCapture::Map m;
                m.layer = "attn16";
                m.head = head;
                m.token_index = k;
                m.weights = raw[k];
                cap.maps.push_back(std::move(m));
            }
        }
        return cap;
    }

    std::vector<int> token_indices_for_word(const std::string& prompt,
                                            const std::string& word) override {
        std::istringstream is(prompt);
        std::string tok;
        std::vector<int> out;
        for (int i = 0; is >> tok && i < cfg_.token_count; ++i) {
            if (tok == word) {
                out.push_back(i);
            }
        }
        return out;
    }

    bool supports_embedding_gradient() const override { return true; }

    TextEmbedding predict_noise_vjp_uncond(const Latent& x, int, const TextEmbedding& uncond,
                                           const Latent& cotangent) override {
        check_latent_shape(x, "predict_noise_vjp_uncond");
        require_same_shape(x, cotangent, "predict_noise_vjp_uncond");
        // The mock prediction does not depend on the embedding, so the exact
        // gradient is identically zero.
        return TextEmbedding(uncond.tokens, uncond.dim, uncond.kind);
    }

private:
    void check_latent_shape(const Latent& x, const char* who) const {
        if (x.channels != cfg_.latent_channels || x.height != cfg_.latent_height ||
            x.width != cfg_.latent_width) {
            throw ShapeError(std::string(who) + ": latent shape " + x.shape_str() +
                             " does not match backend grid");
        }
    }

    void check_timestep(int t) const {
        if (t < 0 || t >= cfg_.train_steps) {
            throw BackendError("timestep " + std::to_string(t) + " outside training range [0, " +
                               std::to_string(cfg_.train_steps) + ")");
        }
    }

    int band_of(int t) const {
        const int b = t * cfg_.timestep_bands / cfg_.train_steps;
        return std::clamp(b, 0, cfg_.timestep_bands - 1);
    }

    // Smooth bump for token k; token 0 sits at the grid center, the rest on
    // deterministic rings around it.
    std::vector<float> token_bump(int k, int h, int w, float sigma) const {
        const float cy = h / 2.0f + (k == 0 ? 0.0f : (h / 4.0f) * std::sin(2.39996f * k));
        const float cx = w / 2.0f + (k == 0 ? 0.0f : (w / 4.0f) * std::cos(2.39996f * k));
        std::vector<float> out(static_cast<size_t>(h) * w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const float dy = y - cy;
                const float dx = x - cx;
                out[static_cast<size_t>(y) * w + x] =
                    std::exp(-(dy * dy + dx * dx) / (2.0f * sigma * sigma)) + 1e-6f;
            }
        }
        return out;
    }

    MockBackendConfig cfg_;
    BackendInfo info_;
    std::vector<std::vector<float>> filters_;
};

}  // namespace

std::unique_ptr<Backend> make_mock_backend(const MockBackendConfig& config) {
    return std::make_unique<MockBackend>(config);
}

}  // namespace x0t
