#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "x0t/image.hpp"
#include "x0t/latent.hpp"

namespace x0t {

// Text conditioning as a token-count x embedding-dim array.
struct TextEmbedding {
    enum class Kind { Conditional, Unconditional };

    int tokens = 0;
    int dim = 0;
    Kind kind = Kind::Conditional;
    std::vector<float> data;

    TextEmbedding() = default;
    TextEmbedding(int t, int d, Kind k)
        : tokens(t), dim(d), kind(k), data(static_cast<size_t>(t) * d, 0.0f) {}

    size_t size() const { return data.size(); }
};

// Intermediate diffusion-network features over the latent spatial grid.
struct FeatureMap {
    int dim = 0;
    int height = 0;
    int width = 0;
    int source_timestep = -1;
    std::string source_layer;
    std::vector<float> data;  // dim x h x w, row-major

    FeatureMap() = default;
    FeatureMap(int d, int h, int w)
        : dim(d), height(h), width(w), data(static_cast<size_t>(d) * h * w, 0.0f) {}

    float& at(int d, int y, int x) {
        return data[(static_cast<size_t>(d) * height + y) * width + x];
    }
    float at(int d, int y, int x) const {
        return data[(static_cast<size_t>(d) * height + y) * width + x];
    }
};

// Cross-attention weight maps for selected prompt tokens. Per location the
// full-token weights sum to 1 before selection.
struct AttentionCapture {
    struct Map {
        std::string layer;
        int head = 0;
        int token_index = 0;
        std::vector<float> weights;  // h x w, row-major
    };

    int height = 0;
    int width = 0;
    std::vector<Map> maps;
};

struct BackendInfo {
    std::string name;
    int latent_channels = 4;
    int latent_height = 16;
    int latent_width = 16;
    int image_height = 16;
    int image_width = 16;
    int token_count = 8;
    int embed_dim = 16;
    int feature_dim = 12;
    int train_steps = 1000;
    float default_guidance_scale = 1.0f;
    std::vector<std::string> dift_layers = {"up1"};
    int default_dift_timestep = 261;
};

// Abstract latent diffusion model: noise prediction, text embedding, the
// image<->latent codec, feature extraction and cross-attention capture.
// Handles are not required to be shareable across threads; the pipeline
// serializes all calls on one handle.
class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendInfo& info() const = 0;

    // Single-context noise prediction (one U-Net pass worth).
    virtual Latent predict_noise_single(const Latent& x, int t, const TextEmbedding& e) = 0;

    // Classifier-free guided prediction: uncond + scale * (cond - uncond).
    virtual Latent predict_noise(const Latent& x, int t, const TextEmbedding& cond,
                                 const TextEmbedding& uncond, float guidance_scale);

    virtual Latent encode_image(const ImageRgb& image) = 0;
    virtual ImageRgb decode_latent(const Latent& x0) = 0;

    // Deterministic per prompt; "" yields the unconditional embedding.
    virtual TextEmbedding embed_text(const std::string& prompt) = 0;

    // Semantic features of an x0-space latent at timestep t from `layer`.
    virtual FeatureMap extract_dift_features(const Latent& x0, int t,
                                             const std::string& layer) = 0;

    // Cross-attention maps of a conditioned pass at (x, t) for the requested
    // token indices.
    virtual AttentionCapture capture_cross_attention(const Latent& x, int t,
                                                     const TextEmbedding& cond,
                                                     const std::vector<int>& token_indices) = 0;

    // Token positions of `word` within `prompt` under this backend's
    // tokenizer; empty when the word does not occur.
    virtual std::vector<int> token_indices_for_word(const std::string& prompt,
                                                    const std::string& word) = 0;

    // Gradient support for null-text optimization: returns d<eps_single, cot>
    // / d(uncond.data). Backends without autograd return false from
    // supports_embedding_gradient and must not be asked.
    virtual bool supports_embedding_gradient() const = 0;
    virtual TextEmbedding predict_noise_vjp_uncond(const Latent& x, int t,
                                                   const TextEmbedding& uncond,
                                                   const Latent& cotangent) = 0;
};

struct MockBackendConfig {
    uint64_t seed = 0x9e3779b97f4a7c15ull;
    int latent_channels = 4;
    int latent_height = 16;
    int latent_width = 16;
    int token_count = 8;
    int embed_dim = 16;
    int feature_dim = 12;
    int train_steps = 1000;
    int timestep_bands = 10;
    int attention_heads = 2;
    float filter_scale = 0.25f;
    float default_guidance_scale = 1.0f;
    int default_dift_timestep = 261;
};

// Deterministic mock: eps(x, t) = tanh(W_band(t) . x) with a seed-derived
// per-band channel-mixing filter; text-independent predictions, a lossless
// image<->latent codec, patch-projection features and fixed attention bumps.
// Safe for concurrent read-only use.
std::unique_ptr<Backend> make_mock_backend(const MockBackendConfig& config = {});

struct BackendConfig {
    std::string kind = "mock";  // "mock" | "diffusion"
    MockBackendConfig mock;
    // Real-model settings, honored only by kind == "diffusion".
    std::string model_id;
    std::string device = "cpu";
    float guidance_scale = 1.0f;
    std::string dift_layer = "up1";
    int dift_timestep = 261;
};

// Factory for the configured backend kind. "diffusion" requires an external
// model runtime and reports BackendError when none is bundled.
std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace x0t
