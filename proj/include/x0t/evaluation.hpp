#pragma once

#include <memory>
#include <string>
#include <vector>

#include "x0t/image.hpp"

namespace x0t {

// Joint text/image embedding provider (CLIP-style). Real models plug in
// behind this interface; the mock is deterministic for desk-scale tests.
class ClipEmbedder {
public:
    virtual ~ClipEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<float> embed_image(const ImageRgb& image) = 0;
    virtual std::vector<float> embed_text(const std::string& text) = 0;
};

std::unique_ptr<ClipEmbedder> make_mock_clip_embedder(uint64_t seed = 7, int dim = 32);

float cosine(const std::vector<float>& a, const std::vector<float>& b);

// Cosine similarity of normalized embeddings, in [-1, 1].
float clip_t2i(const ImageRgb& image, const std::string& prompt, ClipEmbedder& embedder);
float clip_i2i(const ImageRgb& image_a, const ImageRgb& image_b, ClipEmbedder& embedder);

struct EvalPair {
    std::string output_image;
    std::string source_prompt;
    std::string source_image;
};

struct EvalEntry {
    EvalPair pair;
    bool ok = false;
    std::string error;
    float clip_t2i = 0.0f;
    float clip_i2i = 0.0f;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    int scored_count = 0;
    float mean_clip_t2i = 0.0f;
    float mean_clip_i2i = 0.0f;

    std::string to_json() const;
    std::string to_csv() const;
};

// Pairs manifest: JSON array of {output_image, source_prompt, source_image}.
std::vector<EvalPair> load_pairs_manifest(const std::string& path);

// Scores every pair; missing files are listed in the report and excluded
// from the aggregates with a warning. An empty pair list is a ConfigError.
EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs, ClipEmbedder& embedder);

}  // namespace x0t
