#include "x0t/evaluation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "x0t/errors.hpp"
#include "x0t/log.hpp"

namespace x0t {

using nlohmann::json;

namespace {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Deterministic stand-in for a joint embedding model: images embed through a
// fixed random projection of an 8x8 area-downsampled grid, texts through a
// hash-seeded vector. Shared seed keeps text/image spaces loosely aligned.
class MockClipEmbedder final : public ClipEmbedder {
public:
    MockClipEmbedder(uint64_t seed, int dim) : seed_(seed), dim_(dim) {
        std::mt19937_64 gen(seed_ ^ 0xc11bull);
        std::normal_distribution<float> n(0.0f, 1.0f / std::sqrt(192.0f));
        proj_.resize(static_cast<size_t>(dim_) * 192);
        for (float& v : proj_) {
            v = n(gen);
        }
    }

    int dim() const override { return dim_; }

    std::vector<float> embed_image(const ImageRgb& image) override {
        if (image.height <= 0 || image.width <= 0) {
            throw ShapeError("embed_image: empty image");
        }
        // Area-average onto a fixed 8x8x3 grid, then project.
        std::vector<float> grid(192, 0.0f);
        std::vector<int> counts(64, 0);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                const int gy = y * 8 / image.height;
                const int gx = x * 8 / image.width;
                counts[gy * 8 + gx]++;
                for (int c = 0; c < 3; ++c) {
                    grid[(static_cast<size_t>(gy) * 8 + gx) * 3 + c] += image.at(y, x, c);
                }
            }
        }
        for (int cell = 0; cell < 64; ++cell) {
            if (counts[cell]) {
                for (int c = 0; c < 3; ++c) {
                    grid[static_cast<size_t>(cell) * 3 + c] /= counts[cell];
                }
            }
        }
        std::vector<float> out(dim_);
        for (int d = 0; d < dim_; ++d) {
            float acc = 0.0f;
            for (int k = 0; k < 192; ++k) {
                acc += proj_[static_cast<size_t>(d) * 192 + k] * grid[k];
            }
            out[d] = acc;
        }
        return out;
    }

    std::vector<float> embed_text(const std::string& text) override {
        std::mt19937_64 gen(seed_ ^ fnv1a64(text));
        std::normal_distribution<float> n(0.0f, 1.0f);
        std::vector<float> out(dim_);
        for (float& v : out) {
            v = n(gen);
        }
        return out;
    }

private:
    uint64_t seed_;
    int dim_;
    std::vector<float> proj_;
};

}  // namespace

std::unique_ptr<ClipEmbedder> make_mock_clip_embedder(uint64_t seed, int dim) {
    return std::make_unique<MockClipEmbedder>(seed, dim);
}

float cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("cosine: embedding sizes differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0f;
    }
    return static_cast<float>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

float clip_t2i(const ImageRgb& image, const std::string& prompt, ClipEmbedder& embedder) {
    return cosine(embedder.embed_image(image), embedder.embed_text(prompt));
}

float clip_i2i(const ImageRgb& image_a, const ImageRgb& image_b, ClipEmbedder& embedder) {
    return cosine(embedder.embed_image(image_a), embedder.embed_image(image_b));
}

std::vector<EvalPair> load_pairs_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open pairs manifest: " + path);
    }
    std::vector<EvalPair> pairs;
    try {
        const json j = json::parse(in);
        for (const json& e : j) {
            EvalPair p;
            p.output_image = e.at("output_image").get<std::string>();
            p.source_prompt = e.at("source_prompt").get<std::string>();
            p.source_image = e.at("source_image").get<std::string>();
            pairs.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw ConfigError("bad pairs manifest " + path + ": " + e.what());
    }
    return pairs;
}

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs, ClipEmbedder& embedder) {
    if (pairs.empty()) {
        throw ConfigError("pairs manifest is empty; nothing to evaluate");
    }
    EvalReport report;
    double sum_t2i = 0.0, sum_i2i = 0.0;
    for (const EvalPair& p : pairs) {
        EvalEntry entry;
        entry.pair = p;
        try {
            const ImageRgb out_img = load_png(p.output_image);
            const ImageRgb src_img = load_png(p.source_image);
            entry.clip_t2i = clip_t2i(out_img, p.source_prompt, embedder);
            entry.clip_i2i = clip_i2i(src_img, out_img, embedder);
            entry.ok = true;
            sum_t2i += entry.clip_t2i;
            sum_i2i += entry.clip_i2i;
            ++report.scored_count;
        } catch (const std::exception& e) {
            entry.error = e.what();
            log_warn("evaluation pair skipped: " + std::string(e.what()));
        }
        report.entries.push_back(std::move(entry));
    }
    if (report.scored_count > 0) {
        report.mean_clip_t2i = static_cast<float>(sum_t2i / report.scored_count);
        report.mean_clip_i2i = static_cast<float>(sum_i2i / report.scored_count);
    }
    return report;
}

std::string EvalReport::to_json() const {
    json j;
    j["pair_count"] = entries.size();
    j["scored_count"] = scored_count;
    j["mean_clip_t2i"] = mean_clip_t2i;
    j["mean_clip_i2i"] = mean_clip_i2i;
    j["pairs"] = json::array();
    for (const EvalEntry& e : entries) {
        json pe = {
            {"output_image", e.pair.output_image},
            {"source_prompt", e.pair.source_prompt},
            {"source_image", e.pair.source_image},
            {"ok", e.ok},
        };
        if (e.ok) {
            pe["clip_t2i"] = e.clip_t2i;
            pe["clip_i2i"] = e.clip_i2i;
        } else {
            pe["error"] = e.error;
        }
        j["pairs"].push_back(std::move(pe));
    }
    return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "output_image,source_image,ok,clip_t2i,clip_i2i\n";
    for (const EvalEntry& e : entries) {
        os << e.pair.output_image << "," << e.pair.source_image << "," << (e.ok ? 1 : 0) << ",";
        if (e.ok) {
            os << e.clip_t2i << "," << e.clip_i2i;
        } else {
            os << ",";
        }
        os << "\n";
    }
    os << "mean,," << scored_count << "," << mean_clip_t2i << "," << mean_clip_i2i << "\n";
    return os.str();
}

}  // namespace x0t
