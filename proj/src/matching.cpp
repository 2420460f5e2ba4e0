#include "x0t/matching.hpp"

#include <cmath>

#include "x0t/errors.hpp"

namespace x0t {

std::string to_string(MatchingMode mode) {
    return mode == MatchingMode::Progressive ? "progressive" : "initial";
}

MatchingMode matching_mode_from_string(const std::string& s) {
    if (s == "progressive") {
        return MatchingMode::Progressive;
    }
    if (s == "initial") {
        return MatchingMode::Initial;
    }
    throw ConfigError("unknown matching mode: " + s);
}

namespace {

void require_same_feature_dim(const FeatureMap& a, const FeatureMap& b) {
    if (a.dim != b.dim) {
        throw ShapeError("feature dim mismatch: " + std::to_string(a.dim) + " vs " +
                         std::to_string(b.dim));
    }
}

std::vector<float> location_norms(const FeatureMap& f) {
    std::vector<float> norms(static_cast<size_t>(f.height) * f.width, 0.0f);
    for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
            float acc = 0.0f;
            for (int d = 0; d < f.dim; ++d) {
                const float v = f.at(d, y, x);
                acc += v * v;
            }
            norms[static_cast<size_t>(y) * f.width + x] = std::sqrt(acc);
        }
    }
    return norms;
}

float pair_cosine(const FeatureMap& a, int ya, int xa, const FeatureMap& b, int yb, int xb,
                  float na, float nb) {
    if (na == 0.0f || nb == 0.0f) {
        return 0.0f;
    }
    float dot = 0.0f;
    for (int d = 0; d < a.dim; ++d) {
        dot += a.at(d, ya, xa) * b.at(d, yb, xb);
    }
    return dot / (na * nb);
}

}  // namespace

std::vector<float> cosine_similarity_field(const FeatureMap& f_src, const FeatureMap& f_tar) {
    require_same_feature_dim(f_src, f_tar);
    const std::vector<float> ns = location_norms(f_src);
    const std::vector<float> nt = location_norms(f_tar);

    std::vector<float> sim(static_cast<size_t>(f_src.height) * f_src.width * f_tar.height *
                           f_tar.width);
    size_t idx = 0;
    for (int ys = 0; ys < f_src.height; ++ys) {
        for (int xs = 0; xs < f_src.width; ++xs) {
            const float na = ns[static_cast<size_t>(ys) * f_src.width + xs];
            for (int yt = 0; yt < f_tar.height; ++yt) {
                for (int xt = 0; xt < f_tar.width; ++xt) {
                    const float nb = nt[static_cast<size_t>(yt) * f_tar.width + xt];
                    sim[idx++] = pair_cosine(f_src, ys, xs, f_tar, yt, xt, na, nb);
                }
            }
        }
    }
    return sim;
}

CorrelationMap build_correlation_map(const FeatureMap& f_src, const FeatureMap& f_tar) {
    require_same_feature_dim(f_src, f_tar);
    const std::vector<float> ns = location_norms(f_src);
    const std::vector<float> nt = location_norms(f_tar);

    CorrelationMap map;
    map.height = f_src.height;
    map.width = f_src.width;
    map.target_index.resize(static_cast<size_t>(f_src.height) * f_src.width);
    map.score.resize(map.target_index.size());

    for (int ys = 0; ys < f_src.height; ++ys) {
        for (int xs = 0; xs < f_src.width; ++xs) {
            const float na = ns[static_cast<size_t>(ys) * f_src.width + xs];
            int best = 0;
            float best_sim = -2.0f;
            int ti = 0;
            for (int yt = 0; yt < f_tar.height; ++yt) {
                for (int xt = 0; xt < f_tar.width; ++xt, ++ti) {
                    const float nb = nt[static_cast<size_t>(yt) * f_tar.width + xt];
                    const float s = pair_cosine(f_src, ys, xs, f_tar, yt, xt, na, nb);
                    // Strict improvement only: ties keep the lowest row-major index.
                    if (s > best_sim) {
                        best_sim = s;
                        best = ti;
                    }
                }
            }
            const size_t si = static_cast<size_t>(ys) * f_src.width + xs;
            map.target_index[si] = best;
            map.score[si] = best_sim;
        }
    }
    return map;
}

CorrelationMap upsample_correlation(const CorrelationMap& map, int height, int width) {
    if (height == map.height && width == map.width) {
        return map;
    }
    if (height % map.height != 0 || width % map.width != 0) {
        throw ShapeError("upsample_correlation: grid is not an integer multiple");
    }
    const int fy = height / map.height;
    const int fx = width / map.width;

    CorrelationMap out;
    out.height = height;
    out.width = width;
    out.mode = map.mode;
    out.target_index.resize(static_cast<size_t>(height) * width);
    out.score.resize(out.target_index.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t coarse = static_cast<size_t>(y / fy) * map.width + (x / fx);
            const int tgt = map.target_index[coarse];
            const int ty = tgt / map.width;
            const int tx = tgt % map.width;
            // Keep the within-cell offset so distinct fine cells stay distinct.
            const int fine_ty = std::min(ty * fy + (y % fy), height - 1);
            const int fine_tx = std::min(tx * fx + (x % fx), width - 1);
            const size_t i = static_cast<size_t>(y) * width + x;
            out.target_index[i] = fine_ty * width + fine_tx;
            out.score[i] = map.score[coarse];
        }
    }
    return out;
}

Latent apply_correlation(const CorrelationMap& map, const Latent& x0_tar) {
    if (map.height != x0_tar.height || map.width != x0_tar.width) {
        throw ShapeError("apply_correlation: map grid " + std::to_string(map.height) + "x" +
                         std::to_string(map.width) + " vs latent " + x0_tar.shape_str());
    }
    Latent out(x0_tar.channels, x0_tar.height, x0_tar.width);
    out.step = x0_tar.step;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const int tgt = map.target_of(y, x);
            const int ty = tgt / map.width;
            const int tx = tgt % map.width;
            for (int c = 0; c < x0_tar.channels; ++c) {
                out.at(c, y, x) = x0_tar.at(c, ty, tx);
            }
        }
    }
    return out;
}

SemanticMatcher::SemanticMatcher(MatchingMode mode, std::string dift_layer,
                                 int initial_dift_timestep,
                                 std::optional<float> score_threshold)
    : mode_(mode),
      dift_layer_(std::move(dift_layer)),
      initial_timestep_(initial_dift_timestep),
      score_threshold_(score_threshold) {}

CorrelationMap SemanticMatcher::step(const Latent& x0_src, const Latent& x0_tar, int t,
                                     Backend& backend) {
    if (mode_ == MatchingMode::Initial && cached_) {
        return *cached_;
    }
    const int feature_t = mode_ == MatchingMode::Initial ? initial_timestep_ : t;
    const FeatureMap fs = backend.extract_dift_features(x0_src, feature_t, dift_layer_);
    const FeatureMap ft = backend.extract_dift_features(x0_tar, feature_t, dift_layer_);
    CorrelationMap map = build_correlation_map(fs, ft);
    map.mode = mode_;

    if (score_threshold_) {
        // Below-threshold matches fall back to their own coordinates so the
        // mapping stays total.
        for (int y = 0; y < map.height; ++y) {
            for (int x = 0; x < map.width; ++x) {
                const size_t i = static_cast<size_t>(y) * map.width + x;
                if (map.score[i] < *score_threshold_) {
                    map.target_index[i] = static_cast<int>(i);
                }
            }
        }
    }

    if (mode_ == MatchingMode::Initial) {
        cached_ = map;
    }
    return map;
}

}  // namespace x0t
