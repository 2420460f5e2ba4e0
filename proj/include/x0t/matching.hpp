#pragma once

#include <optional>
#include <string>
#include <vector>

#include "x0t/backend.hpp"
#include "x0t/latent.hpp"

namespace x0t {

enum class MatchingMode { Progressive, Initial };

std::string to_string(MatchingMode mode);
MatchingMode matching_mode_from_string(const std::string& s);

// Per-source-location assignment to the best target location by cosine
// ranking. Total: every source cell maps somewhere; not injective.
struct CorrelationMap {
    int height = 0;
    int width = 0;
    MatchingMode mode = MatchingMode::Progressive;
    std::vector<int> target_index;  // row-major target cell per source cell
    std::vector<float> score;       // cosine of the mapped pair, in [-1, 1]

    int target_of(int y, int x) const {
        return target_index[static_cast<size_t>(y) * width + x];
    }
};

// All-pairs cosine similarities: sim[(i,j),(i',j')], layout
// [src_h, src_w, tar_h, tar_w] row-major. Zero vectors get similarity 0.
std::vector<float> cosine_similarity_field(const FeatureMap& f_src, const FeatureMap& f_tar);

// Rank-1 nearest neighbour per source location; ties break toward the lowest
// row-major target index.
CorrelationMap build_correlation_map(const FeatureMap& f_src, const FeatureMap& f_tar);

// Nearest-neighbour upsampling of the mapping to a finer grid (indices are
// rescaled into the target grid of the same factor).
CorrelationMap upsample_correlation(const CorrelationMap& map, int height, int width);

// Pure gather: out[., i, j] = x0_tar[., mapping[i, j]].
Latent apply_correlation(const CorrelationMap& map, const Latent& x0_tar);

// Per-step semantic matcher. Progressive mode recomputes the mapping from the
// per-step x0 pair; initial mode computes it once from clean encodings and
// reuses it for the whole run.
class SemanticMatcher {
public:
    SemanticMatcher(MatchingMode mode, std::string dift_layer, int initial_dift_timestep,
                    std::optional<float> score_threshold = std::nullopt);

    // x0_src/x0_tar are the per-step predicted-x0 pair in progressive mode
    // and the clean encodings in initial mode (only consulted once there).
    CorrelationMap step(const Latent& x0_src, const Latent& x0_tar, int t, Backend& backend);

    MatchingMode mode() const { return mode_; }

private:
    MatchingMode mode_;
    std::string dift_layer_;
    int initial_timestep_;
    std::optional<float> score_threshold_;
    std::optional<CorrelationMap> cached_;
};

}  // namespace x0t
