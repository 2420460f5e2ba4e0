#pragma once

#include <vector>

#include "x0t/backend.hpp"

namespace x0t {

// Binary object mask over the latent grid.
struct ObjectMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // {0, 1}, row-major
    std::vector<int> token_indices;
    float threshold = 0.5f;

    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }

    size_t active_count() const;
    static ObjectMask full(int height, int width);
    static ObjectMask empty_mask(int height, int width);
};

// Mean of the selected-token maps across all captures/layers/heads, min-max
// normalized to [0, 1], then thresholded (>= threshold). A degenerate
// constant aggregate yields the all-ones mask with a logged warning so the
// transfer still runs.
ObjectMask extract_object_mask(const std::vector<AttentionCapture>& captures,
                               const std::vector<int>& token_indices, float threshold);

// The normalized aggregate before thresholding (mask PNG export, tests).
std::vector<float> aggregate_attention(const std::vector<AttentionCapture>& captures,
                                       const std::vector<int>& token_indices);

}  // namespace x0t
