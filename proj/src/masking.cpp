#include "x0t/masking.hpp"

#include <algorithm>

#include "x0t/errors.hpp"
#include "x0t/log.hpp"

namespace x0t {

size_t ObjectMask::active_count() const {
    size_t n = 0;
    for (uint8_t v : data) {
        n += v;
    }
    return n;
}

ObjectMask ObjectMask::full(int height, int width) {
    ObjectMask m;
    m.height = height;
    m.width = width;
    m.data.assign(static_cast<size_t>(height) * width, 1);
    return m;
}

ObjectMask ObjectMask::empty_mask(int height, int width) {
    ObjectMask m;
    m.height = height;
    m.width = width;
    m.data.assign(static_cast<size_t>(height) * width, 0);
    return m;
}

std::vector<float> aggregate_attention(const std::vector<AttentionCapture>& captures,
                                       const std::vector<int>& token_indices) {
    if (captures.empty()) {
        throw ContractError("extract_object_mask: no attention captures");
    }
    const int h = captures.front().height;
    const int w = captures.front().width;

    std::vector<float> acc(static_cast<size_t>(h) * w, 0.0f);
    size_t used = 0;
    for (const AttentionCapture& cap : captures) {
        if (cap.height != h || cap.width != w) {
            throw ShapeError("extract_object_mask: capture grids differ");
        }
        for (const auto& m : cap.maps) {
            if (std::find(token_indices.begin(), token_indices.end(), m.token_index) ==
                token_indices.end()) {
                continue;
            }
            for (size_t i = 0; i < acc.size(); ++i) {
                acc[i] += m.weights[i];
            }
            ++used;
        }
    }
    if (used == 0) {
        throw ContractError("extract_object_mask: no capture covers the requested tokens");
    }
    for (float& v : acc) {
        v /= static_cast<float>(used);
    }

    // Min-max normalize.
    const auto [mn, mx] = std::minmax_element(acc.begin(), acc.end());
    const float lo = *mn;
    const float hi = *mx;
    if (hi == lo) {
        // Degenerate: report as all-ones so the caller fails open.
        std::fill(acc.begin(), acc.end(), 1.0f);
        return acc;
    }
    for (float& v : acc) {
        v = (v - lo) / (hi - lo);
    }
    return acc;
}

ObjectMask extract_object_mask(const std::vector<AttentionCapture>& captures,
                               const std::vector<int>& token_indices, float threshold) {
    if (!(threshold > 0.0f && threshold <= 1.0f)) {
        throw DomainError("mask threshold must be in (0, 1]");
    }
    std::vector<float> agg = aggregate_attention(captures, token_indices);

    bool degenerate = true;
    for (float v : agg) {
        degenerate = degenerate && v == 1.0f;
    }
    if (degenerate) {
        log_warn("attention aggregate is constant; using the all-ones mask");
    }

    ObjectMask m;
    m.height = captures.front().height;
    m.width = captures.front().width;
    m.threshold = threshold;
    m.token_indices = token_indices;
    m.data.resize(agg.size());
    for (size_t i = 0; i < agg.size(); ++i) {
        m.data[i] = agg[i] >= threshold ? 1 : 0;
    }
    return m;
}

}  // namespace x0t
