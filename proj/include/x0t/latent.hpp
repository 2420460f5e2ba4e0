#pragma once

#include <string>
#include <vector>

namespace x0t {

inline constexpr int kNoStep = -1;

// 3-D float32 array (channels x height x width), row-major. x_t, predicted x0
// and noise predictions are all values of this type; `step` tags the timestep
// the value belongs to (kNoStep when untagged).
struct Latent {
    int channels = 0;
    int height = 0;
    int width = 0;
    int step = kNoStep;
    std::vector<float> data;

    Latent() = default;
    Latent(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, fill) {}

    size_t size() const { return data.size(); }

    bool same_shape(const Latent& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    std::string shape_str() const;
};

// Throws ShapeError naming `who` when shapes differ.
void require_same_shape(const Latent& a, const Latent& b, const char* who);

// out = wa*a + wb*b, elementwise.
Latent lincomb(float wa, const Latent& a, float wb, const Latent& b);

Latent add(const Latent& a, const Latent& b);
Latent sub(const Latent& a, const Latent& b);
Latent scale(const Latent& a, float s);

// b + w*(a - b): equals the (w, 1-w) blend but collapses bit-exactly to b
// when a and b hold identical values.
Latent blend_toward(const Latent& a, const Latent& b, float w);

float max_abs(const Latent& a);
float max_abs_diff(const Latent& a, const Latent& b);
bool all_finite(const Latent& a);

}  // namespace x0t
