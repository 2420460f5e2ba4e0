#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace x0t {

// RGB image, float values nominally in [0, 1], row-major (y, x, channel).
struct ImageRgb {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    ImageRgb() = default;
    ImageRgb(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

    size_t size() const { return data.size(); }

    float& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

// 8-bit RGB PNG codec. Reads any PNG color type (expanded to RGB, alpha
// stripped, 16-bit narrowed); writes clamped [0,1] floats as 8-bit RGB.
ImageRgb load_png(const std::string& path);
void save_png(const ImageRgb& image, const std::string& path);

// 8-bit quantization used by save_png, exposed for grayscale masks too.
uint8_t quantize_u8(float v);

// Grayscale PNG from a binary/float map in [0,1] (mask export).
void save_png_gray(const std::vector<float>& values, int height, int width,
                   const std::string& path);

float mean_abs_diff(const ImageRgb& a, const ImageRgb& b);

}  // namespace x0t
