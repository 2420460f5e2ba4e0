#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "x0t/errors.hpp"
#include "x0t/image.hpp"

namespace x0t {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

uint8_t quantize_u8(float v) {
    if (!(v > 0.0f)) {
        return 0;
    }
    if (v >= 1.0f) {
        return 255;
    }
    return static_cast<uint8_t>(v * 255.0f + 0.5f);
}

ImageRgb load_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) {
        throw IoError("cannot open image: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw IoError("png_create_read_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG: " + path);
    }

    png_init_io(png, f.get());
    png_read_info(png, info);

    // Normalize every color type to 8-bit RGB.
    png_set_expand(png);
    if (png_get_bit_depth(png, info) == 16) {
        png_set_strip_16(png);
    }
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unexpected PNG row layout: " + path);
    }

    std::vector<uint8_t> raw(static_cast<size_t>(h) * rowbytes);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = raw.data() + static_cast<size_t>(y) * rowbytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageRgb img(h, w);
    for (size_t i = 0; i < img.size(); ++i) {
        img.data[i] = raw[i] / 255.0f;
    }
    return img;
}

void save_png(const ImageRgb& image, const std::string& path) {
    if (image.height <= 0 || image.width <= 0) {
        throw ShapeError("save_png: empty image");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) {
        throw IoError("cannot write image: " + path);
    }

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw IoError("png_create_write_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG: " + path);
    }

    png_init_io(png, f.get());
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                row[static_cast<size_t>(x) * 3 + c] = quantize_u8(image.at(y, x, c));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

void save_png_gray(const std::vector<float>& values, int height, int width,
                   const std::string& path) {
    if (values.size() != static_cast<size_t>(height) * width) {
        throw ShapeError("save_png_gray: value count does not match dimensions");
    }
    ImageRgb img(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const float v = values[static_cast<size_t>(y) * width + x];
            img.at(y, x, 0) = v;
            img.at(y, x, 1) = v;
            img.at(y, x, 2) = v;
        }
    }
    save_png(img, path);
}

float mean_abs_diff(const ImageRgb& a, const ImageRgb& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("mean_abs_diff: image sizes differ");
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += std::fabs(static_cast<double>(a.data[i]) - b.data[i]);
    }
    return a.size() ? static_cast<float>(acc / a.size()) : 0.0f;
}

}  // namespace x0t
