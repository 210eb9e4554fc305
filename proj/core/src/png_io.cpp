#include "cfstereo/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "op_common.hpp"

namespace cfstereo {

namespace {

struct FileCloser {
    FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error("png: " + what); }

struct PngRead {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWrite {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

}  // namespace

KittiDisparity read_kitti_disp_png(const std::string& path) {
    FileCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) fail("cannot open " + path);

    PngRead p;
    std::vector<uint16_t> pixels;
    std::vector<png_bytep> rows;
    p.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    p.info = p.png ? png_create_info_struct(p.png) : nullptr;
    if (!p.info) fail("out of memory");
    if (setjmp(png_jmpbuf(p.png))) fail("corrupt file " + path);

    png_init_io(p.png, fc.f);
    png_read_info(p.png, p.info);
    const png_uint_32 w = png_get_image_width(p.png, p.info);
    const png_uint_32 h = png_get_image_height(p.png, p.info);
    const int depth = png_get_bit_depth(p.png, p.info);
    const int color = png_get_color_type(p.png, p.info);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY)
        fail("expected 16-bit grayscale, got depth " + std::to_string(depth) + " color type " +
             std::to_string(color) + " in " + path);
    if (png_get_channels(p.png, p.info) != 1) fail("expected a single channel in " + path);
    png_set_swap(p.png);  // stored big-endian
    png_read_update_info(p.png, p.info);

    pixels.resize(static_cast<size_t>(w) * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = reinterpret_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * w);
    png_read_image(p.png, rows.data());
    png_read_end(p.png, nullptr);

    KittiDisparity out;
    out.width = w;
    out.height = h;
    out.disp.resize(pixels.size());
    out.valid.resize(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
        out.valid[i] = pixels[i] != 0;
        out.disp[i] = static_cast<float>(pixels[i]) / 256.0f;
    }
    return out;
}

void write_kitti_disp_png(const std::string& path, const std::vector<float>& disp, int64_t width,
                          int64_t height) {
    detail::check(width > 0 && height > 0 && disp.size() == static_cast<size_t>(width * height),
                  "png: disparity size mismatch");
    FileCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) fail("cannot open " + path + " for writing");

    PngWrite p;
    std::vector<uint16_t> pixels(disp.size());
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (size_t i = 0; i < disp.size(); ++i) {
        const double v = disp[i];
        pixels[i] = (std::isfinite(v) && v > 0.0)
                        ? static_cast<uint16_t>(std::clamp<int64_t>(std::llround(v * 256.0), 0, 65535))
                        : 0;
    }
    for (int64_t y = 0; y < height; ++y)
        rows[static_cast<size_t>(y)] =
            reinterpret_cast<png_bytep>(pixels.data() + static_cast<size_t>(y * width));

    p.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    p.info = p.png ? png_create_info_struct(p.png) : nullptr;
    if (!p.info) fail("out of memory");
    if (setjmp(png_jmpbuf(p.png))) fail("write failed for " + path);

    png_init_io(p.png, fc.f);
    png_set_IHDR(p.png, p.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(p.png, p.info);
    png_set_swap(p.png);
    png_write_image(p.png, rows.data());
    png_write_end(p.png, nullptr);
}

Tensor<float> read_image_png(const std::string& path) {
    FileCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) fail("cannot open " + path);

    PngRead p;
    std::vector<uint8_t> pixels;
    std::vector<png_bytep> rows;
    p.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    p.info = p.png ? png_create_info_struct(p.png) : nullptr;
    if (!p.info) fail("out of memory");
    if (setjmp(png_jmpbuf(p.png))) fail("corrupt file " + path);

    png_init_io(p.png, fc.f);
    png_read_info(p.png, p.info);
    png_set_expand(p.png);
    png_set_strip_16(p.png);
    png_set_strip_alpha(p.png);
    if ((png_get_color_type(p.png, p.info) & PNG_COLOR_MASK_COLOR) == 0)
        png_set_gray_to_rgb(p.png);
    png_read_update_info(p.png, p.info);
    const png_uint_32 w = png_get_image_width(p.png, p.info);
    const png_uint_32 h = png_get_image_height(p.png, p.info);
    if (png_get_channels(p.png, p.info) != 3) fail("expected 3 channels after expansion in " + path);

    pixels.resize(static_cast<size_t>(w) * h * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = pixels.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(p.png, rows.data());
    png_read_end(p.png, nullptr);

    // interleaved RGB rows -> planar [1,3,H,W] in [0,1]
    std::vector<float> v(pixels.size());
    const size_t hw = static_cast<size_t>(w) * h;
    for (size_t i = 0; i < hw; ++i)
        for (size_t c = 0; c < 3; ++c)
            v[c * hw + i] = static_cast<float>(pixels[i * 3 + c]) / 255.0f;
    return Tensor<float>::from({1, 3, static_cast<int64_t>(h), static_cast<int64_t>(w)},
                               std::move(v));
}

void write_image_png(const std::string& path, const Tensor<float>& image) {
    detail::check_rank("write_image_png", image, 4);
    const int64_t c = image.dim(1), h = image.dim(2), w = image.dim(3);
    detail::check(image.dim(0) == 1 && (c == 1 || c == 3),
                  "write_image_png: expected [1,{1|3},H,W]");

    FileCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) fail("cannot open " + path + " for writing");

    PngWrite p;
    const size_t hw = static_cast<size_t>(h * w);
    std::vector<uint8_t> pixels(hw * static_cast<size_t>(c));
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (size_t i = 0; i < hw; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float x = std::clamp(image.values()[static_cast<size_t>(ch) * hw + i], 0.0f, 1.0f);
            pixels[i * static_cast<size_t>(c) + static_cast<size_t>(ch)] =
                static_cast<uint8_t>(std::lround(x * 255.0f));
        }
    for (int64_t y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = pixels.data() + static_cast<size_t>(y * w * c);

    p.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    p.info = p.png ? png_create_info_struct(p.png) : nullptr;
    if (!p.info) fail("out of memory");
    if (setjmp(png_jmpbuf(p.png))) fail("write failed for " + path);

    png_init_io(p.png, fc.f);
    png_set_IHDR(p.png, p.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(p.png, p.info);
    png_write_image(p.png, rows.data());
    png_write_end(p.png, nullptr);
}

}  // namespace cfstereo
