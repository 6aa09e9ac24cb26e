#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include <png.h>

#include "in2/tensor.hpp"

namespace in2 {

// H x W x 3 raster in [0,1], stored channel-major [3,H,W] in double.
struct Image {
    Tensor<double> data;  // [3,H,W]

    Image() = default;
    Image(std::int64_t h, std::int64_t w) : data(Shape{3, h, w}) {}
    explicit Image(Tensor<double> t) : data(std::move(t)) {
        check(data.rank() == 3 && data.dim(0) == 3, "Image expects [3,H,W]");
    }

    std::int64_t height() const { return data.dim(1); }
    std::int64_t width() const { return data.dim(2); }
    double& at(std::int64_t c, std::int64_t y, std::int64_t x) { return data.at(c, y, x); }
    double at(std::int64_t c, std::int64_t y, std::int64_t x) const { return data.at(c, y, x); }

    void validate() const {
        check(height() >= 8 && width() >= 8, "Image dims must be >= 8");
        for (double v : data.vec())
            check(std::isfinite(v) && v >= 0.0 && v <= 1.0, "Image values must be in [0,1]");
    }
};

// H x W binary raster; 1 marks a missing pixel.
struct Mask {
    Tensor<double> data;  // [1,H,W], values in {0,1}

    Mask() = default;
    Mask(std::int64_t h, std::int64_t w) : data(Shape{1, h, w}) {}

    std::int64_t height() const { return data.dim(1); }
    std::int64_t width() const { return data.dim(2); }
    double& at(std::int64_t y, std::int64_t x) { return data.at(0, y, x); }
    double at(std::int64_t y, std::int64_t x) const { return data.at(0, y, x); }

    void validate() const {
        for (double v : data.vec()) check(v == 0.0 || v == 1.0, "Mask must be binary");
    }

    std::int64_t count_ones() const {
        std::int64_t n = 0;
        for (double v : data.vec()) n += v == 1.0;
        return n;
    }
};

inline double mask_ratio(const Mask& m) {
    return static_cast<double>(m.count_ones()) / static_cast<double>(m.data.numel());
}

namespace detail {

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

// Decodes any PNG into 8-bit RGB or gray rows (palette/alpha/16-bit folded).
inline std::vector<std::vector<unsigned char>> read_png_rows(const std::string& path,
                                                             std::uint32_t& w, std::uint32_t& h,
                                                             int& channels) {
    PngReadCloser c;
    c.fp = std::fopen(path.c_str(), "rb");
    if (!c.fp) throw IoError("cannot open for reading: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, c.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("not a PNG file: " + path);
    c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    c.info = png_create_info_struct(c.png);
    if (setjmp(png_jmpbuf(c.png))) throw IoError("PNG decode failed: " + path);
    png_init_io(c.png, c.fp);
    png_set_sig_bytes(c.png, 8);
    png_read_info(c.png, c.info);

    png_set_strip_16(c.png);
    png_set_packing(c.png);
    if (png_get_color_type(c.png, c.info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(c.png);
    if (png_get_color_type(c.png, c.info) == PNG_COLOR_TYPE_GRAY &&
        png_get_bit_depth(c.png, c.info) < 8)
        png_set_expand_gray_1_2_4_to_8(c.png);
    png_set_strip_alpha(c.png);
    png_read_update_info(c.png, c.info);

    w = png_get_image_width(c.png, c.info);
    h = png_get_image_height(c.png, c.info);
    channels = png_get_channels(c.png, c.info);
    std::size_t rowbytes = png_get_rowbytes(c.png, c.info);
    std::vector<std::vector<unsigned char>> rows(h, std::vector<unsigned char>(rowbytes));
    std::vector<png_bytep> ptrs(h);
    for (std::uint32_t y = 0; y < h; ++y) ptrs[y] = rows[y].data();
    png_read_image(c.png, ptrs.data());
    png_read_end(c.png, nullptr);
    return rows;
}

inline void write_png_rows(const std::string& path, std::uint32_t w, std::uint32_t h,
                           int color_type, const std::vector<std::vector<unsigned char>>& rows) {
    PngWriteCloser c;
    c.fp = std::fopen(path.c_str(), "wb");
    if (!c.fp) throw IoError("cannot open for writing: " + path);
    c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    c.info = png_create_info_struct(c.png);
    if (setjmp(png_jmpbuf(c.png))) throw IoError("PNG encode failed: " + path);
    png_init_io(c.png, c.fp);
    png_set_IHDR(c.png, c.info, w, h, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(c.png, c.info);
    std::vector<png_bytep> ptrs(h);
    for (std::uint32_t y = 0; y < h; ++y)
        ptrs[y] = const_cast<png_bytep>(rows[y].data());
    png_write_image(c.png, ptrs.data());
    png_write_end(c.png, nullptr);
}

inline unsigned char to_byte(double v) {
    double scaled = v * 255.0;
    long r = std::lround(scaled < 0 ? 0 : (scaled > 255 ? 255 : scaled));
    return static_cast<unsigned char>(r);
}

}  // namespace detail

inline Image load_image(const std::string& path) {
    std::uint32_t w = 0, h = 0;
    int channels = 0;
    auto rows = detail::read_png_rows(path, w, h, channels);
    check(channels == 3 || channels == 1, "expected RGB or gray PNG, got " +
                                              std::to_string(channels) + " channels: " + path);
    check(h >= 8 && w >= 8, "image dims must be >= 8: " + path);
    Image img(h, w);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = rows[y][x * channels + (channels == 3 ? c : 0)] / 255.0;
    return img;
}

inline void save_image(const Image& img, const std::string& path) {
    std::uint32_t h = static_cast<std::uint32_t>(img.height());
    std::uint32_t w = static_cast<std::uint32_t>(img.width());
    std::vector<std::vector<unsigned char>> rows(h, std::vector<unsigned char>(w * 3));
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) rows[y][x * 3 + c] = detail::to_byte(img.at(c, y, x));
    detail::write_png_rows(path, w, h, PNG_COLOR_TYPE_RGB, rows);
}

// Masks serialize as single-channel PNG with {0,255}.
inline Mask load_mask(const std::string& path) {
    std::uint32_t w = 0, h = 0;
    int channels = 0;
    auto rows = detail::read_png_rows(path, w, h, channels);
    Mask m(h, w);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            m.at(y, x) = rows[y][x * channels] >= 128 ? 1.0 : 0.0;
    return m;
}

inline void save_mask(const Mask& m, const std::string& path) {
    std::uint32_t h = static_cast<std::uint32_t>(m.height());
    std::uint32_t w = static_cast<std::uint32_t>(m.width());
    std::vector<std::vector<unsigned char>> rows(h, std::vector<unsigned char>(w));
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            rows[y][x] = m.at(y, x) == 1.0 ? 255 : 0;
    detail::write_png_rows(path, w, h, PNG_COLOR_TYPE_GRAY, rows);
}

// mask * pred + (1 - mask) * input, clamped; known pixels pass through
// bit-exactly.
inline Image composite(const Image& pred, const Image& input, const Mask& mask) {
    check(pred.height() == input.height() && pred.width() == input.width() &&
              mask.height() == input.height() && mask.width() == input.width(),
          "composite: dimension mismatch");
    Image out(input.height(), input.width());
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < input.height(); ++y)
            for (std::int64_t x = 0; x < input.width(); ++x) {
                if (mask.at(y, x) == 1.0) {
                    double v = pred.at(c, y, x);
                    out.at(c, y, x) = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                } else {
                    out.at(c, y, x) = input.at(c, y, x);
                }
            }
    return out;
}

}  // namespace in2
