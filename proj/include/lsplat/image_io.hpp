#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsplat {

// Row-major H x W x C image, values nominally in [0,1] for color data.
template <typename R>
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<R> data;

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, R(0)) {}

    R& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    R at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Lossless float image format for oracle-exact tests:
// magic "LSIMG1", u32 height, u32 width, u32 channels, then little-endian
// f32 data in row-major H x W x C order.
template <typename R>
void write_lsimg(const std::string& path, const Image<R>& img) {
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("write_lsimg: cannot open " + path);
    std::fwrite("LSIMG1", 1, 6, f.get());
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(img.height),
                                   static_cast<std::uint32_t>(img.width),
                                   static_cast<std::uint32_t>(img.channels)};
    std::fwrite(dims, sizeof(std::uint32_t), 3, f.get());
    std::vector<float> buf(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.data[i]);
    std::fwrite(buf.data(), sizeof(float), buf.size(), f.get());
}

template <typename R>
Image<R> read_lsimg(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("read_lsimg: cannot open " + path);
    char magic[6];
    if (std::fread(magic, 1, 6, f.get()) != 6 || std::memcmp(magic, "LSIMG1", 6) != 0)
        throw std::runtime_error("read_lsimg: bad magic in " + path);
    std::uint32_t dims[3];
    if (std::fread(dims, sizeof(std::uint32_t), 3, f.get()) != 3)
        throw std::runtime_error("read_lsimg: truncated header in " + path);
    Image<R> img(static_cast<int>(dims[1]), static_cast<int>(dims[0]), static_cast<int>(dims[2]));
    std::vector<float> buf(img.data.size());
    if (std::fread(buf.data(), sizeof(float), buf.size(), f.get()) != buf.size())
        throw std::runtime_error("read_lsimg: truncated data in " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = static_cast<R>(buf[i]);
    return img;
}

// 8-bit PNG, RGB or grayscale. Values are clamped to [0,1] and quantized;
// use LSIMG1 when exact floats matter.
template <typename R>
void write_png(const std::string& path, const Image<R>& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_png: 1 or 3 channels required");
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng failure for " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                R v = img.at(y, x, c);
                v = v < R(0) ? R(0) : (v > R(1) ? R(1) : v);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(static_cast<double>(v) * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

template <typename R>
Image<R> read_png(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: libpng failure for " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = static_cast<int>(png_get_channels(png, info));
    if (c != 1 && c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: unsupported channel count in " + path);
    }
    Image<R> img(w, h, c);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (std::size_t i = 0; i < row.size(); ++i)
            img.data[static_cast<std::size_t>(y) * row.size() + i] = static_cast<R>(row[i]) / R(255);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace lsplat
