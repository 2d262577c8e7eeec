#pragma once

#include "votesplat/common.hpp"

#include <filesystem>
#include <vector>

namespace votesplat {

/// Row-major interleaved image: value(x, y, c) lives at ((y * width) + x) * channels + c.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    T &at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    const T &at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    bool same_shape(const Image &o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool operator==(const Image &) const = default;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

// Float planes: 16-byte header (magic "VSPL", u32 width, u32 height, u32 channels)
// followed by little-endian float32 samples, row-major, channels interleaved.
void write_float_plane(const std::filesystem::path &path, const ImageF &image);
ImageF read_float_plane(const std::filesystem::path &path);

/// 8-bit RGB (3 channels) or grayscale (1 channel) PNG; values in [0,1] are
/// clamped and rounded to the nearest code.
void write_png(const std::filesystem::path &path, const ImageD &image);
ImageD read_png(const std::filesystem::path &path);

/// 16-bit binary PGM (P5, maxval 65535). Samples are big-endian as the Netpbm
/// format requires.
void write_pgm16(const std::filesystem::path &path, const Image<std::uint16_t> &image);
Image<std::uint16_t> read_pgm16(const std::filesystem::path &path);

} // namespace votesplat
