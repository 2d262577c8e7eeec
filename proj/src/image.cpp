#include "votesplat/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

namespace votesplat {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path &path, const std::vector<unsigned char> &bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

void put_u32le(std::vector<unsigned char> &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
    }
}

std::uint32_t get_u32le(const unsigned char *p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) {
            std::fclose(f);
        }
    }
};

} // namespace

void write_float_plane(const std::filesystem::path &path, const ImageF &image) {
    std::vector<unsigned char> bytes;
    bytes.reserve(16 + image.data.size() * 4);
    bytes.insert(bytes.end(), {'V', 'S', 'P', 'L'});
    put_u32le(bytes, static_cast<std::uint32_t>(image.width));
    put_u32le(bytes, static_cast<std::uint32_t>(image.height));
    put_u32le(bytes, static_cast<std::uint32_t>(image.channels));
    for (float v : image.data) {
        put_u32le(bytes, std::bit_cast<std::uint32_t>(v));
    }
    write_all(path, bytes);
}

ImageF read_float_plane(const std::filesystem::path &path) {
    const auto bytes = read_all(path);
    if (bytes.size() < 16) {
        throw ParseError("float plane header truncated in " + path.string(), bytes.size());
    }
    if (std::memcmp(bytes.data(), "VSPL", 4) != 0) {
        throw ParseError("bad float plane magic in " + path.string(), 0);
    }
    const auto w = get_u32le(bytes.data() + 4);
    const auto h = get_u32le(bytes.data() + 8);
    const auto c = get_u32le(bytes.data() + 12);
    const std::uint64_t samples = static_cast<std::uint64_t>(w) * h * c;
    if (bytes.size() != 16 + samples * 4) {
        throw ParseError("float plane payload size mismatch in " + path.string(),
                         std::min<std::size_t>(bytes.size(), 16 + samples * 4));
    }
    ImageF image(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        image.data[i] = std::bit_cast<float>(get_u32le(bytes.data() + 16 + 4 * i));
    }
    return image;
}

void write_png(const std::filesystem::path &path, const ImageD &image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ValidationError("PNG output supports 1 or 3 channels");
    }
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) {
        throw IoError("cannot write " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(image.width * image.channels));
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x * image.channels + c)] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageD read_png(const std::filesystem::path &path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) {
        throw IoError("cannot open " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("malformed PNG " + path.string(), 0);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = static_cast<int>(png_get_channels(png, info));
    ImageD image(w, h, c);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < c; ++k) {
                image.at(x, y, k) = row[static_cast<std::size_t>(x * c + k)] / 255.0;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_pgm16(const std::filesystem::path &path, const Image<std::uint16_t> &image) {
    if (image.channels != 1) {
        throw ValidationError("PGM output requires a single channel");
    }
    const std::string header =
        "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n65535\n";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + image.data.size() * 2);
    for (std::uint16_t v : image.data) {
        bytes.push_back(static_cast<unsigned char>(v >> 8));
        bytes.push_back(static_cast<unsigned char>(v & 0xffu));
    }
    write_all(path, bytes);
}

Image<std::uint16_t> read_pgm16(const std::filesystem::path &path) {
    const auto bytes = read_all(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char *what) {
        skip_space();
        const std::size_t start = pos;
        long value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1'000'000) {
                throw ParseError(std::string("PGM ") + what + " out of range", start);
            }
            ++pos;
        }
        if (pos == start) {
            throw ParseError(std::string("PGM ") + what + " missing", start);
        }
        return static_cast<int>(value);
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw ParseError("not a binary PGM: " + path.string(), 0);
    }
    pos = 2;
    const int w = read_int("width");
    const int h = read_int("height");
    const int maxval = read_int("maxval");
    if (maxval != 65535) {
        throw ParseError("label PGM must have maxval 65535", pos);
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw ParseError("PGM header not terminated", pos);
    }
    ++pos;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2;
    if (bytes.size() - pos < need) {
        throw ParseError("PGM raster truncated", bytes.size());
    }
    Image<std::uint16_t> image(w, h, 1);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        image.data[i] = static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    }
    return image;
}

} // namespace votesplat
