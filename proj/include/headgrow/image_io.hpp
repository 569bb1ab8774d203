#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "headgrow/errors.hpp"
#include "headgrow/grid.hpp"

namespace headgrow {

// ---------------------------------------------------------------------------
// PGM (P5 binary / P2 ascii), 8-bit grayscale
// ---------------------------------------------------------------------------

namespace detail {

inline int pgm_next_token(std::istream& in) {
    // Skips whitespace and '#' comments, returns the next integer.
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    return value;
}

}  // namespace detail

inline ImageGrid read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingImage("cannot open " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    bool binary = magic[0] == 'P' && magic[1] == '5';
    bool ascii = magic[0] == 'P' && magic[1] == '2';
    if (!binary && !ascii) throw IoError("not a PGM file: " + path.string());
    int width = detail::pgm_next_token(in);
    int height = detail::pgm_next_token(in);
    int maxval = detail::pgm_next_token(in);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
        throw IoError("unsupported PGM header in " + path.string());
    ImageGrid img(width, height);
    if (binary) {
        in.get();  // single whitespace after maxval
        std::vector<std::uint8_t> row(static_cast<std::size_t>(width));
        for (int y = 0; y < height; ++y) {
            in.read(reinterpret_cast<char*>(row.data()), width);
            if (!in) throw IoError("truncated PGM data in " + path.string());
            for (int x = 0; x < width; ++x) img(x, y) = static_cast<float>(row[x]);
        }
    } else {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                int v = detail::pgm_next_token(in);
                if (v < 0) throw IoError("truncated PGM data in " + path.string());
                img(x, y) = static_cast<float>(v);
            }
    }
    if (maxval != 255) {
        for (auto& v : img) v = v * 255.0f / static_cast<float>(maxval);
    }
    return img;
}

inline void write_pgm(const std::filesystem::path& path, const ImageGrid& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()));
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            float v = std::round(img(x, y));
            row[x] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
        }
        out.write(reinterpret_cast<const char*>(row.data()), img.width());
    }
    if (!out) throw IoError("short write on " + path.string());
}

inline Mask read_mask_pgm(const std::filesystem::path& path) {
    ImageGrid img = read_pgm(path);
    Mask mask(img.width(), img.height());
    for (std::size_t i = 0; i < img.size(); ++i) mask[i] = img[i] >= 128.0f ? 255 : 0;
    return mask;
}

inline void write_mask_pgm(const std::filesystem::path& path, const Mask& mask) {
    ImageGrid img(mask.width(), mask.height());
    for (std::size_t i = 0; i < mask.size(); ++i) img[i] = mask[i] ? 255.0f : 0.0f;
    write_pgm(path, img);
}

// ---------------------------------------------------------------------------
// HGFI: raw little-endian float image with a 20-byte header.
// Layout: magic "HGFI", uint32 version (=1), uint32 width, uint32 height,
// uint32 channels, then width*height*channels float32 values, row-major,
// channels interleaved. Used for ground-truth normals (3 ch, invalid pixels
// all-zero) and depth maps (1 ch, invalid pixels NaN).
// ---------------------------------------------------------------------------

struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;  // size = width*height*channels

    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

inline void write_float_image(const std::filesystem::path& path, const FloatImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const char magic[4] = {'H', 'G', 'F', 'I'};
    std::uint32_t header[4] = {1u, static_cast<std::uint32_t>(img.width),
                               static_cast<std::uint32_t>(img.height),
                               static_cast<std::uint32_t>(img.channels)};
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!out) throw IoError("short write on " + path.string());
}

inline FloatImage read_float_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingImage("cannot open " + path.string());
    char magic[4];
    std::uint32_t header[4];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, "HGFI", 4) != 0)
        throw IoError("not an HGFI file: " + path.string());
    if (header[0] != 1u) throw IoError("unsupported HGFI version in " + path.string());
    FloatImage img;
    img.width = static_cast<int>(header[1]);
    img.height = static_cast<int>(header[2]);
    img.channels = static_cast<int>(header[3]);
    if (img.width <= 0 || img.height <= 0 || img.channels <= 0 || img.channels > 16)
        throw IoError("bad HGFI header in " + path.string());
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!in) throw IoError("truncated HGFI data in " + path.string());
    return img;
}

}  // namespace headgrow
