#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "relight/errors.hpp"
#include "relight/tensor.hpp"

namespace relight {

// H×W×C image, linear values in [0,1]. FeatureGrid shares the layout with
// arbitrary channel depth, so both are Tensor aliases.
using ImageBuffer = Tensor;
using FeatureGrid = Tensor;

inline ImageBuffer make_image(int h, int w, int c, double value = 0.0) {
    if (h < 1 || w < 1 || c < 1) throw DimensionError("make_image: dims must be >= 1");
    return Tensor::full({h, w, c}, value);
}

inline void check_image(const ImageBuffer& img, const char* who) {
    if (img.shape.size() != 3 || img.numel() == 0)
        throw DimensionError(std::string(who) + ": expected nonempty H×W×C image");
}

inline double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// sRGB approximated by a plain 2.2 gamma.
inline double linear_to_srgb(double x) { return std::pow(clamp01(x), 1.0 / 2.2); }
inline double srgb_to_linear(double x) { return std::pow(clamp01(x), 2.2); }

inline void write_ppm(const std::string& path, const ImageBuffer& img) {
    check_image(img, "write_ppm");
    if (img.dim(2) != 3) throw DimensionError("write_ppm: expected 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_ppm: cannot open " + path);
    int h = img.dim(0), w = img.dim(1);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < 3; ++k)
                row[static_cast<size_t>(c) * 3 + k] = static_cast<unsigned char>(
                    std::lround(255.0 * linear_to_srgb(img(r, c, k))));
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("write_ppm: write failed for " + path);
}

inline void write_pgm(const std::string& path, const ImageBuffer& plane) {
    if (plane.shape.size() != 2 && !(plane.shape.size() == 3 && plane.dim(2) == 1))
        throw DimensionError("write_pgm: expected single-channel image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_pgm: cannot open " + path);
    int h = plane.dim(0), w = plane.dim(1);
    f << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c)
            row[static_cast<size_t>(c)] = static_cast<unsigned char>(
                std::lround(255.0 * clamp01(plane.v[static_cast<size_t>(r) * w + c])));
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("write_pgm: write failed for " + path);
}

namespace detail {
inline int read_pnm_int(std::istream& f) {
    int ch = f.get();
    while (ch == '#' || std::isspace(ch)) {
        if (ch == '#')
            while (ch != '\n' && ch != EOF) ch = f.get();
        ch = f.get();
    }
    int value = 0;
    bool any = false;
    while (std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        any = true;
        ch = f.get();
    }
    if (!any) throw IoError("malformed PNM header");
    return value;
}
} // namespace detail

inline ImageBuffer read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_ppm: cannot open " + path);
    char m0 = static_cast<char>(f.get()), m1 = static_cast<char>(f.get());
    if (m0 != 'P' || m1 != '6') throw IoError("read_ppm: not a P6 file: " + path);
    int w = detail::read_pnm_int(f);
    int h = detail::read_pnm_int(f);
    int maxval = detail::read_pnm_int(f);
    if (maxval != 255) throw IoError("read_ppm: only maxval 255 supported");
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError("read_ppm: truncated file " + path);
    ImageBuffer img = make_image(h, w, 3);
    for (size_t i = 0; i < raw.size(); ++i) img.v[i] = srgb_to_linear(raw[i] / 255.0);
    return img;
}

inline Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_pgm: cannot open " + path);
    char m0 = static_cast<char>(f.get()), m1 = static_cast<char>(f.get());
    if (m0 != 'P' || m1 != '5') throw IoError("read_pgm: not a P5 file: " + path);
    int w = detail::read_pnm_int(f);
    int h = detail::read_pnm_int(f);
    int maxval = detail::read_pnm_int(f);
    if (maxval != 255) throw IoError("read_pgm: only maxval 255 supported");
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError("read_pgm: truncated file " + path);
    Tensor plane({h, w});
    for (size_t i = 0; i < raw.size(); ++i) plane.v[i] = raw[i] / 255.0;
    return plane;
}

// Binary mask helpers. Masks are H×W tensors with entries in {0, 1}.
inline Tensor make_mask(int h, int w, double value = 0.0) { return Tensor::full({h, w}, value); }

} // namespace relight
