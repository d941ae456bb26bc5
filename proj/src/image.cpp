#include "terraclust/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace terraclust {

GrayImage to_gray(const RawImage& img) {
    GrayImage g;
    g.width = img.width;
    g.height = img.height;
    g.values.resize(static_cast<size_t>(img.width) * img.height);
    const size_t n = g.values.size();
    if (img.channels == 1) {
        for (size_t i = 0; i < n; ++i) g.values[i] = img.pixels[i];
    } else {
        for (size_t i = 0; i < n; ++i) {
            const uint8_t* p = &img.pixels[i * 3];
            g.values[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        }
    }
    return g;
}

GrayImage crop(const GrayImage& img, int row, int col, int h, int w) {
    if (row < 0 || col < 0 || row + h > img.height || col + w > img.width)
        throw std::invalid_argument("crop: window outside image");
    GrayImage out;
    out.width = w;
    out.height = h;
    out.values.resize(static_cast<size_t>(w) * h);
    for (int r = 0; r < h; ++r)
        std::copy_n(&img.values[static_cast<size_t>(row + r) * img.width + col], w,
                    &out.values[static_cast<size_t>(r) * w]);
    return out;
}

RawImage crop(const RawImage& img, int row, int col, int h, int w) {
    if (row < 0 || col < 0 || row + h > img.height || col + w > img.width)
        throw std::invalid_argument("crop: window outside image");
    RawImage out;
    out.width = w;
    out.height = h;
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(w) * h * img.channels);
    const size_t row_bytes = static_cast<size_t>(w) * img.channels;
    for (int r = 0; r < h; ++r)
        std::memcpy(&out.pixels[static_cast<size_t>(r) * row_bytes],
                    &img.pixels[(static_cast<size_t>(row + r) * img.width + col) * img.channels],
                    row_bytes);
    return out;
}

namespace {

// 1-D overlap weights of output cell `o` against source cells, for scale
// factor in_n/out_n. Returns [first, last) source index range and weights.
struct Overlap {
    int first;
    std::vector<double> w;
};

Overlap cell_overlap(int o, int in_n, int out_n) {
    const double scale = static_cast<double>(in_n) / out_n;
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    Overlap ov;
    ov.first = static_cast<int>(std::floor(lo));
    int last = static_cast<int>(std::ceil(hi));
    last = std::min(last, in_n);
    for (int i = ov.first; i < last; ++i) {
        const double a = std::max(lo, static_cast<double>(i));
        const double b = std::min(hi, static_cast<double>(i + 1));
        ov.w.push_back(std::max(0.0, b - a));
    }
    return ov;
}

}  // namespace

GrayImage resize_area(const GrayImage& img, int out_w, int out_h) {
    if (img.empty() || out_w <= 0 || out_h <= 0)
        throw std::invalid_argument("resize_area: empty input or output");
    if (out_w == img.width && out_h == img.height) return img;

    std::vector<Overlap> col_ov(out_w), row_ov(out_h);
    for (int c = 0; c < out_w; ++c) col_ov[c] = cell_overlap(c, img.width, out_w);
    for (int r = 0; r < out_h; ++r) row_ov[r] = cell_overlap(r, img.height, out_h);

    // Horizontal pass, then vertical.
    std::vector<double> tmp(static_cast<size_t>(out_w) * img.height);
    for (int r = 0; r < img.height; ++r) {
        const double* src = &img.values[static_cast<size_t>(r) * img.width];
        for (int c = 0; c < out_w; ++c) {
            const Overlap& ov = col_ov[c];
            double acc = 0.0, wsum = 0.0;
            for (size_t i = 0; i < ov.w.size(); ++i) {
                acc += ov.w[i] * src[ov.first + i];
                wsum += ov.w[i];
            }
            tmp[static_cast<size_t>(r) * out_w + c] = acc / wsum;
        }
    }
    GrayImage out;
    out.width = out_w;
    out.height = out_h;
    out.values.resize(static_cast<size_t>(out_w) * out_h);
    for (int c = 0; c < out_w; ++c) {
        for (int r = 0; r < out_h; ++r) {
            const Overlap& ov = row_ov[r];
            double acc = 0.0, wsum = 0.0;
            for (size_t i = 0; i < ov.w.size(); ++i) {
                acc += ov.w[i] * tmp[static_cast<size_t>(ov.first + i) * out_w + c];
                wsum += ov.w[i];
            }
            out.values[static_cast<size_t>(r) * out_w + c] = acc / wsum;
        }
    }
    return out;
}

RawImage resize_area_u8(const RawImage& img, int out_w, int out_h) {
    RawImage out;
    out.width = out_w;
    out.height = out_h;
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(out_w) * out_h * img.channels);
    for (int ch = 0; ch < img.channels; ++ch) {
        GrayImage plane;
        plane.width = img.width;
        plane.height = img.height;
        plane.values.resize(static_cast<size_t>(img.width) * img.height);
        for (size_t i = 0; i < plane.values.size(); ++i)
            plane.values[i] = img.pixels[i * img.channels + ch];
        GrayImage scaled = resize_area(plane, out_w, out_h);
        for (size_t i = 0; i < scaled.values.size(); ++i) {
            const double v = std::lround(scaled.values[i]);
            out.pixels[i * img.channels + ch] =
                static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return out;
}

namespace {

int read_pnm_int(std::istream& in) {
    // Skips whitespace and '#' comments per the PNM grammar.
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = in.get();
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("pnm: malformed header");
    return value;
}

void write_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("depth: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

RawImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image: " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        throw std::runtime_error("unsupported image format (want P5/P6): " + path);
    RawImage img;
    img.channels = magic[1] == '6' ? 3 : 1;
    img.width = read_pnm_int(in);
    img.height = read_pnm_int(in);
    const int maxv = read_pnm_int(in);
    if (maxv != 255) throw std::runtime_error("pnm: only maxval 255 supported: " + path);
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!in) throw std::runtime_error("pnm: truncated pixel data: " + path);
    return img;
}

void write_pnm(const std::string& path, const RawImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

DepthMap read_depth_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open depth map: " + path);
    DepthMap d;
    d.width = static_cast<int>(read_u32(in));
    d.height = static_cast<int>(read_u32(in));
    d.values.resize(static_cast<size_t>(d.width) * d.height);
    in.read(reinterpret_cast<char*>(d.values.data()),
            static_cast<std::streamsize>(d.values.size() * sizeof(float)));
    if (!in) throw std::runtime_error("depth: truncated data: " + path);
    return d;
}

void write_depth_raw(const std::string& path, const DepthMap& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write depth map: " + path);
    write_u32(out, static_cast<uint32_t>(d.width));
    write_u32(out, static_cast<uint32_t>(d.height));
    out.write(reinterpret_cast<const char*>(d.values.data()),
              static_cast<std::streamsize>(d.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write: " + path);
}

SegMask read_mask(const std::string& path) {
    RawImage img = read_pnm(path);
    if (img.channels != 1) throw std::runtime_error("mask must be single-channel: " + path);
    SegMask m;
    m.width = img.width;
    m.height = img.height;
    m.values = std::move(img.pixels);
    return m;
}

void write_mask(const std::string& path, const SegMask& m) {
    RawImage img;
    img.width = m.width;
    img.height = m.height;
    img.channels = 1;
    img.pixels = m.values;
    write_pnm(path, img);
}

}  // namespace terraclust
