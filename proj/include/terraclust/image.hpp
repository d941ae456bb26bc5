#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace terraclust {

/// 8-bit raster, 1 (gray) or 3 (RGB) channels, row-major interleaved.
struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<uint8_t> pixels;

    uint8_t at(int r, int c, int ch = 0) const {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    uint8_t& at(int r, int c, int ch = 0) {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    bool empty() const { return width == 0 || height == 0; }
};

/// Per-pixel relative depth (f32), dimensions match the parent image.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    float at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    float& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    bool empty() const { return values.empty(); }
};

/// Per-pixel terrain class codes: 0 = soil, 1 = rock, 255 = unknown.
struct SegMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> values;

    uint8_t at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    uint8_t& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    bool empty() const { return values.empty(); }
};

constexpr uint8_t kMaskSoil = 0;
constexpr uint8_t kMaskRock = 1;
constexpr uint8_t kMaskUnknown = 255;

/// Grayscale working buffer for correlation and featurization.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    bool empty() const { return values.empty(); }
};

/// Rec.601 luma (0.299 R + 0.587 G + 0.114 B); identity for 1-channel input.
GrayImage to_gray(const RawImage& img);

/// Crop a window; the window must lie fully inside the image.
GrayImage crop(const GrayImage& img, int row, int col, int h, int w);
RawImage crop(const RawImage& img, int row, int col, int h, int w);

/// Exact box-filter (area-average) resampling to an arbitrary size.
/// Works for both down- and up-scaling; each output pixel averages the
/// source area it covers, weighted by fractional overlap.
GrayImage resize_area(const GrayImage& img, int out_w, int out_h);
RawImage resize_area_u8(const RawImage& img, int out_w, int out_h);

// --- File formats (binary PPM P6 / PGM P5, raw f32 depth) ---

RawImage read_pnm(const std::string& path);
void write_pnm(const std::string& path, const RawImage& img);

/// Raw depth file: u32 width, u32 height (little-endian), then w*h f32.
DepthMap read_depth_raw(const std::string& path);
void write_depth_raw(const std::string& path, const DepthMap& d);

/// Masks travel as PGM P5 with the class codes as gray levels.
SegMask read_mask(const std::string& path);
void write_mask(const std::string& path, const SegMask& m);

}  // namespace terraclust
