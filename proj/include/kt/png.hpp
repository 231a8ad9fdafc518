#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kt/cluster.hpp"
#include "kt/slice.hpp"

namespace kt {

// Plain RGB8 raster, row-major from the top row down.
struct ImageRgb8 {
    int rows = 0, cols = 0;
    std::vector<uint8_t> px;  // 3 bytes per pixel

    ImageRgb8() = default;
    ImageRgb8(int r, int c) : rows(r), cols(c), px(size_t(r) * c * 3, 0) {}
    uint8_t* at(int i, int j) { return px.data() + (size_t(i) * cols + j) * 3; }
    const uint8_t* at(int i, int j) const { return px.data() + (size_t(i) * cols + j) * 3; }
    void set(int i, int j, uint8_t r, uint8_t g, uint8_t b) {
        uint8_t* p = at(i, j);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
};

// 8-bit RGB PNG, zlib-compressed, no interlacing.
void write_png(const std::string& path, const ImageRgb8& img);

// Reads the subset write_png emits (truecolor 8-bit, filter None).
ImageRgb8 read_png(const std::string& path);

// Material in gray, void dark, super-threshold clusters colorized by id.
ImageRgb8 cluster_overlay(const SurfaceSlice& slice, const Grid<int32_t>& labels);

}  // namespace kt
