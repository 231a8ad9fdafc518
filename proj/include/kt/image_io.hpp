#pragma once

#include <string>

#include "kt/grid.hpp"
#include "kt/slice.hpp"

namespace kt {

// Binary PGM (P5), maxval 255. 255 = material, 0 = void.
void write_pgm(const std::string& path, const MaskGrid& mask);
MaskGrid read_pgm(const std::string& path);

// Grayscale PFM ("Pf"), little-endian (negative scale), scanlines bottom-to-top
// per the PFM convention. NaN marks void pixels.
void write_pfm(const std::string& path, const Grid<double>& img);
Grid<double> read_pfm(const std::string& path);

// Sidecar path: "<stem>.meta.json" next to the image file.
std::string sidecar_path(const std::string& image_path);

}  // namespace kt
