#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "kt/grid.hpp"

namespace kt {

// Provenance carried in the .meta.json sidecar next to each slice mask.
struct SliceMeta {
    uint64_t seed = 0;
    double rms_amplitude_um = 0.0;
    double correlation_length_um = 0.0;
    double mean_bore_offset_um = 0.0;
    std::string source;  // "generated" or the imported file path

    friend bool operator==(const SliceMeta&, const SliceMeta&) = default;
};

// Binary material/void section. Rows run axially (z), columns radially (r);
// column 0 is the bore side, the outer edge is smooth.
struct SurfaceSlice {
    MaskGrid mask;
    double pixel_pitch_um = 3.0;
    double r_inner_nominal_um = 0.0;
    SliceMeta meta;

    int rows() const { return mask.rows(); }
    int cols() const { return mask.cols(); }

    // Radial coordinate of the center of column j, in micrometers.
    double r_center_um(int j) const { return r_inner_nominal_um + (j + 0.5) * pixel_pitch_um; }
    double z_center_um(int i) const { return (i + 0.5) * pixel_pitch_um; }
    double r_outer_um() const { return r_inner_nominal_um + cols() * pixel_pitch_um; }

    bool is_material(int i, int j) const { return mask(i, j) != kVoid; }

    friend bool operator==(const SurfaceSlice&, const SurfaceSlice&) = default;
};

// Mean depth of the contiguous void run at the bore side, averaged over rows (um).
double mean_bore_depth_um(const SurfaceSlice& slice);

// Fraction of material pixels.
double material_fraction(const SurfaceSlice& slice);

// Per-pixel ratio of first principal stress to nominal axial stress.
// Void pixels hold NaN and are excluded from all downstream statistics.
struct KtField {
    Grid<double> values;
    double sigma_nominal = 0.0;

    int rows() const { return values.rows(); }
    int cols() const { return values.cols(); }

    static double void_value() { return std::numeric_limits<double>::quiet_NaN(); }
};

}  // namespace kt
