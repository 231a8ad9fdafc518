#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kt/slice.hpp"

namespace kt {

// Parameters of the synthetic rough-bore generator. Profiles are Gaussian
// white noise convolved with a Gaussian kernel of std = correlation_length,
// then rescaled so the sample RMS about the mean equals rms_amplitude exactly.
struct RoughnessParams {
    double rms_amplitude_um = 8.0;
    double correlation_length_um = 30.0;
    double mean_bore_offset_um = 90.0;
    uint64_t seed = 0;

    void validate() const;
};

// 1D bore-wall height profile (um from column 0), one sample per axial pixel.
// pixel_pitch_um sets the axial sample spacing used to convert the correlation
// length to pixels. Deterministic for fixed (params, n_axial, pitch).
std::vector<double> generate_profile(const RoughnessParams& params, int n_axial,
                                     double pixel_pitch_um = 3.0);

// Pixel (i, j) is void iff its radial center lies inside the bore, i.e. below
// the profile height at row i. No anti-aliasing; positions round to centers.
SurfaceSlice rasterize(const std::vector<double>& profile_um, int width_pixels,
                       double pixel_pitch_um, double r_inner_nominal_um);

// Convenience: generate_profile + rasterize with the provenance recorded.
SurfaceSlice generate_slice(const RoughnessParams& params, int n_axial, int width_pixels,
                            double pixel_pitch_um = 3.0, double r_inner_nominal_um = 500.0);

// PGM (P5, 255 = material) plus a "<stem>.meta.json" sidecar. Round-trips bitwise.
void save_slice(const SurfaceSlice& slice, const std::string& path);
SurfaceSlice load_slice(const std::string& path);

}  // namespace kt
