#pragma once

#include <filesystem>
#include <vector>

#include "kt/fem.hpp"
#include "kt/slice.hpp"

namespace kt {

// Volume fraction of material whose K_t exceeds each threshold.
//
// Fractions are computed from radius-proportional pixel weights (r_center in
// axisymmetric mode, 1 in plane mode): the constant 2*pi*pitch^2 factors cancel
// in the ratio, which keeps plane-mode fractions bitwise equal to direct pixel
// counting. total_volume carries the full physical constants (um^3
// axisymmetric, um^2 plane).
struct ExceedanceCurve {
    std::vector<double> thresholds;  // strictly ascending
    std::vector<double> fractions;   // in [0,1], non-increasing
    double total_volume = 0.0;
};

// 0.0 to 5.0 in steps of 0.05.
std::vector<double> default_thresholds();

// Strict inequality K_t > t: ties at a threshold count as below. Matters only
// for quantized fields; FE output has measure-zero ties.
ExceedanceCurve exceedance(const KtField& field, const SurfaceSlice& slice,
                           const std::vector<double>& thresholds, AnalysisMode mode);

struct CurveGap {
    double max_gap = 0.0;  // max |a - b| over the union threshold grid
    double area = 0.0;     // trapezoidal integral of |a - b|
};

// Curves on different grids are aligned by step interpolation (carry the last
// fraction forward) over the union of both grids.
CurveGap compare_curves(const ExceedanceCurve& a, const ExceedanceCurve& b);

// Two-column CSV (threshold, fraction) with a "# total_volume=..." comment so
// the curve round-trips completely.
void write_curve_csv(const std::filesystem::path& path, const ExceedanceCurve& curve);
ExceedanceCurve read_curve_csv(const std::filesystem::path& path);

}  // namespace kt
