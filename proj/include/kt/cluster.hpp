#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kt/fem.hpp"
#include "kt/slice.hpp"

namespace kt {

// Connected clusters of material pixels with K_t above a threshold, plus the
// stressed-volume summary consumed by the life model.

struct ClusterInfo {
    int id = 0;              // deterministic: ascending row-major first-pixel order
    int64_t size_pixels = 0;
    double volume = 0.0;     // um^3 (axisymmetric 2*pi*r*A weights) or um^2 (plane)
    double max_kt = 0.0;
    double centroid_r_um = 0.0;  // unweighted mean of pixel centres
    double centroid_z_um = 0.0;
    int min_row = 0, max_row = 0, min_col = 0, max_col = 0;  // inclusive bounding box
};

struct ClusterReport {
    double threshold = 2.5;
    int connectivity = 8;
    std::vector<ClusterInfo> clusters;
    std::vector<std::pair<int64_t, int64_t>> size_histogram;  // (size, count), ascending size
    double total_stressed_volume = 0.0;
    double number_density = 0.0;     // clusters per mm of axial surface length
    double floor_volume = 0.0;       // one pixel's volume at the slice mean radius (> 0)
    double axial_length_mm = 0.0;
    std::vector<double> super_kt;    // ascending K_t of every super-threshold pixel
};

struct ClusterConfig {
    double threshold = 2.5;
    int connectivity = 8;        // 8 (default: diagonal flanks stay connected) or 4
    double max_depth_um = 0.0;   // > 0: only pixels within this depth of the bore surface
};

// labels_out (optional): per-pixel cluster id, -1 where not super-threshold.
ClusterReport label_clusters(const KtField& field, const SurfaceSlice& slice,
                             const ClusterConfig& config, AnalysisMode mode,
                             Grid<int32_t>* labels_out = nullptr);

// Power-of-two size bins [1], [2,3], [4,7], ... covering [1, max size].
struct SizeBin {
    int64_t lo = 0, hi = 0;  // inclusive
    int64_t count = 0;
};
std::vector<SizeBin> size_distribution(const ClusterReport& report);

// Inputs to the life model. For an empty report the four headline statistics
// are zero; floor_volume is slice context and stays positive. kt_eff is an
// evaluated fallback carried by serialized records (CSV has no pixel list);
// records built here leave it 0 and carry super_kt instead.
struct FeatureRecord {
    double total_stressed_volume = 0.0;
    double p95_cluster_volume = 0.0;  // nearest-rank 95th percentile of cluster volumes
    double number_density = 0.0;
    double max_kt = 0.0;
    double floor_volume = 0.0;
    double kt_eff = 0.0;
    std::vector<double> super_kt;  // ascending
};

FeatureRecord stressed_volume_features(const ClusterReport& report);

// Nearest-rank quantile of an ascending-sorted sample: element ceil(q*n)-1.
double sorted_quantile(const std::vector<double>& ascending, double q);

}  // namespace kt
