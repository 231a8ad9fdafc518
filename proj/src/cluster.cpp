#include "kt/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "kt/error.hpp"

namespace kt {

namespace {

struct UnionFind {
    std::vector<int32_t> parent;

    explicit UnionFind(size_t n) : parent(n) {
        for (size_t i = 0; i < n; ++i) parent[i] = int32_t(i);
    }
    int32_t find(int32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];  // path halving
            a = parent[a];
        }
        return a;
    }
    // Union by smaller root index so the representative is always the
    // row-major-first pixel of the merged set.
    void merge(int32_t a, int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

}  // namespace

ClusterReport label_clusters(const KtField& field, const SurfaceSlice& slice,
                             const ClusterConfig& config, AnalysisMode mode,
                             Grid<int32_t>* labels_out) {
    if (!field.values.same_shape(slice.mask))
        throw GeometryError("K_t field and slice have mismatched shapes");
    if (!(config.threshold > 0.0)) throw ParamError("cluster threshold must be positive");
    if (config.connectivity != 4 && config.connectivity != 8)
        throw ParamError("connectivity must be 4 or 8");
    if (config.max_depth_um < 0.0) throw ParamError("max_depth_um must be non-negative");

    const int rows = slice.rows(), cols = slice.cols();
    const double p = slice.pixel_pitch_um;

    // Depth gate: distance of a pixel centre from the first material pixel of
    // its row, measured from the bore side.
    std::vector<int> first_mat(rows, cols);
    if (config.max_depth_um > 0.0)
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                if (slice.is_material(i, j)) {
                    first_mat[i] = j;
                    break;
                }

    Grid<uint8_t> super(rows, cols, 0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            if (!slice.is_material(i, j)) continue;
            const double kt = field.values(i, j);
            if (!std::isfinite(kt) || !(kt > config.threshold)) continue;
            if (config.max_depth_um > 0.0 &&
                (j - first_mat[i] + 0.5) * p > config.max_depth_um)
                continue;
            super(i, j) = 1;
        }

    UnionFind uf(size_t(rows) * cols);
    auto idx = [cols](int i, int j) { return int32_t(i * cols + j); };
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            if (!super(i, j)) continue;
            if (j > 0 && super(i, j - 1)) uf.merge(idx(i, j), idx(i, j - 1));
            if (i > 0) {
                if (super(i - 1, j)) uf.merge(idx(i, j), idx(i - 1, j));
                if (config.connectivity == 8) {
                    if (j > 0 && super(i - 1, j - 1)) uf.merge(idx(i, j), idx(i - 1, j - 1));
                    if (j < cols - 1 && super(i - 1, j + 1)) uf.merge(idx(i, j), idx(i - 1, j + 1));
                }
            }
        }

    ClusterReport report;
    report.threshold = config.threshold;
    report.connectivity = config.connectivity;
    report.axial_length_mm = rows * p / 1000.0;

    if (labels_out) *labels_out = Grid<int32_t>(rows, cols, -1);
    std::map<int32_t, int> root_to_id;  // roots in row-major order -> dense ids
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            if (!super(i, j)) continue;
            const int32_t root = uf.find(idx(i, j));
            auto [it, inserted] = root_to_id.emplace(root, 0);
            if (inserted) {
                it->second = int(report.clusters.size());
                ClusterInfo c;
                c.id = it->second;
                c.min_row = c.max_row = i;
                c.min_col = c.max_col = j;
                report.clusters.push_back(c);
            }
            ClusterInfo& c = report.clusters[it->second];
            if (labels_out) (*labels_out)(i, j) = c.id;
            const double r = slice.r_center_um(j), z = slice.z_center_um(i);
            const double vol =
                mode == AnalysisMode::axisymmetric ? 2.0 * std::numbers::pi * r * p * p : p * p;
            c.size_pixels += 1;
            c.volume += vol;
            c.max_kt = std::max(c.max_kt, field.values(i, j));
            c.centroid_r_um += r;
            c.centroid_z_um += z;
            c.min_row = std::min(c.min_row, i);
            c.max_row = std::max(c.max_row, i);
            c.min_col = std::min(c.min_col, j);
            c.max_col = std::max(c.max_col, j);
            report.total_stressed_volume += vol;
            report.super_kt.push_back(field.values(i, j));
        }

    // Roots were found in row-major scan order but a later pixel can attach to
    // an earlier root, so ids assigned above already follow first-pixel order.
    for (ClusterInfo& c : report.clusters) {
        c.centroid_r_um /= double(c.size_pixels);
        c.centroid_z_um /= double(c.size_pixels);
    }
    std::sort(report.super_kt.begin(), report.super_kt.end());

    std::map<int64_t, int64_t> hist;
    for (const ClusterInfo& c : report.clusters) ++hist[c.size_pixels];
    report.size_histogram.assign(hist.begin(), hist.end());

    report.number_density = report.clusters.empty()
                                ? 0.0
                                : double(report.clusters.size()) / report.axial_length_mm;

    const double r_mean = 0.5 * (slice.r_inner_nominal_um + slice.r_outer_um());
    report.floor_volume =
        mode == AnalysisMode::axisymmetric ? 2.0 * std::numbers::pi * r_mean * p * p : p * p;
    return report;
}

std::vector<SizeBin> size_distribution(const ClusterReport& report) {
    std::vector<SizeBin> bins;
    if (report.clusters.empty()) return bins;
    int64_t max_size = 1;
    for (const ClusterInfo& c : report.clusters) max_size = std::max(max_size, c.size_pixels);
    for (int64_t lo = 1; lo <= max_size; lo *= 2)
        bins.push_back({lo, 2 * lo - 1, 0});
    for (const ClusterInfo& c : report.clusters) {
        size_t b = 0;
        while (bins[b].hi < c.size_pixels) ++b;
        ++bins[b].count;
    }
    return bins;
}

double sorted_quantile(const std::vector<double>& ascending, double q) {
    if (ascending.empty()) throw ParamError("quantile of an empty sample");
    if (!(q > 0.0) || !(q <= 1.0)) throw ParamError("quantile must lie in (0, 1]");
    const auto n = int64_t(ascending.size());
    int64_t rank = int64_t(std::ceil(q * double(n)));
    rank = std::clamp<int64_t>(rank, 1, n);
    return ascending[size_t(rank - 1)];
}

FeatureRecord stressed_volume_features(const ClusterReport& report) {
    FeatureRecord f;
    f.floor_volume = report.floor_volume;
    if (report.clusters.empty()) return f;
    f.total_stressed_volume = report.total_stressed_volume;
    f.number_density = report.number_density;
    std::vector<double> volumes;
    volumes.reserve(report.clusters.size());
    for (const ClusterInfo& c : report.clusters) {
        volumes.push_back(c.volume);
        f.max_kt = std::max(f.max_kt, c.max_kt);
    }
    std::sort(volumes.begin(), volumes.end());
    f.p95_cluster_volume = sorted_quantile(volumes, 0.95);
    f.super_kt = report.super_kt;
    return f;
}

}  // namespace kt
