#include "kt/surface.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "kt/error.hpp"
#include "kt/image_io.hpp"
#include "kt/rng.hpp"

namespace kt {

void RoughnessParams::validate() const {
    if (rms_amplitude_um < 0.0) throw ParamError("rms_amplitude must be >= 0");
    if (!(correlation_length_um > 0.0)) throw ParamError("correlation_length must be > 0");
    if (!std::isfinite(rms_amplitude_um) || !std::isfinite(correlation_length_um) ||
        !std::isfinite(mean_bore_offset_um))
        throw ParamError("roughness parameters must be finite");
}

std::vector<double> generate_profile(const RoughnessParams& params, int n_axial,
                                     double pixel_pitch_um) {
    params.validate();
    if (n_axial < 8) throw ParamError("n_axial must be >= 8");
    if (!(pixel_pitch_um > 0.0)) throw ParamError("pixel_pitch must be > 0");

    std::vector<double> profile(n_axial, params.mean_bore_offset_um);
    if (params.rms_amplitude_um == 0.0) return profile;

    Rng rng(params.seed);
    std::vector<double> noise(n_axial);
    for (auto& v : noise) v = rng.gaussian();

    // Gaussian kernel, std in pixels, truncated at 4 sigma; circular convolution
    // keeps the filtered series stationary across the ends.
    const double sigma_px = params.correlation_length_um / pixel_pitch_um;
    const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_px)));
    std::vector<double> kernel(2 * half + 1);
    for (int k = -half; k <= half; ++k)
        kernel[k + half] = std::exp(-0.5 * (k / sigma_px) * (k / sigma_px));

    std::vector<double> filtered(n_axial, 0.0);
    for (int i = 0; i < n_axial; ++i) {
        double s = 0.0;
        for (int k = -half; k <= half; ++k) {
            int idx = (i + k) % n_axial;
            if (idx < 0) idx += n_axial;
            s += kernel[k + half] * noise[idx];
        }
        filtered[i] = s;
    }

    double mean = 0.0;
    for (double v : filtered) mean += v;
    mean /= n_axial;
    double var = 0.0;
    for (double v : filtered) var += (v - mean) * (v - mean);
    var /= n_axial;

    if (var <= 0.0) return profile;  // degenerate draw, keep the flat mean surface

    const double scale = params.rms_amplitude_um / std::sqrt(var);
    for (int i = 0; i < n_axial; ++i)
        profile[i] = params.mean_bore_offset_um + (filtered[i] - mean) * scale;
    return profile;
}

SurfaceSlice rasterize(const std::vector<double>& profile_um, int width_pixels,
                       double pixel_pitch_um, double r_inner_nominal_um) {
    if (profile_um.size() < 8) throw ParamError("profile must have >= 8 samples");
    if (width_pixels < 8) throw ParamError("width_pixels must be >= 8");
    if (!(pixel_pitch_um > 0.0)) throw ParamError("pixel_pitch must be > 0");
    if (r_inner_nominal_um < 0.0) throw ParamError("r_inner_nominal must be >= 0");

    const double max_h = *std::max_element(profile_um.begin(), profile_um.end());
    if (!(max_h < width_pixels * pixel_pitch_um))
        throw GeometryError("profile height exceeds grid width: " + std::to_string(max_h) +
                            " um vs " + std::to_string(width_pixels * pixel_pitch_um) + " um");

    const int rows = static_cast<int>(profile_um.size());
    SurfaceSlice slice;
    slice.mask = MaskGrid(rows, width_pixels, kMaterial);
    slice.pixel_pitch_um = pixel_pitch_um;
    slice.r_inner_nominal_um = r_inner_nominal_um;
    for (int i = 0; i < rows; ++i) {
        const double h = profile_um[i];
        for (int j = 0; j < width_pixels; ++j) {
            if ((j + 0.5) * pixel_pitch_um < h)
                slice.mask(i, j) = kVoid;
            else
                break;  // profile masks a contiguous run from the bore side
        }
    }
    return slice;
}

SurfaceSlice generate_slice(const RoughnessParams& params, int n_axial, int width_pixels,
                            double pixel_pitch_um, double r_inner_nominal_um) {
    const auto profile = generate_profile(params, n_axial, pixel_pitch_um);
    SurfaceSlice slice = rasterize(profile, width_pixels, pixel_pitch_um, r_inner_nominal_um);
    slice.meta.seed = params.seed;
    slice.meta.rms_amplitude_um = params.rms_amplitude_um;
    slice.meta.correlation_length_um = params.correlation_length_um;
    slice.meta.mean_bore_offset_um = params.mean_bore_offset_um;
    slice.meta.source = "generated";
    return slice;
}

double mean_bore_depth_um(const SurfaceSlice& slice) {
    double total_px = 0.0;
    for (int i = 0; i < slice.rows(); ++i) {
        int d = 0;
        while (d < slice.cols() && slice.mask(i, d) == kVoid) ++d;
        total_px += d;
    }
    return total_px / slice.rows() * slice.pixel_pitch_um;
}

double material_fraction(const SurfaceSlice& slice) {
    size_t n = 0;
    for (uint8_t v : slice.mask.data()) n += (v != kVoid);
    return static_cast<double>(n) / slice.mask.size();
}

void save_slice(const SurfaceSlice& slice, const std::string& path) {
    if (slice.rows() < 8 || slice.cols() < 8) throw ParamError("slice must be at least 8x8");
    write_pgm(path, slice.mask);
    nlohmann::ordered_json meta;
    meta["pixel_pitch_um"] = slice.pixel_pitch_um;
    meta["r_inner_nominal_um"] = slice.r_inner_nominal_um;
    meta["seed"] = slice.meta.seed;
    meta["generator"] = {
        {"rms_amplitude_um", slice.meta.rms_amplitude_um},
        {"correlation_length_um", slice.meta.correlation_length_um},
        {"mean_bore_offset_um", slice.meta.mean_bore_offset_um},
        {"source", slice.meta.source},
    };
    meta["rows"] = slice.rows();
    meta["cols"] = slice.cols();
    std::ofstream f(sidecar_path(path));
    if (!f) throw IoError("cannot write sidecar: " + sidecar_path(path));
    f << meta.dump(2) << "\n";
}

SurfaceSlice load_slice(const std::string& path) {
    SurfaceSlice slice;
    slice.mask = read_pgm(path);
    if (slice.rows() < 8 || slice.cols() < 8)
        throw FormatError("slice smaller than 8x8: " + path);

    const std::string meta_path = sidecar_path(path);
    std::ifstream f(meta_path);
    if (!f) throw IoError("missing sidecar metadata: " + meta_path);
    nlohmann::json meta;
    try {
        f >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed sidecar " + meta_path + ": " + e.what());
    }
    try {
        slice.pixel_pitch_um = meta.at("pixel_pitch_um").get<double>();
        slice.r_inner_nominal_um = meta.at("r_inner_nominal_um").get<double>();
        slice.meta.seed = meta.value("seed", uint64_t{0});
        if (meta.contains("generator")) {
            const auto& g = meta["generator"];
            slice.meta.rms_amplitude_um = g.value("rms_amplitude_um", 0.0);
            slice.meta.correlation_length_um = g.value("correlation_length_um", 0.0);
            slice.meta.mean_bore_offset_um = g.value("mean_bore_offset_um", 0.0);
            slice.meta.source = g.value("source", std::string{});
        }
        if (meta.contains("rows") &&
            (meta["rows"].get<int>() != slice.rows() || meta["cols"].get<int>() != slice.cols()))
            throw FormatError("sidecar dimensions disagree with image: " + path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("sidecar missing required fields in " + meta_path + ": " + e.what());
    }
    if (!(slice.pixel_pitch_um > 0.0) || slice.r_inner_nominal_um < 0.0)
        throw FormatError("invalid geometry in sidecar: " + meta_path);
    return slice;
}

}  // namespace kt
