#include "kt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "kt/error.hpp"

namespace kt {

std::vector<double> default_thresholds() {
    std::vector<double> t;
    t.reserve(101);
    for (int i = 0; i <= 100; ++i) t.push_back(i * 0.05);
    return t;
}

namespace {

void check_thresholds(const std::vector<double>& t) {
    if (t.empty()) throw ParamError("threshold list must be nonempty");
    for (size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) throw ParamError("thresholds must be finite");
        if (i > 0 && !(t[i] > t[i - 1]))
            throw ParamError("thresholds must be strictly ascending");
    }
}

}  // namespace

ExceedanceCurve exceedance(const KtField& field, const SurfaceSlice& slice,
                           const std::vector<double>& thresholds, AnalysisMode mode) {
    if (!field.values.same_shape(slice.mask))
        throw GeometryError("K_t field and slice have mismatched shapes");
    check_thresholds(thresholds);

    const int rows = slice.rows(), cols = slice.cols();
    std::vector<std::pair<double, double>> kt_w;  // (kt, weight)
    kt_w.reserve(size_t(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            if (!slice.is_material(i, j)) continue;
            const double kt = field.values(i, j);
            if (!std::isfinite(kt))
                throw FormatError("non-finite K_t on a material pixel");
            const double w =
                mode == AnalysisMode::axisymmetric ? slice.r_center_um(j) : 1.0;
            kt_w.emplace_back(kt, w);
        }

    ExceedanceCurve curve;
    curve.thresholds = thresholds;
    curve.fractions.assign(thresholds.size(), 0.0);
    if (kt_w.empty()) return curve;

    std::sort(kt_w.begin(), kt_w.end());
    const size_t n = kt_w.size();
    std::vector<double> suffix(n + 1, 0.0);  // suffix[i] = sum of weights from i on
    for (size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + kt_w[i].second;
    const double total_w = suffix[0];

    for (size_t ti = 0; ti < thresholds.size(); ++ti) {
        const double t = thresholds[ti];
        const auto it = std::upper_bound(
            kt_w.begin(), kt_w.end(), t,
            [](double v, const std::pair<double, double>& e) { return v < e.first; });
        curve.fractions[ti] = suffix[size_t(it - kt_w.begin())] / total_w;
    }

    const double p2 = slice.pixel_pitch_um * slice.pixel_pitch_um;
    curve.total_volume = mode == AnalysisMode::axisymmetric
                             ? 2.0 * std::numbers::pi * p2 * total_w
                             : p2 * total_w;
    return curve;
}

namespace {

// Step interpolation: curve value at t is the fraction at the largest known
// threshold <= t; before the first threshold, the first fraction.
double step_eval(const ExceedanceCurve& c, double t) {
    const auto it = std::upper_bound(c.thresholds.begin(), c.thresholds.end(), t);
    if (it == c.thresholds.begin()) return c.fractions.front();
    return c.fractions[size_t(it - c.thresholds.begin()) - 1];
}

}  // namespace

CurveGap compare_curves(const ExceedanceCurve& a, const ExceedanceCurve& b) {
    if (a.thresholds.empty() || b.thresholds.empty())
        throw ParamError("cannot compare empty exceedance curves");
    if (a.thresholds.size() != a.fractions.size() || b.thresholds.size() != b.fractions.size())
        throw ParamError("exceedance curve has mismatched threshold/fraction lengths");

    std::vector<double> grid;
    grid.reserve(a.thresholds.size() + b.thresholds.size());
    grid.insert(grid.end(), a.thresholds.begin(), a.thresholds.end());
    grid.insert(grid.end(), b.thresholds.begin(), b.thresholds.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    CurveGap out;
    double prev_t = 0.0, prev_d = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double d = std::abs(step_eval(a, grid[i]) - step_eval(b, grid[i]));
        out.max_gap = std::max(out.max_gap, d);
        if (i > 0) out.area += 0.5 * (d + prev_d) * (grid[i] - prev_t);
        prev_t = grid[i];
        prev_d = d;
    }
    return out;
}

void write_curve_csv(const std::filesystem::path& path, const ExceedanceCurve& curve) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    char buf[96];
    std::snprintf(buf, sizeof buf, "# total_volume=%.17g\n", curve.total_volume);
    out << buf << "threshold,fraction\n";
    for (size_t i = 0; i < curve.thresholds.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", curve.thresholds[i], curve.fractions[i]);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path.string());
}

ExceedanceCurve read_curve_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    ExceedanceCurve curve;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (const auto pos = line.find("total_volume="); pos != std::string::npos)
                curve.total_volume = std::strtod(line.c_str() + pos + 13, nullptr);
            continue;
        }
        if (line == "threshold,fraction") continue;
        char* end = nullptr;
        const double t = std::strtod(line.c_str(), &end);
        if (!end || *end != ',')
            throw FormatError("malformed curve CSV line in " + path.string() + ": " + line);
        const double f = std::strtod(end + 1, &end);
        curve.thresholds.push_back(t);
        curve.fractions.push_back(f);
    }
    if (curve.thresholds.empty())
        throw FormatError("curve CSV contains no data rows: " + path.string());
    check_thresholds(curve.thresholds);
    return curve;
}

}  // namespace kt
