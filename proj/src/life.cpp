#include "kt/life.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kt/error.hpp"
#include "kt/hash.hpp"

namespace kt {

void TestCondition::validate() const {
    if (!(stress_amplitude > 0.0) || !std::isfinite(stress_amplitude))
        throw ParamError("stress_amplitude must be positive and finite");
    if (!(stress_ratio >= -1.0) || !(stress_ratio < 1.0))
        throw ParamError("stress_ratio must lie in [-1, 1)");
}

void LifeModelParams::validate() const {
    const double vals[] = {c, b, m, v_ref};
    for (double v : vals)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ParamError("life model parameters must be positive and finite");
    if (!(kt_eff_quantile > 0.0) || !(kt_eff_quantile <= 1.0))
        throw ParamError("kt_eff_quantile must lie in (0, 1]");
}

double kt_effective(const FeatureRecord& features, double quantile) {
    if (!features.super_kt.empty()) return sorted_quantile(features.super_kt, quantile);
    if (features.kt_eff > 0.0) return features.kt_eff;
    return 1.0;
}

namespace {

void validate_features(const FeatureRecord& f) {
    if (!(f.floor_volume > 0.0) || !std::isfinite(f.floor_volume))
        throw ParamError("features.floor_volume must be positive");
    if (!(f.total_stressed_volume >= 0.0) || !std::isfinite(f.total_stressed_volume))
        throw ParamError("features.total_stressed_volume must be finite and >= 0");
}

double effective_volume_ratio(const FeatureRecord& f, double v_ref) {
    return std::max(f.total_stressed_volume, f.floor_volume) / v_ref;
}

std::string hash_inputs(const FeatureRecord& f, const TestCondition& c,
                        const LifeModelParams& p) {
    const double nums[] = {f.total_stressed_volume,
                           f.p95_cluster_volume,
                           f.number_density,
                           f.max_kt,
                           f.floor_volume,
                           c.stress_amplitude,
                           c.stress_ratio,
                           p.c,
                           p.b,
                           p.m,
                           p.v_ref,
                           p.kt_eff_quantile};
    uint64_t h = fnv1a64(nums, sizeof nums);
    h = fnv1a64(c.temperature.data(), c.temperature.size(), h);
    if (!f.super_kt.empty())
        h = fnv1a64(f.super_kt.data(), f.super_kt.size() * sizeof(double), h);
    return hex64(h);
}

}  // namespace

LifePrediction predict_life(const FeatureRecord& features, const TestCondition& condition,
                            const LifeModelParams& params) {
    condition.validate();
    params.validate();
    validate_features(features);

    const double kt = kt_effective(features, params.kt_eff_quantile);
    const double sigma_eff = condition.stress_amplitude * kt;
    const double v_eff = effective_volume_ratio(features, params.v_ref);
    const double n =
        params.c * std::pow(sigma_eff, -params.b) * std::pow(v_eff, -1.0 / params.m);
    if (!(n > 0.0) || !std::isfinite(n))
        throw ParamError("life prediction is not a positive finite cycle count");

    LifePrediction out;
    out.cycles = n;
    out.band_lo = n / 2.0;
    out.band_hi = n * 2.0;
    out.inputs_hash = hash_inputs(features, condition, params);
    return out;
}

namespace {

// Solve a 3x3 linear system by Gaussian elimination with partial pivoting.
std::array<double, 3> solve3(std::array<std::array<double, 4>, 3> m) {
    double scale = 0.0;
    for (const auto& row : m)
        for (int j = 0; j < 3; ++j) scale = std::max(scale, std::abs(row[j]));
    for (int k = 0; k < 3; ++k) {
        int piv = k;
        for (int i = k + 1; i < 3; ++i)
            if (std::abs(m[i][k]) > std::abs(m[piv][k])) piv = i;
        if (std::abs(m[piv][k]) <= 1e-12 * scale)
            throw ParamError(
                "degenerate calibration design: coupons do not span the model inputs");
        std::swap(m[k], m[piv]);
        for (int i = k + 1; i < 3; ++i) {
            const double f = m[i][k] / m[k][k];
            for (int j = k; j < 4; ++j) m[i][j] -= f * m[k][j];
        }
    }
    std::array<double, 3> x{};
    for (int k = 2; k >= 0; --k) {
        double s = m[k][3];
        for (int j = k + 1; j < 3; ++j) s -= m[k][j] * x[j];
        x[k] = s / m[k][k];
    }
    return x;
}

}  // namespace

CalibrationResult calibrate(const std::vector<Coupon>& coupons, double v_ref,
                            double kt_eff_quantile) {
    if (coupons.size() < 4)
        throw ParamError("calibration needs at least 4 labeled coupons");
    if (!(v_ref > 0.0) || !std::isfinite(v_ref)) throw ParamError("v_ref must be positive");
    if (!(kt_eff_quantile > 0.0) || !(kt_eff_quantile <= 1.0))
        throw ParamError("kt_eff_quantile must lie in (0, 1]");

    std::vector<double> distinct_sigma;
    for (const Coupon& cp : coupons) {
        cp.condition.validate();
        validate_features(cp.features);
        if (!(cp.observed_cycles > 0.0) || !std::isfinite(cp.observed_cycles))
            throw ParamError("coupon " + cp.id + " has no positive observed cycle count");
        if (std::find(distinct_sigma.begin(), distinct_sigma.end(),
                      cp.condition.stress_amplitude) == distinct_sigma.end())
            distinct_sigma.push_back(cp.condition.stress_amplitude);
    }
    if (distinct_sigma.size() < 2)
        throw ParamError("calibration needs coupons spanning at least 2 stress levels");

    // Regressors x = [1, -ln sigma_eff, -ln v_eff]; y = ln N. Normal equations
    // X'X theta = X'y for theta = (ln C, b, 1/m).
    std::array<std::array<double, 4>, 3> ne{};
    const size_t n = coupons.size();
    std::vector<std::array<double, 3>> xs(n);
    std::vector<double> ys(n);
    for (size_t i = 0; i < n; ++i) {
        const Coupon& cp = coupons[i];
        const double kt = kt_effective(cp.features, kt_eff_quantile);
        xs[i] = {1.0, -std::log(cp.condition.stress_amplitude * kt),
                 -std::log(effective_volume_ratio(cp.features, v_ref))};
        ys[i] = std::log(cp.observed_cycles);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) ne[r][c] += xs[i][r] * xs[i][c];
            ne[r][3] += xs[i][r] * ys[i];
        }
    }
    const std::array<double, 3> theta = solve3(ne);
    if (!(theta[1] > 0.0) || !(theta[2] > 0.0))
        throw ParamError("calibration produced non-physical exponents; check the coupon data");

    CalibrationResult out;
    out.params.c = std::exp(theta[0]);
    out.params.b = theta[1];
    out.params.m = 1.0 / theta[2];
    out.params.v_ref = v_ref;
    out.params.kt_eff_quantile = kt_eff_quantile;
    out.params.validate();

    out.n_coupons = int(n);
    out.log_residuals.resize(n);
    double ss = 0.0;
    const double ln2 = std::log(2.0);
    for (size_t i = 0; i < n; ++i) {
        const double fit = theta[0] * xs[i][0] + theta[1] * xs[i][1] + theta[2] * xs[i][2];
        const double r = ys[i] - fit;
        out.log_residuals[i] = r;
        ss += r * r;
        out.max_abs_log_residual = std::max(out.max_abs_log_residual, std::abs(r));
        if (std::abs(r) <= ln2) ++out.band_hits;
    }
    out.rms_log_residual = std::sqrt(ss / double(n));
    return out;
}

namespace {

const char* kCsvHeader =
    "coupon_id,stress_amplitude,stress_ratio,temperature,total_stressed_volume,"
    "p95_cluster_volume,number_density,max_kt,kt_eff,floor_volume,observed_cycles,"
    "predicted_cycles";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& what,
                 const std::filesystem::path& path) {
    if (s.empty()) return 0.0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (!end || *end != '\0')
        throw FormatError("bad " + what + " value '" + s + "' in " + path.string());
    return v;
}

}  // namespace

void write_coupons_csv(const std::filesystem::path& path, const std::vector<Coupon>& coupons,
                       double kt_eff_quantile) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << kCsvHeader << '\n';
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const Coupon& cp : coupons) {
        if (cp.id.find(',') != std::string::npos || cp.condition.temperature.find(',') != std::string::npos)
            throw FormatError("coupon id and temperature must not contain commas");
        const FeatureRecord& f = cp.features;
        out << cp.id << ',' << num(cp.condition.stress_amplitude) << ','
            << num(cp.condition.stress_ratio) << ',' << cp.condition.temperature << ','
            << num(f.total_stressed_volume) << ',' << num(f.p95_cluster_volume) << ','
            << num(f.number_density) << ',' << num(f.max_kt) << ','
            << num(kt_effective(f, kt_eff_quantile)) << ',' << num(f.floor_volume) << ','
            << (cp.observed_cycles > 0 ? num(cp.observed_cycles) : "") << ','
            << (cp.predicted_cycles > 0 ? num(cp.predicted_cycles) : "") << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Coupon> read_coupons_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string line;
    std::vector<Coupon> out;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != kCsvHeader)
                throw FormatError("unexpected coupon CSV header in " + path.string());
            saw_header = true;
            continue;
        }
        const auto fields = split_csv(line);
        if (fields.size() != 12)
            throw FormatError("coupon CSV row has " + std::to_string(fields.size()) +
                              " fields, expected 12: " + path.string());
        Coupon cp;
        cp.id = fields[0];
        cp.condition.stress_amplitude = parse_num(fields[1], "stress_amplitude", path);
        cp.condition.stress_ratio = parse_num(fields[2], "stress_ratio", path);
        cp.condition.temperature = fields[3];
        cp.features.total_stressed_volume = parse_num(fields[4], "total_stressed_volume", path);
        cp.features.p95_cluster_volume = parse_num(fields[5], "p95_cluster_volume", path);
        cp.features.number_density = parse_num(fields[6], "number_density", path);
        cp.features.max_kt = parse_num(fields[7], "max_kt", path);
        cp.features.kt_eff = parse_num(fields[8], "kt_eff", path);
        cp.features.floor_volume = parse_num(fields[9], "floor_volume", path);
        cp.observed_cycles = parse_num(fields[10], "observed_cycles", path);
        cp.predicted_cycles = parse_num(fields[11], "predicted_cycles", path);
        out.push_back(std::move(cp));
    }
    if (!saw_header) throw FormatError("coupon CSV has no header: " + path.string());
    return out;
}

}  // namespace kt
