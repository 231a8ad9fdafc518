#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kt/cluster.hpp"

namespace kt {

// LCF life model: Basquin power law on the effective stress sigma_a * K_t,eff
// with a weakest-link stressed-volume factor,
//
//   N = C * (sigma_a * K_t_eff)^(-b) * (max(V, V_floor)/V_ref)^(-1/m)
//
// K_t,eff is a high quantile of the super-threshold K_t values (1.0 when no
// pixel exceeds the cluster threshold); V_floor is one pixel's volume at the
// slice mean radius, removing the zero-volume singularity. This is a stand-in
// form: the source program's lifing model is unpublished.

struct TestCondition {
    double stress_amplitude = 0.0;  // stress units of the K_t field's nominal stress
    double stress_ratio = -1.0;     // R, in [-1, 1); carried for grouping
    std::string temperature = "";   // uncalibrated tag, grouping only

    void validate() const;
};

struct LifeModelParams {
    double c = 1.0;       // Basquin coefficient
    double b = 1.0;       // Basquin exponent, > 0
    double m = 1.0;       // stressed-volume exponent, > 0
    double v_ref = 1.0;   // reference stressed volume, > 0 (fixed input, not fitted)
    double kt_eff_quantile = 0.95;  // quantile of super-threshold K_t, in (0, 1]

    void validate() const;
};

struct LifePrediction {
    double cycles = 0.0;
    double band_lo = 0.0;  // cycles / 2
    double band_hi = 0.0;  // cycles * 2
    std::string inputs_hash;
};

// Effective concentration: quantile of features.super_kt when present, else
// the serialized kt_eff fallback, else 1.0 (no super-threshold pixels).
double kt_effective(const FeatureRecord& features, double quantile);

LifePrediction predict_life(const FeatureRecord& features, const TestCondition& condition,
                            const LifeModelParams& params);

struct Coupon {
    std::string id;
    FeatureRecord features;
    TestCondition condition;
    double observed_cycles = 0.0;   // 0 = unknown
    double predicted_cycles = 0.0;  // 0 = not predicted yet
};

struct CalibrationResult {
    LifeModelParams params;
    std::vector<double> log_residuals;  // ln(observed) - ln(fitted), per coupon
    double rms_log_residual = 0.0;
    double max_abs_log_residual = 0.0;
    int band_hits = 0;  // coupons with |log residual| <= ln 2
    int n_coupons = 0;
};

// Least-squares fit of ln N against [1, -ln(sigma_eff), -ln(V_eff/V_ref)] via
// the 3x3 normal equations; recovers (ln C, b, 1/m). V_ref and the K_t
// quantile are fixed inputs (they are not identifiable jointly with C).
CalibrationResult calibrate(const std::vector<Coupon>& coupons, double v_ref,
                            double kt_eff_quantile = 0.95);

// Coupon table CSV: id, condition, feature columns (kt_eff evaluated at the
// given quantile), observed and predicted cycles (empty when unknown).
void write_coupons_csv(const std::filesystem::path& path, const std::vector<Coupon>& coupons,
                       double kt_eff_quantile = 0.95);
std::vector<Coupon> read_coupons_csv(const std::filesystem::path& path);

}  // namespace kt
