#pragma once

#include <vector>

#include "kt/csr.hpp"
#include "kt/slice.hpp"

namespace kt {

// Linear-elastic oracle on the structured pixel mesh. One 4-node bilinear quad
// per material pixel, 2x2 Gauss quadrature, two displacement DOFs per node
// (u_r, u_z), DOFs numbered row-major over the node grid.
//
// Conventions:
//   - lengths in micrometers, stresses in the units of youngs_modulus;
//   - axisymmetric mode includes the hoop strain u_r/r with r at Gauss points;
//   - bottom edge u_z = 0; top edge uniform axial traction (default) or
//     uniform axial displacement; bore and outer surfaces traction-free;
//   - plane-stress mode additionally pins u_r at one bottom node to remove the
//     in-plane translation mode (axisymmetric mode has no such mode: the hoop
//     term already fixes radial translation, and a pin would perturb the
//     homogeneous solution);
//   - with r_inner_nominal = 0 the axis nodes carry the constraint u_r = 0.

struct Material {
    double youngs_modulus = 1.0;  // K_t is independent of E for homogeneous elasticity
    double poisson_ratio = 0.30;

    void validate() const;
};

enum class AnalysisMode { axisymmetric, plane_stress };

enum class BcKind { traction, displacement };

struct SolveConfig {
    AnalysisMode mode = AnalysisMode::axisymmetric;
    BcKind bc = BcKind::traction;
    double bc_value = 1.0;  // applied axial traction, or applied axial displacement
    double cg_rel_tol = 1e-8;
    int cg_max_iters = 200000;

    void validate() const;
};

// Assembled, constrained SPD system plus what reaction evaluation needs.
struct FemSystem {
    Csr k;
    std::vector<double> f;
    int pixel_rows = 0;
    int pixel_cols = 0;
    double pixel_pitch_um = 0.0;
    double r_inner_um = 0.0;
    AnalysisMode mode = AnalysisMode::axisymmetric;
    int64_t n_dofs = 0;
    int64_t n_elements = 0;
};

struct SolveResult {
    std::vector<double> u;  // all DOFs, constrained values included
    int iterations = 0;
    double rel_residual = 0.0;
    double seconds = 0.0;
};

struct SolveTimings {
    double assemble_s = 0.0;
    double solve_s = 0.0;
    double recovery_s = 0.0;
    int cg_iterations = 0;

    double total_s() const { return assemble_s + solve_s + recovery_s; }
};

FemSystem assemble(const SurfaceSlice& slice, const Material& material, const SolveConfig& config);

SolveResult solve(const FemSystem& system, const SolveConfig& config);

// Element stresses = mean of the four Gauss-point stresses; K_t = sigma_1 /
// sigma_nominal with sigma_nominal = total axial force / nominal net section
// (annulus from r_inner + mean bore depth to the outer radius).
KtField stress_recovery(const std::vector<double>& u, const SurfaceSlice& slice,
                        const Material& material, const SolveConfig& config);

// assemble + solve + stress_recovery with a timing record.
KtField solve_slice(const SurfaceSlice& slice, const Material& material, const SolveConfig& config,
                    SolveTimings* timings = nullptr);

// Sum of internal axial forces carried by the nodes of the top or bottom edge.
// Equals the applied force at equilibrium; used for reactions and sigma_nominal
// under displacement control.
double edge_axial_force(const std::vector<double>& u, const SurfaceSlice& slice,
                        const Material& material, const SolveConfig& config, bool top_edge);

// Total applied axial force under traction control (traction x loaded top area).
double applied_axial_force(const SurfaceSlice& slice, const SolveConfig& config);

// Nominal net cross-section area: annulus (axisymmetric) or net width x unit
// thickness (plane stress), measured from the mean bore surface.
double nominal_net_area(const SurfaceSlice& slice, AnalysisMode mode);

}  // namespace kt
