#include "kt/fem.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "kt/parallel.hpp"

namespace kt {

void Material::validate() const {
    if (!(youngs_modulus > 0.0) || !std::isfinite(youngs_modulus))
        throw ParamError("youngs_modulus must be positive and finite");
    if (!(poisson_ratio > -1.0) || !(poisson_ratio < 0.5))
        throw ParamError("poisson_ratio must lie in (-1, 0.5)");
}

void SolveConfig::validate() const {
    if (!std::isfinite(bc_value) || bc_value == 0.0)
        throw ParamError("bc_value must be finite and nonzero");
    if (!(cg_rel_tol > 0.0) || !(cg_rel_tol <= 0.1))
        throw ParamError("cg_rel_tol must lie in (0, 0.1]");
    if (cg_max_iters < 1) throw ParamError("cg_max_iters must be >= 1");
}

namespace {

constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

// Gauss points in (xi, eta); xi runs along r, eta along z.
constexpr double kGp[4][2] = {
    {-kGauss, -kGauss}, {kGauss, -kGauss}, {kGauss, kGauss}, {-kGauss, kGauss}};

// Local node order: 0=(r0,z0) 1=(r1,z0) 2=(r1,z1) 3=(r0,z1).
inline void shape(double xi, double eta, double n[4], double dxi[4], double deta[4]) {
    n[0] = 0.25 * (1 - xi) * (1 - eta);
    n[1] = 0.25 * (1 + xi) * (1 - eta);
    n[2] = 0.25 * (1 + xi) * (1 + eta);
    n[3] = 0.25 * (1 - xi) * (1 + eta);
    dxi[0] = -0.25 * (1 - eta);
    dxi[1] = 0.25 * (1 - eta);
    dxi[2] = 0.25 * (1 + eta);
    dxi[3] = -0.25 * (1 + eta);
    deta[0] = -0.25 * (1 - xi);
    deta[1] = -0.25 * (1 + xi);
    deta[2] = 0.25 * (1 + xi);
    deta[3] = 0.25 * (1 - xi);
}

// Element kernel: D matrix plus B/Ke evaluation for a square pixel of pitch p
// whose left edge sits at radius r0. Strain ordering:
//   axisymmetric: [e_rr, e_zz, g_rz, e_tt]   plane stress: [e_xx, e_yy, g_xy]
struct ElemKernel {
    AnalysisMode mode;
    int ns;  // number of strain components
    double d[4][4] = {};
    double p;

    ElemKernel(AnalysisMode mode_, const Material& m, double pitch) : mode(mode_), p(pitch) {
        const double e = m.youngs_modulus, nu = m.poisson_ratio;
        if (mode == AnalysisMode::axisymmetric) {
            ns = 4;
            const double lam = e * nu / ((1 + nu) * (1 - 2 * nu));
            const double mu = e / (2 * (1 + nu));
            d[0][0] = d[1][1] = d[3][3] = lam + 2 * mu;
            d[0][1] = d[1][0] = d[0][3] = d[3][0] = d[1][3] = d[3][1] = lam;
            d[2][2] = mu;
        } else {
            ns = 3;
            const double c = e / (1 - nu * nu);
            d[0][0] = d[1][1] = c;
            d[0][1] = d[1][0] = c * nu;
            d[2][2] = c * (1 - nu) / 2;
        }
    }

    // B (ns x 8) at Gauss point gp for an element with left edge at r0; also
    // returns the quadrature scale: detJ (* 2*pi*r when axisymmetric).
    void bmat(int gp, double r0, double b[4][8], double* scale) const {
        double n[4], dxi[4], deta[4];
        shape(kGp[gp][0], kGp[gp][1], n, dxi, deta);
        const double inv = 2.0 / p;  // d(xi)/dr = d(eta)/dz
        std::memset(b, 0, sizeof(double) * 4 * 8);
        const double r = r0 + 0.5 * (1 + kGp[gp][0]) * p;
        for (int a = 0; a < 4; ++a) {
            const double dr = dxi[a] * inv, dz = deta[a] * inv;
            b[0][2 * a] = dr;
            b[1][2 * a + 1] = dz;
            b[2][2 * a] = dz;
            b[2][2 * a + 1] = dr;
            if (mode == AnalysisMode::axisymmetric) b[3][2 * a] = n[a] / r;
        }
        const double det_j = p * p / 4.0;
        *scale =
            mode == AnalysisMode::axisymmetric ? det_j * 2.0 * std::numbers::pi * r : det_j;
    }

    // 8x8 stiffness, row-major in ke[64].
    void ke(double r0, double* ke_out) const {
        std::fill(ke_out, ke_out + 64, 0.0);
        double b[4][8], db[4][8];
        for (int g = 0; g < 4; ++g) {
            double scale;
            bmat(g, r0, b, &scale);
            for (int s = 0; s < ns; ++s)
                for (int c = 0; c < 8; ++c) {
                    double acc = 0;
                    for (int t = 0; t < ns; ++t) acc += d[s][t] * b[t][c];
                    db[s][c] = acc;
                }
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 8; ++c) {
                    double acc = 0;
                    for (int s = 0; s < ns; ++s) acc += b[s][r] * db[s][c];
                    ke_out[r * 8 + c] += scale * acc;
                }
        }
    }

    // Stress tensor averaged over the four Gauss points, from element
    // displacements ue[8]. sigma[ns] in the strain ordering above.
    void mean_stress(double r0, const double* ue, double sigma[4]) const {
        double b[4][8];
        std::fill(sigma, sigma + 4, 0.0);
        for (int g = 0; g < 4; ++g) {
            double scale;
            bmat(g, r0, b, &scale);
            double eps[4] = {};
            for (int s = 0; s < ns; ++s)
                for (int c = 0; c < 8; ++c) eps[s] += b[s][c] * ue[c];
            for (int s = 0; s < ns; ++s)
                for (int t = 0; t < ns; ++t) sigma[s] += 0.25 * d[s][t] * eps[t];
        }
    }
};

inline int64_t node_id(int i, int j, int cols) { return int64_t(i) * (cols + 1) + j; }

// Net section must be one 4-connected piece of material joining the bottom and
// top pixel rows; anything else (islands, a severed section) has no meaningful
// load path and the system would be singular or trivially unloaded.
void check_connectivity(const SurfaceSlice& slice) {
    const int rows = slice.rows(), cols = slice.cols();
    int64_t material = 0;
    int start_i = -1, start_j = -1;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            if (slice.is_material(i, j)) {
                ++material;
                if (start_i < 0) start_i = i, start_j = j;
            }
    if (material == 0) throw GeometryError("slice contains no material pixels");

    Grid<uint8_t> seen(rows, cols, 0);
    std::vector<std::pair<int, int>> stack;
    stack.emplace_back(start_i, start_j);
    seen(start_i, start_j) = 1;
    int64_t reached = 0;
    bool hit_bottom = false, hit_top = false;
    while (!stack.empty()) {
        auto [i, j] = stack.back();
        stack.pop_back();
        ++reached;
        hit_bottom |= i == 0;
        hit_top |= i == rows - 1;
        constexpr int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int ni = i + di[k], nj = j + dj[k];
            if (ni < 0 || ni >= rows || nj < 0 || nj >= cols) continue;
            if (seen(ni, nj) || !slice.is_material(ni, nj)) continue;
            seen(ni, nj) = 1;
            stack.emplace_back(ni, nj);
        }
    }
    if (reached != material)
        throw GeometryError("material is not a single connected region (" +
                            std::to_string(material - reached) + " pixels disconnected)");
    if (!hit_bottom || !hit_top)
        throw GeometryError("material does not span the axial extent of the slice");
}

void validate_slice(const SurfaceSlice& slice) {
    if (slice.rows() < 8 || slice.cols() < 8)
        throw GeometryError("slice must be at least 8x8 pixels");
    if (!(slice.pixel_pitch_um > 0.0)) throw GeometryError("pixel pitch must be positive");
    if (!(slice.r_inner_nominal_um >= 0.0))
        throw GeometryError("inner radius must be non-negative");
}

struct Constraint {
    int64_t dof;
    double value;
};

std::vector<Constraint> build_constraints(const SurfaceSlice& slice, const SolveConfig& config) {
    const int rows = slice.rows(), cols = slice.cols();
    std::vector<Constraint> out;
    auto bottom_attached = [&](int j) {
        return (j > 0 && slice.is_material(0, j - 1)) || (j < cols && slice.is_material(0, j));
    };
    auto top_attached = [&](int j) {
        return (j > 0 && slice.is_material(rows - 1, j - 1)) ||
               (j < cols && slice.is_material(rows - 1, j));
    };
    for (int j = 0; j <= cols; ++j)
        if (bottom_attached(j)) out.push_back({2 * node_id(0, j, cols) + 1, 0.0});
    if (config.bc == BcKind::displacement) {
        for (int j = 0; j <= cols; ++j)
            if (top_attached(j))
                out.push_back({2 * node_id(rows, j, cols) + 1, config.bc_value});
    }
    if (config.mode == AnalysisMode::axisymmetric) {
        if (slice.r_inner_nominal_um == 0.0) {
            for (int i = 0; i <= rows; ++i) {
                const bool attached = (i > 0 && slice.is_material(i - 1, 0)) ||
                                      (i < rows && slice.is_material(i, 0));
                if (attached) out.push_back({2 * node_id(i, 0, cols), 0.0});
            }
        }
    } else {
        // Pin u_x at the attached bottom node nearest the section centre. The
        // net horizontal force vanishes, so the pin carries no load; it only
        // removes the horizontal translation mode.
        int best = -1;
        for (int j = 0; j <= cols; ++j) {
            if (!bottom_attached(j)) continue;
            if (best < 0 || std::abs(2 * j - cols) < std::abs(2 * best - cols)) best = j;
        }
        out.push_back({2 * node_id(0, best, cols), 0.0});
    }
    std::sort(out.begin(), out.end(),
              [](const Constraint& a, const Constraint& b) { return a.dof < b.dof; });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const Constraint& a, const Constraint& b) { return a.dof == b.dof; }),
              out.end());
    return out;
}

double* csr_entry(Csr& m, int64_t r, int64_t c) {
    for (int64_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
        if (m.col[k] == int32_t(c)) return &m.val[k];
    return nullptr;
}

}  // namespace

FemSystem assemble(const SurfaceSlice& slice, const Material& material, const SolveConfig& config) {
    material.validate();
    config.validate();
    validate_slice(slice);
    check_connectivity(slice);

    const int rows = slice.rows(), cols = slice.cols();
    const double p = slice.pixel_pitch_um, r_in = slice.r_inner_nominal_um;
    const int64_t n_nodes = int64_t(rows + 1) * (cols + 1);
    const int64_t n = 2 * n_nodes;
    if (n_nodes > std::numeric_limits<int32_t>::max())
        throw GeometryError("slice too large for 32-bit column indices");

    FemSystem sys;
    sys.pixel_rows = rows;
    sys.pixel_cols = cols;
    sys.pixel_pitch_um = p;
    sys.r_inner_um = r_in;
    sys.mode = config.mode;
    sys.n_dofs = n;

    // Sparsity: every dof couples to both dofs of the 3x3 node neighbourhood.
    Csr& k = sys.k;
    k.n = n;
    k.row_ptr.assign(n + 1, 0);
    for (int i = 0; i <= rows; ++i)
        for (int j = 0; j <= cols; ++j) {
            const int ni = (i > 0) + (i < rows) + 1;  // neighbourhood extent
            const int nj = (j > 0) + (j < cols) + 1;
            const int64_t node = node_id(i, j, cols);
            k.row_ptr[2 * node + 1] = k.row_ptr[2 * node + 2] = 2 * ni * nj;
        }
    for (int64_t r = 0; r < n; ++r) k.row_ptr[r + 1] += k.row_ptr[r];
    k.col.resize(k.row_ptr[n]);
    k.val.assign(k.row_ptr[n], 0.0);
    KT_PRAGMA_OMP(parallel for schedule(static))
    for (int64_t node = 0; node < n_nodes; ++node) {
        const int i = int(node / (cols + 1)), j = int(node % (cols + 1));
        int64_t pos = k.row_ptr[2 * node];
        const int64_t count = k.row_ptr[2 * node + 1] - k.row_ptr[2 * node];
        for (int di = -1; di <= 1; ++di) {
            if (i + di < 0 || i + di > rows) continue;
            for (int dj = -1; dj <= 1; ++dj) {
                if (j + dj < 0 || j + dj > cols) continue;
                const int64_t m = node_id(i + di, j + dj, cols);
                k.col[pos] = int32_t(2 * m);
                k.col[pos + 1] = int32_t(2 * m + 1);
                pos += 2;
            }
        }
        std::copy(k.col.begin() + k.row_ptr[2 * node], k.col.begin() + k.row_ptr[2 * node] + count,
                  k.col.begin() + k.row_ptr[2 * node + 1]);
    }

    // Per-column element stiffness (columns share r0; plane stress shares one).
    const ElemKernel kern(config.mode, material, p);
    const int n_ke = config.mode == AnalysisMode::axisymmetric ? cols : 1;
    std::vector<std::array<double, 64>> kes(n_ke);
    KT_PRAGMA_OMP(parallel for schedule(static))
    for (int j = 0; j < n_ke; ++j) kern.ke(r_in + j * p, kes[j].data());

    int64_t n_elems = 0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) n_elems += slice.is_material(i, j);
    sys.n_elements = n_elems;

    // Node-centric fill: each thread owns whole node rows, so no write races
    // and the result is bitwise independent of the thread count.
    KT_PRAGMA_OMP(parallel for schedule(static))
    for (int64_t node = 0; node < n_nodes; ++node) {
        const int i = int(node / (cols + 1)), j = int(node % (cols + 1));
        for (int ei = i - 1; ei <= i; ++ei) {
            if (ei < 0 || ei >= rows) continue;
            for (int ej = j - 1; ej <= j; ++ej) {
                if (ej < 0 || ej >= cols) continue;
                if (!slice.is_material(ei, ej)) continue;
                const int a = (i == ei) ? (j == ej ? 0 : 1) : (j == ej ? 3 : 2);
                const double* ke = kes[config.mode == AnalysisMode::axisymmetric ? ej : 0].data();
                const int64_t bn[4] = {node_id(ei, ej, cols), node_id(ei, ej + 1, cols),
                                       node_id(ei + 1, ej + 1, cols), node_id(ei + 1, ej, cols)};
                for (int du = 0; du < 2; ++du) {
                    const int64_t r = 2 * node + du;
                    for (int b = 0; b < 4; ++b)
                        for (int dv = 0; dv < 2; ++dv) {
                            double* slot = csr_entry(k, r, 2 * bn[b] + dv);
                            *slot += ke[(2 * a + du) * 8 + (2 * b + dv)];
                        }
                }
            }
        }
    }

    // Consistent top-face loads under traction control.
    sys.f.assign(n, 0.0);
    if (config.bc == BcKind::traction) {
        const double sigma = config.bc_value;
        for (int j = 0; j < cols; ++j) {
            if (!slice.is_material(rows - 1, j)) continue;
            const int64_t nl = node_id(rows, j, cols), nr = node_id(rows, j + 1, cols);
            if (config.mode == AnalysisMode::axisymmetric) {
                const double r0 = r_in + j * p, r1 = r0 + p;
                const double c = sigma * 2.0 * std::numbers::pi * p / 6.0;
                sys.f[2 * nl + 1] += c * (2 * r0 + r1);
                sys.f[2 * nr + 1] += c * (r0 + 2 * r1);
            } else {
                sys.f[2 * nl + 1] += sigma * p / 2;
                sys.f[2 * nr + 1] += sigma * p / 2;
            }
        }
    }

    // Dofs of nodes not touching material: identity row, zero load.
    for (int64_t r = 0; r < n; ++r) {
        double* diag = csr_entry(k, r, r);
        if (*diag == 0.0) *diag = 1.0;
    }

    // Symmetric elimination of prescribed dofs: move column contributions to
    // the right-hand side, zero row and column, unit diagonal.
    for (const Constraint& con : build_constraints(slice, config)) {
        const int64_t d = con.dof;
        for (int64_t kk = k.row_ptr[d]; kk < k.row_ptr[d + 1]; ++kk) {
            const int64_t c = k.col[kk];
            if (c == d) continue;
            if (double* mirror = csr_entry(k, c, d); mirror && *mirror != 0.0) {
                sys.f[c] -= *mirror * con.value;
                *mirror = 0.0;
            }
            k.val[kk] = 0.0;
        }
        *csr_entry(k, d, d) = 1.0;
        sys.f[d] = con.value;
    }
    return sys;
}

SolveResult solve(const FemSystem& system, const SolveConfig& config) {
    SolveResult out;
    out.u.assign(system.n_dofs, 0.0);
    const PcgResult r =
        jacobi_pcg(system.k, system.f, out.u, config.cg_rel_tol, config.cg_max_iters);
    if (!r.converged)
        throw SolverError("conjugate gradient failed to converge", r.rel_residual, r.iterations);
    out.iterations = r.iterations;
    out.rel_residual = r.rel_residual;
    out.seconds = r.seconds;
    return out;
}

double applied_axial_force(const SurfaceSlice& slice, const SolveConfig& config) {
    const int rows = slice.rows(), cols = slice.cols();
    const double p = slice.pixel_pitch_um;
    double area = 0.0;
    for (int j = 0; j < cols; ++j) {
        if (!slice.is_material(rows - 1, j)) continue;
        if (config.mode == AnalysisMode::axisymmetric)
            area += 2.0 * std::numbers::pi * (slice.r_inner_nominal_um + (j + 0.5) * p) * p;
        else
            area += p;
    }
    return config.bc_value * area;
}

double nominal_net_area(const SurfaceSlice& slice, AnalysisMode mode) {
    const double p = slice.pixel_pitch_um;
    const double depth = mean_bore_depth_um(slice);
    if (mode == AnalysisMode::axisymmetric) {
        const double r_bore = slice.r_inner_nominal_um + depth;
        const double r_out = slice.r_outer_um();
        return std::numbers::pi * (r_out * r_out - r_bore * r_bore);
    }
    return slice.cols() * p - depth;
}

double edge_axial_force(const std::vector<double>& u, const SurfaceSlice& slice,
                        const Material& material, const SolveConfig& config, bool top_edge) {
    const int rows = slice.rows(), cols = slice.cols();
    const double p = slice.pixel_pitch_um;
    const ElemKernel kern(config.mode, material, p);
    const int ei = top_edge ? rows - 1 : 0;
    double ke[64];
    double total = 0.0;
    for (int ej = 0; ej < cols; ++ej) {
        if (!slice.is_material(ei, ej)) continue;
        kern.ke(slice.r_inner_nominal_um + ej * p, ke);
        const int64_t bn[4] = {node_id(ei, ej, cols), node_id(ei, ej + 1, cols),
                               node_id(ei + 1, ej + 1, cols), node_id(ei + 1, ej, cols)};
        double ue[8];
        for (int b = 0; b < 4; ++b) {
            ue[2 * b] = u[2 * bn[b]];
            ue[2 * b + 1] = u[2 * bn[b] + 1];
        }
        // z-dofs of the two element nodes lying on the edge.
        const int locals[2] = {top_edge ? 2 : 0, top_edge ? 3 : 1};
        for (int l : locals) {
            const int r = 2 * l + 1;
            double acc = 0.0;
            for (int c = 0; c < 8; ++c) acc += ke[r * 8 + c] * ue[c];
            total += acc;
        }
    }
    return total;
}

KtField stress_recovery(const std::vector<double>& u, const SurfaceSlice& slice,
                        const Material& material, const SolveConfig& config) {
    material.validate();
    config.validate();
    const int rows = slice.rows(), cols = slice.cols();
    if (int64_t(u.size()) != 2 * int64_t(rows + 1) * (cols + 1))
        throw InternalError("displacement vector does not match slice dimensions");

    const double force = config.bc == BcKind::traction
                             ? applied_axial_force(slice, config)
                             : edge_axial_force(u, slice, material, config, true);
    const double area = nominal_net_area(slice, config.mode);
    const double sigma_nom = force / area;
    if (!(sigma_nom > 0.0) || !std::isfinite(sigma_nom))
        throw ParamError("nominal stress is not positive; check loading and geometry");

    KtField field;
    field.values = Grid<double>(rows, cols, KtField::void_value());
    field.sigma_nominal = sigma_nom;

    const double p = slice.pixel_pitch_um;
    const ElemKernel kern(config.mode, material, p);
    KT_PRAGMA_OMP(parallel for schedule(static))
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            if (!slice.is_material(i, j)) continue;
            const int64_t bn[4] = {node_id(i, j, cols), node_id(i, j + 1, cols),
                                   node_id(i + 1, j + 1, cols), node_id(i + 1, j, cols)};
            double ue[8];
            for (int b = 0; b < 4; ++b) {
                ue[2 * b] = u[2 * bn[b]];
                ue[2 * b + 1] = u[2 * bn[b] + 1];
            }
            double s[4];
            kern.mean_stress(slice.r_inner_nominal_um + j * p, ue, s);
            // In-plane principal stress from the (rr, zz, rz) block; the third
            // principal stress is the hoop stress (axisymmetric) or zero.
            const double mid = 0.5 * (s[0] + s[1]);
            const double rad = std::sqrt(0.25 * (s[0] - s[1]) * (s[0] - s[1]) + s[2] * s[2]);
            const double third = config.mode == AnalysisMode::axisymmetric ? s[3] : 0.0;
            field.values(i, j) = std::max(mid + rad, third) / sigma_nom;
        }
    }
    return field;
}

KtField solve_slice(const SurfaceSlice& slice, const Material& material, const SolveConfig& config,
                    SolveTimings* timings) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const FemSystem sys = assemble(slice, material, config);
    const auto t1 = clock::now();
    const SolveResult sol = solve(sys, config);
    const auto t2 = clock::now();
    KtField field = stress_recovery(sol.u, slice, material, config);
    const auto t3 = clock::now();
    if (timings) {
        timings->assemble_s = std::chrono::duration<double>(t1 - t0).count();
        timings->solve_s = std::chrono::duration<double>(t2 - t1).count();
        timings->recovery_s = std::chrono::duration<double>(t3 - t2).count();
        timings->cg_iterations = sol.iterations;
    }
    return field;
}

}  // namespace kt
