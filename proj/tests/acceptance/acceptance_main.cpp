// Acceptance gate. Runs every headline requirement end to end and prints one
// [PASS]/[FAIL] line per criterion; the exit code is the number of failures.
//
// Heavy artifacts (the labeled dataset, the trained model, timing slices) are
// cached under ./acceptance_work so reruns are cheap. Delete that directory
// for a cold run. Criteria execute cheapest-first; the report at the end is
// in criterion order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kt/cluster.hpp"
#include "kt/error.hpp"
#include "kt/fem.hpp"
#include "kt/hash.hpp"
#include "kt/life.hpp"
#include "kt/parallel.hpp"
#include "kt/rng.hpp"
#include "kt/slice.hpp"
#include "kt/stats.hpp"
#include "kt/surface.hpp"
#include "kt/surrogate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kWork = "acceptance_work";

struct Outcome {
    int id = 0;
    std::string name;
    bool ok = false;
    std::string detail;
};

std::vector<Outcome> g_results;
bool g_gradcheck_ok = false;  // criterion 4 result, reused by criterion 3's fallback

void note(const std::string& line) {
    std::printf("  %s\n", line.c_str());
    std::fflush(stdout);
}

void record(int id, const std::string& name, bool ok, const std::string& detail) {
    g_results.push_back({id, name, ok, detail});
    std::printf("[%s] criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
}

template <typename F>
void run_criterion(int id, const std::string& name, F&& fn) {
    std::printf("-- criterion %d: %s\n", id, name.c_str());
    std::fflush(stdout);
    try {
        auto [ok, detail] = fn();
        record(id, name, ok, detail);
    } catch (const std::exception& e) {
        record(id, name, false, std::string("exception: ") + e.what());
    }
}

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

kt::SurfaceSlice solid_slice(int rows, int cols, double pitch, double r_inner) {
    kt::SurfaceSlice s;
    s.mask = kt::MaskGrid(rows, cols, kt::kMaterial);
    s.pixel_pitch_um = pitch;
    s.r_inner_nominal_um = r_inner;
    return s;
}

kt::SurfaceSlice rough_slice(int rows, int cols, double pitch, double r_inner, double rms,
                             double corr, double offset, uint64_t seed) {
    kt::RoughnessParams p;
    p.rms_amplitude_um = rms;
    p.correlation_length_um = corr;
    p.mean_bore_offset_um = offset;
    p.seed = seed;
    kt::SurfaceSlice s = kt::generate_slice(p, rows, cols, pitch);
    s.r_inner_nominal_um = r_inner;
    return s;
}

double field_max(const kt::KtField& f) {
    double m = -1e300;
    for (double v : f.values.data())
        if (std::isfinite(v)) m = std::max(m, v);
    return m;
}

// max |a-b| normalized by max |a|, over pixels finite in both
double field_rel_dev(const kt::KtField& a, const kt::KtField& b) {
    double scale = std::max(std::abs(field_max(a)), 1e-300);
    double dev = 0.0;
    for (size_t k = 0; k < a.values.data().size(); ++k) {
        double x = a.values.data()[k], y = b.values.data()[k];
        if (std::isfinite(x) != std::isfinite(y)) return 1e300;
        if (std::isfinite(x)) dev = std::max(dev, std::abs(x - y));
    }
    return dev / scale;
}

// ---- criterion 1: FE analytic checks ----------------------------------------------

std::pair<bool, std::string> crit1_fe_analytic() {
    kt::Material mat;

    // Circular hole in a wide plate under remote tension; hole diameter is 1/10
    // of the plate width and the radius spans 30 elements.  On a pixel mesh the
    // raw per-element maximum measures the jagged stair corners of the
    // rasterized circle -- it grows without bound under refinement -- while the
    // wall element itself smears the boundary gradient low.  The hole's
    // concentration factor is therefore read the way FE postprocessors report
    // hot spots: average element values to the nodes, then take the peak of the
    // node-averaged field.
    const int np = 600;
    note(fmt("solving %dx%d plane-stress plate with a circular hole (r = 30 px)...", np, np));
    kt::SurfaceSlice plate = solid_slice(np, np, 3.0, 0.0);
    const double cx = np / 2.0, cy = np / 2.0, r = 30.0;
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < np; ++j) {
            double di = i + 0.5 - cx, dj = j + 0.5 - cy;
            if (di * di + dj * dj < r * r) plate.mask(i, j) = kt::kVoid;
        }
    kt::SolveConfig pc;
    pc.mode = kt::AnalysisMode::plane_stress;
    pc.bc_value = 100.0;
    pc.cg_rel_tol = 1e-9;
    kt::SolveTimings pt;
    kt::KtField hole = kt::solve_slice(plate, mat, pc, &pt);
    const double kraw = field_max(hole);
    std::vector<double> nsum(size_t(np + 1) * (np + 1), 0.0);
    std::vector<int> ncnt(size_t(np + 1) * (np + 1), 0);
    auto nid = [np](int i, int j) { return size_t(i) * (np + 1) + j; };
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < np; ++j) {
            double v = hole.values(i, j);
            if (!std::isfinite(v)) continue;
            for (int a = 0; a <= 1; ++a)
                for (int b = 0; b <= 1; ++b) {
                    nsum[nid(i + a, j + b)] += v;
                    ncnt[nid(i + a, j + b)] += 1;
                }
        }
    double kmax = -1e300;
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < np; ++j) {
            if (!std::isfinite(hole.values(i, j))) continue;
            double s = 0.0;
            for (int a = 0; a <= 1; ++a)
                for (int b = 0; b <= 1; ++b) s += nsum[nid(i + a, j + b)] / ncnt[nid(i + a, j + b)];
            kmax = std::max(kmax, 0.25 * s);
        }
    bool ok_hole = std::abs(kmax - 3.0) <= 0.06 * 3.0;
    note(fmt("hole: node-averaged peak K_t = %.4f (target 3.0 +- 6%%); raw pixel max %.4f "
             "sits on the stair corners; %d CG iters, %.1f s",
             kmax, kraw, pt.cg_iterations, pt.total_s()));

    // smooth hollow cylinder: uniform axial stress, K_t = 1 everywhere
    kt::SurfaceSlice cyl = solid_slice(64, 64, 3.0, 300.0);
    kt::SolveConfig cc;
    cc.cg_rel_tol = 1e-11;
    kt::KtField cf = kt::solve_slice(cyl, mat, cc);
    double cyl_dev = 0.0;
    for (double v : cf.values.data())
        if (std::isfinite(v)) cyl_dev = std::max(cyl_dev, std::abs(v - 1.0));
    bool ok_cyl = cyl_dev <= 1e-6;
    note(fmt("hollow cylinder: max |K_t - 1| = %.3e (tol 1e-6)", cyl_dev));

    // patch test: uniform axial traction on small solid sections must be
    // reproduced exactly (both modes)
    double patch_dev = 0.0;
    for (kt::AnalysisMode mode :
         {kt::AnalysisMode::axisymmetric, kt::AnalysisMode::plane_stress}) {
        kt::SurfaceSlice s = solid_slice(8, 8, 3.0, 300.0);
        kt::SolveConfig cfg;
        cfg.mode = mode;
        cfg.bc_value = 7.25;
        cfg.cg_rel_tol = 1e-13;
        kt::KtField f = kt::solve_slice(s, mat, cfg);
        for (double v : f.values.data())
            if (std::isfinite(v)) patch_dev = std::max(patch_dev, std::abs(v - 1.0));
    }
    bool ok_patch = patch_dev <= 1e-10;
    note(fmt("patch test: max |K_t - 1| = %.3e (tol 1e-10)", patch_dev));

    return {ok_hole && ok_cyl && ok_patch,
            fmt("hole node-averaged peak K_t %.4f (3.0 +- 6%%); cylinder dev %.2e <= 1e-6; "
                "patch dev %.2e <= 1e-10",
                kmax, cyl_dev, patch_dev)};
}

// ---- criterion 2: scaling invariance and reaction balance --------------------------

std::pair<bool, std::string> crit2_scaling_reactions() {
    kt::SurfaceSlice s = rough_slice(64, 48, 3.0, 500.0, 8.0, 30.0, 60.0, 20260816ULL);

    kt::SolveConfig base;
    base.cg_rel_tol = 1e-12;
    base.bc_value = 100.0;
    kt::Material m1;  // E = 1
    kt::Material m2;
    m2.youngs_modulus = 200e9;
    kt::SolveConfig doubled = base;
    doubled.bc_value = 237.0;

    kt::KtField fa = kt::solve_slice(s, m1, base);
    kt::KtField fb = kt::solve_slice(s, m2, base);
    kt::KtField fc = kt::solve_slice(s, m1, doubled);
    double dev_e = field_rel_dev(fa, fb);
    double dev_t = field_rel_dev(fa, fc);
    bool ok_scale = dev_e <= 1e-9 && dev_t <= 1e-9;
    note(fmt("K_t drift: E x 2e11 -> %.2e, load x 2.37 -> %.2e (tol 1e-9)", dev_e, dev_t));

    // reaction balance: top and bottom edge forces vs the applied force
    double worst = 0.0;
    for (kt::AnalysisMode mode :
         {kt::AnalysisMode::axisymmetric, kt::AnalysisMode::plane_stress}) {
        kt::SolveConfig cfg = base;
        cfg.mode = mode;
        kt::FemSystem sys = kt::assemble(s, m1, cfg);
        kt::SolveResult res = kt::solve(sys, cfg);
        double F = kt::applied_axial_force(s, cfg);
        double rt = kt::edge_axial_force(res.u, s, m1, cfg, true);
        double rb = kt::edge_axial_force(res.u, s, m1, cfg, false);
        // internal edge forces: +F on the loaded face, -F across the bottom cut
        worst = std::max(worst, std::abs(rt - F) / std::abs(F));
        worst = std::max(worst, std::abs(rb + F) / std::abs(F));
    }
    bool ok_react = worst <= 1e-8;
    note(fmt("worst reaction imbalance: %.2e (tol 1e-8)", worst));

    return {ok_scale && ok_react,
            fmt("K_t scaling dev %.2e / %.2e <= 1e-9; reaction imbalance %.2e <= 1e-8", dev_e,
                dev_t, worst)};
}

// ---- criterion 4: gradient check ---------------------------------------------------

std::pair<bool, std::string> crit4_gradcheck() {
    kt::Architecture arch;
    arch.patch_size = 8;
    arch.input_channels = 1;
    arch.encoder_channels = {2, 3, 4};  // 3 encoder + 3 decoder layers
    kt::Rng rng(31337);
    kt::SurrogateModel model = kt::make_model(arch, rng);
    model.norm.out_mean = 0.2;
    model.norm.out_std = 0.8;
    // keep hidden pre-activations away from the ReLU kink: central differences
    // assume the loss is smooth across the stencil
    for (kt::ConvLayer& l : model.layers)
        for (double& b : l.b) b += 0.1;

    std::vector<kt::Sample> samples(2);
    for (auto& smp : samples) {
        smp.mask = kt::MaskGrid(8, 8, kt::kMaterial);
        smp.kt = kt::Grid<double>(8, 8, std::numeric_limits<double>::quiet_NaN());
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) {
                if (rng.uniform() < 0.25) smp.mask(i, j) = kt::kVoid;
                if (smp.mask(i, j) == kt::kMaterial) smp.kt(i, j) = rng.uniform(0.5, 3.0);
            }
        smp.mask(0, 0) = kt::kMaterial;  // keep at least one material pixel
        if (!std::isfinite(smp.kt(0, 0))) smp.kt(0, 0) = 1.0;
    }
    std::vector<int> idx = {0, 1};

    kt::BatchGrads grads = kt::backward(model, samples, idx);
    const double h = 1e-5;
    double max_rel = 0.0;
    int64_t checked = 0, total = 0;
    int64_t tensor_checked = 0;
    auto fd_check = [&](double& w, double analytic) {
        ++total;
        const double keep = w;
        w = keep + h;
        double lp = kt::masked_loss(model, samples, idx);
        w = keep - h;
        double lm = kt::masked_loss(model, samples, idx);
        w = keep;
        double fd = (lp - lm) / (2.0 * h);
        double denom = std::max(std::abs(fd), std::abs(analytic));
        if (denom < 1e-5) return;  // below FD resolution at this step size
        max_rel = std::max(max_rel, std::abs(fd - analytic) / denom);
        ++checked;
        ++tensor_checked;
    };
    bool all_tensors = true;
    for (size_t l = 0; l < model.layers.size(); ++l) {
        tensor_checked = 0;
        for (size_t k = 0; k < model.layers[l].w.size(); ++k)
            fd_check(model.layers[l].w[k], grads.layers[l].w[k]);
        all_tensors = all_tensors && tensor_checked > 0;
        tensor_checked = 0;
        for (size_t k = 0; k < model.layers[l].b.size(); ++k)
            fd_check(model.layers[l].b[k], grads.layers[l].b[k]);
        all_tensors = all_tensors && tensor_checked > 0;
    }
    bool ok = max_rel <= 1e-4 && checked > 100 && all_tensors;
    g_gradcheck_ok = ok;
    return {ok, fmt("max rel FD deviation %.3e <= 1e-4 over %lld of %lld parameters; every "
                    "kernel/bias tensor exercised: %s",
                    max_rel, static_cast<long long>(checked), static_cast<long long>(total),
                    all_tensors ? "yes" : "NO")};
}

// ---- criterion 6: exceedance properties --------------------------------------------

std::pair<bool, std::string> crit6_exceedance() {
    kt::Rng rng(600);
    std::vector<double> thr = kt::default_thresholds();
    bool ok_bounds = true;

    for (int t = 0; t < 30 && ok_bounds; ++t) {
        kt::SurfaceSlice s =
            rough_slice(48, 40, 3.0, 400.0, rng.uniform(2, 20), rng.uniform(20, 60), 50.0,
                        rng.next_u64());
        kt::KtField f;
        f.values = kt::Grid<double>(48, 40, std::numeric_limits<double>::quiet_NaN());
        f.sigma_nominal = 1.0;
        for (int i = 0; i < 48; ++i)
            for (int j = 0; j < 40; ++j)
                if (s.is_material(i, j)) f.values(i, j) = rng.uniform(0.01, 4.0);
        for (kt::AnalysisMode mode :
             {kt::AnalysisMode::axisymmetric, kt::AnalysisMode::plane_stress}) {
            kt::ExceedanceCurve c = kt::exceedance(f, s, thr, mode);
            for (size_t k = 0; k < c.fractions.size(); ++k) {
                if (!(c.fractions[k] >= 0.0 && c.fractions[k] <= 1.0)) ok_bounds = false;
                if (k && c.fractions[k] > c.fractions[k - 1]) ok_bounds = false;
            }
            if (mode == kt::AnalysisMode::plane_stress) {
                // plane fractions must equal direct pixel counting exactly
                int64_t n_mat = 0;
                for (int i = 0; i < 48; ++i)
                    for (int j = 0; j < 40; ++j)
                        if (s.is_material(i, j)) ++n_mat;
                for (size_t k = 0; k < thr.size(); ++k) {
                    int64_t n_above = 0;
                    for (int i = 0; i < 48; ++i)
                        for (int j = 0; j < 40; ++j)
                            if (s.is_material(i, j) && f.values(i, j) > thr[k]) ++n_above;
                    double exact =
                        n_mat ? static_cast<double>(n_above) / static_cast<double>(n_mat) : 0.0;
                    if (c.fractions[k] != exact) ok_bounds = false;
                }
            }
        }
    }
    note(fmt("bounds/monotonicity and plane-mode counting over 30 random fields: %s",
             ok_bounds ? "ok" : "VIOLATED"));

    // two material pixels at radius ratio 1:2 -> outer-pixel fraction is exactly 2/3
    kt::SurfaceSlice two = solid_slice(1, 2, 3.0, 1.5);
    kt::KtField tf;
    tf.values = kt::Grid<double>(1, 2, 0.0);
    tf.values(0, 0) = 1.0;
    tf.values(0, 1) = 3.0;
    tf.sigma_nominal = 1.0;
    kt::ExceedanceCurve tc =
        kt::exceedance(tf, two, std::vector<double>{2.0}, kt::AnalysisMode::axisymmetric);
    bool ok_two = tc.fractions.size() == 1 && tc.fractions[0] == 2.0 / 3.0;
    note(fmt("two-pixel axisymmetric fraction = %.17g (expected exactly 2/3)",
             tc.fractions.empty() ? -1.0 : tc.fractions[0]));

    return {ok_bounds && ok_two,
            fmt("bounds/monotone ok; plane counting exact; axisym two-pixel fraction == 2/3: %s",
                ok_two ? "yes" : "NO")};
}

// ---- criterion 7: cluster labelling vs flood-fill oracle ---------------------------

kt::Grid<int32_t> oracle_labels(const kt::KtField& f, const kt::SurfaceSlice& s, double thr,
                                int conn) {
    const int R = f.rows(), C = f.cols();
    kt::Grid<int32_t> lab(R, C, -1);
    auto above = [&](int i, int j) {
        double v = f.values(i, j);
        return s.is_material(i, j) && std::isfinite(v) && v > thr;
    };
    static const int d4[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    static const int d8[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                 {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) {
            if (!above(i, j) || lab(i, j) >= 0) continue;
            lab(i, j) = next;
            stack.push_back({i, j});
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                const auto* dd = conn == 8 ? d8 : d4;
                for (int n = 0; n < conn; ++n) {
                    int yy = y + dd[n][0], xx = x + dd[n][1];
                    if (yy < 0 || yy >= R || xx < 0 || xx >= C) continue;
                    if (!above(yy, xx) || lab(yy, xx) >= 0) continue;
                    lab(yy, xx) = next;
                    stack.push_back({yy, xx});
                }
            }
            ++next;
        }
    return lab;
}

// same partition: -1 sets agree and the label mapping is a bijection
bool same_partition(const kt::Grid<int32_t>& a, const kt::Grid<int32_t>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    std::map<int32_t, int32_t> fwd, rev;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            int32_t x = a(i, j), y = b(i, j);
            if ((x < 0) != (y < 0)) return false;
            if (x < 0) continue;
            auto f = fwd.find(x);
            if (f == fwd.end())
                fwd[x] = y;
            else if (f->second != y)
                return false;
            auto r = rev.find(y);
            if (r == rev.end())
                rev[y] = x;
            else if (r->second != x)
                return false;
        }
    return true;
}

std::pair<bool, std::string> crit7_clusters() {
    kt::Rng rng(700);
    int fails = 0;
    auto check_field = [&](const kt::KtField& f, const kt::SurfaceSlice& s, double thr,
                           int conn) {
        kt::ClusterConfig cfg;
        cfg.threshold = thr;
        cfg.connectivity = conn;
        kt::Grid<int32_t> lab;
        kt::ClusterReport rep =
            kt::label_clusters(f, s, cfg, kt::AnalysisMode::plane_stress, &lab);
        kt::Grid<int32_t> ora = oracle_labels(f, s, thr, conn);
        int n_ora = 0;
        for (int32_t v : ora.data()) n_ora = std::max(n_ora, v + 1);
        if (static_cast<int>(rep.clusters.size()) != n_ora || !same_partition(lab, ora))
            ++fails;
    };
    auto random_field = [&](int rows, int cols) {
        kt::SurfaceSlice s = solid_slice(rows, cols, 3.0, 200.0);
        kt::KtField f;
        f.values = kt::Grid<double>(rows, cols, std::numeric_limits<double>::quiet_NaN());
        f.sigma_nominal = 1.0;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                if (rng.uniform() < 0.30) s.mask(i, j) = kt::kVoid;
                if (s.is_material(i, j)) f.values(i, j) = rng.uniform(0.0, 4.0);
            }
        return std::pair(f, s);
    };

    for (int t = 0; t < 1000; ++t) {
        auto [f, s] = random_field(64, 64);
        check_field(f, s, rng.uniform(0.5, 3.5), t % 2 ? 8 : 4);
    }
    note(fmt("1000 random 64x64 fields: %d disagreements", fails));

    // adversarial patterns, both connectivities
    auto pattern_field = [&](int rows, int cols, auto&& on) {
        kt::SurfaceSlice s = solid_slice(rows, cols, 3.0, 200.0);
        kt::KtField f;
        f.values = kt::Grid<double>(rows, cols, 0.0);
        f.sigma_nominal = 1.0;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                if (on(i, j)) f.values(i, j) = 3.0;
        return std::pair(f, s);
    };
    std::vector<std::function<bool(int, int)>> patterns = {
        [](int i, int j) { return (i + j) % 2 == 0; },                  // checkerboard
        [](int i, int j) { return i % 2 == 0; },                        // row stripes
        [](int i, int j) { return j % 3 == 0; },                        // column stripes
        [](int i, int j) { return i == j; },                            // diagonal
        [](int i, int j) { return i == 0 || j % 4 == 0; },              // comb with spine
        [](int i, int j) { return (i < 3 || i > 60) || (i == 31 && j == 31); },  // bridge-free
        [](int, int) { return true; },                                  // everything above
        [](int, int) { return false; },                                 // nothing above
    };
    int pat_fails = 0;
    for (auto& on : patterns) {
        auto [f, s] = pattern_field(64, 64, on);
        for (int conn : {4, 8}) {
            int before = fails;
            check_field(f, s, 2.5, conn);
            pat_fails += fails - before;
        }
    }
    note(fmt("adversarial patterns (x2 connectivities): %d disagreements", pat_fails));

    // threshold monotonicity: every high-threshold cluster lies inside exactly
    // one low-threshold cluster
    int mono_fails = 0;
    for (int t = 0; t < 100; ++t) {
        auto [f, s] = random_field(48, 48);
        kt::ClusterConfig lo, hi;
        lo.threshold = 1.5;
        hi.threshold = 2.5;
        kt::Grid<int32_t> ll, lh;
        kt::label_clusters(f, s, lo, kt::AnalysisMode::plane_stress, &ll);
        kt::label_clusters(f, s, hi, kt::AnalysisMode::plane_stress, &lh);
        std::map<int32_t, int32_t> parent;
        for (int i = 0; i < 48; ++i)
            for (int j = 0; j < 48; ++j) {
                if (lh(i, j) < 0) continue;
                if (ll(i, j) < 0) {
                    ++mono_fails;
                    continue;
                }
                auto it = parent.find(lh(i, j));
                if (it == parent.end())
                    parent[lh(i, j)] = ll(i, j);
                else if (it->second != ll(i, j))
                    ++mono_fails;
            }
    }
    note(fmt("threshold monotonicity over 100 fields: %d violations", mono_fails));

    bool ok = fails == 0 && mono_fails == 0;
    return {ok, fmt("union-find vs flood-fill: %d/1016 disagreements; monotonicity violations "
                    "%d",
                    fails, mono_fails)};
}

// ---- criterion 8: life-model calibration -------------------------------------------

kt::Coupon synth_coupon(int i, double sigma, double ktv, double vol,
                        const kt::LifeModelParams& truth, double log_noise) {
    kt::Coupon c;
    c.id = "c" + std::to_string(i);
    c.features.total_stressed_volume = vol;
    c.features.max_kt = ktv;
    c.features.super_kt = {ktv};
    c.features.floor_volume = 50.0;
    c.condition.stress_amplitude = sigma;
    c.condition.stress_ratio = -1.0;
    kt::LifePrediction p = kt::predict_life(c.features, c.condition, truth);
    c.observed_cycles = p.cycles * std::exp(log_noise);
    return c;
}

std::pair<bool, std::string> crit8_life() {
    kt::LifeModelParams truth;
    truth.c = 2.0e12;
    truth.b = 2.8;
    truth.m = 1.7;
    truth.v_ref = 1500.0;
    truth.kt_eff_quantile = 0.95;

    // noiseless: exact recovery
    kt::Rng rng(800);
    std::vector<kt::Coupon> clean;
    for (int i = 0; i < 8; ++i)
        clean.push_back(synth_coupon(i, rng.uniform(80.0, 220.0), rng.uniform(1.5, 3.2),
                                     std::exp(rng.uniform(std::log(200.0), std::log(5e4))),
                                     truth, 0.0));
    kt::CalibrationResult fit = kt::calibrate(clean, truth.v_ref, truth.kt_eff_quantile);
    double ec = std::abs(fit.params.c / truth.c - 1.0);
    double eb = std::abs(fit.params.b / truth.b - 1.0);
    double em = std::abs(fit.params.m / truth.m - 1.0);
    bool ok_exact = ec <= 1e-6 && eb <= 1e-6 && em <= 1e-6 && fit.rms_log_residual <= 1e-9;
    note(fmt("noiseless recovery: rel errors c %.2e, b %.2e, m %.2e; rms log residual %.2e", ec,
             eb, em, fit.rms_log_residual));

    // 10% lognormal noise, 40 coupons per seed, calibrate on half, predict the
    // held-out half (synthetic self-consistency; no measured coupon data ships
    // with the repository)
    int hits = 0, held = 0, worst_seed_hits = 41;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        kt::Rng nr(kt::Rng::derive(801, seed));
        std::vector<kt::Coupon> all;
        for (int i = 0; i < 40; ++i)
            all.push_back(synth_coupon(i, nr.uniform(70.0, 250.0), nr.uniform(1.5, 3.5),
                                       std::exp(nr.uniform(std::log(200.0), std::log(5e4))),
                                       truth, 0.1 * nr.gaussian()));
        std::vector<kt::Coupon> cal, held_out;
        for (size_t i = 0; i < all.size(); ++i)
            (i % 2 ? held_out : cal).push_back(all[i]);
        kt::CalibrationResult f = kt::calibrate(cal, truth.v_ref, truth.kt_eff_quantile);
        int seed_hits = 0;
        for (auto& c : held_out) {
            kt::LifePrediction p = kt::predict_life(c.features, c.condition, f.params);
            if (std::abs(std::log(c.observed_cycles / p.cycles)) <= std::log(2.0)) ++seed_hits;
        }
        hits += seed_hits;
        held += static_cast<int>(held_out.size());
        worst_seed_hits = std::min(worst_seed_hits, seed_hits);
    }
    double frac = static_cast<double>(hits) / held;
    bool ok_noise = frac >= 0.80;
    note(fmt("noisy held-out: %d/%d in the 2x band (%.1f%%), worst seed %d/20", hits, held,
             100.0 * frac, worst_seed_hits));

    return {ok_exact && ok_noise,
            fmt("noiseless rel errors (c,b,m) = (%.1e, %.1e, %.1e) <= 1e-6; held-out 2x-band "
                "fraction %.3f >= 0.80 (synthetic self-consistency)",
                ec, eb, em, frac)};
}

// ---- criterion 3: surrogate accuracy ------------------------------------------------

std::pair<bool, std::string> crit3_surrogate() {
    const fs::path ds_dir = kWork / "dataset";
    kt::DatasetSpec spec;  // defaults: 550 samples, rms 2-20 um, 128^2 patches
    spec.seed = 1234;

    note("building/reusing the labeled dataset (550 patches, FE-solved)...");
    double t0 = now_s();
    kt::DatasetBuildResult build = kt::make_dataset(spec, ds_dir);
    note(fmt("dataset: %d generated, %d reused, %d failed (%.0f s)", build.generated,
             build.reused, build.failed, now_s() - t0));

    kt::Dataset ds = kt::load_dataset(ds_dir);
    if (static_cast<int>(ds.samples.size()) < 500)
        return {false, fmt("only %zu usable patches (need >= 500)", ds.samples.size())};

    // train (or reuse a cached model trained on this exact dataset)
    const fs::path model_path = kWork / "model.ktsm";
    kt::Architecture arch;  // default architecture
    kt::SurrogateModel model;
    bool reused_model = false;
    if (fs::exists(model_path)) {
        try {
            kt::SurrogateModel cached = kt::load_model(model_path);
            if (cached.meta.dataset_hash == ds.manifest_hash && cached.arch == arch) {
                model = std::move(cached);
                reused_model = true;
                note("reusing cached model (dataset hash matches)");
            }
        } catch (const std::exception&) {
            // fall through to retrain
        }
    }
    if (!reused_model) {
        kt::TrainConfig tc;  // defaults: 60 epochs, batch 16, lr 1e-3
        tc.seed = 424242;
        tc.verbose = true;
        note(fmt("training default architecture on %zu train / %zu val samples...",
                 ds.train_idx.size(), ds.val_idx.size()));
        double tt = now_s();
        model = kt::train(ds, arch, tc);
        note(fmt("training done in %.0f s (best val loss %.4g at epoch %d)", now_s() - tt,
                 model.meta.best_val_loss, model.meta.best_epoch));
        kt::save_model(model_path, model);
    }

    // held-out evaluation on the test split
    double err_sum = 0.0, err_max = 0.0, gap_max = 0.0;
    int64_t n_px = 0;
    for (int ti : ds.test_idx) {
        const kt::Sample& smp = ds.samples[ti];
        kt::Grid<double> pred = kt::predict_patch(model, smp.mask);
        kt::KtField fe, su;
        fe.values = smp.kt;
        fe.sigma_nominal = 1.0;
        su.values = kt::Grid<double>(pred.rows(), pred.cols(),
                                     std::numeric_limits<double>::quiet_NaN());
        su.sigma_nominal = 1.0;
        for (int i = 0; i < pred.rows(); ++i)
            for (int j = 0; j < pred.cols(); ++j) {
                if (smp.mask(i, j) != kt::kMaterial) continue;
                su.values(i, j) = pred(i, j);
                double t = smp.kt(i, j);
                if (!std::isfinite(t) || t < 0.5) continue;
                double rel = std::abs(pred(i, j) - t) / t;
                err_sum += rel;
                err_max = std::max(err_max, rel);
                ++n_px;
            }
        kt::SurfaceSlice sl;
        sl.mask = smp.mask;
        sl.pixel_pitch_um = ds.pixel_pitch_um;
        sl.r_inner_nominal_um = ds.r_inner_um;
        kt::ExceedanceCurve ce =
            kt::exceedance(fe, sl, kt::default_thresholds(), kt::AnalysisMode::axisymmetric);
        kt::ExceedanceCurve cs =
            kt::exceedance(su, sl, kt::default_thresholds(), kt::AnalysisMode::axisymmetric);
        gap_max = std::max(gap_max, kt::compare_curves(ce, cs).max_gap);
    }
    double mre = n_px ? err_sum / n_px : 1e300;
    note(fmt("held-out (%zu patches): mean rel error %.4f, max rel error %.3f, exceedance gap "
             "%.4f",
             ds.test_idx.size(), mre, err_max, gap_max));

    if (mre < 0.05) {
        return {true, fmt("held-out mean rel error %.4f < 0.05 over %lld pixels (K_t >= 0.5); "
                          "max rel error %.3f; exceedance-curve gap %.4f (target <= 0.05)",
                          mre, static_cast<long long>(n_px), err_max, gap_max)};
    }

    // accuracy miss: the architecture-sanity fallbacks must all hold, and the
    // achieved error is reported
    note("mean rel error >= 5%: running fallback checks (gradients, overfit, val descent)");
    bool ok_val = model.meta.best_val_loss < model.meta.initial_val_loss;

    kt::SurfaceSlice oslice = rough_slice(16, 16, 3.0, 500.0, 6.0, 30.0, 12.0, 44);
    kt::KtField of = kt::solve_slice(oslice, kt::Material{}, kt::SolveConfig{});
    kt::Sample one;
    one.id = "fe";
    one.mask = oslice.mask;
    one.kt = of.values;
    kt::Dataset dd;
    dd.samples = {one};
    dd.train_idx = {0};
    dd.pixel_pitch_um = 3.0;
    dd.manifest_hash = "fallbackoverfit0";
    kt::Architecture small;
    small.patch_size = 16;
    small.input_channels = 2;  // distance channel breaks repeated-neighborhood ties
    small.encoder_channels = {8, 16};
    kt::TrainConfig otc;
    otc.lr = 3e-3;
    otc.epochs = 2000;
    otc.batch_size = 1;
    otc.seed = 3;
    kt::SurrogateModel om = kt::train(dd, small, otc);
    bool ok_overfit = om.meta.best_val_loss < 1e-3;
    note(fmt("fallbacks: gradcheck %s, overfit loss %.3g (< 1e-3?), val %.4g -> %.4g",
             g_gradcheck_ok ? "ok" : "FAILED", om.meta.best_val_loss,
             model.meta.initial_val_loss, model.meta.best_val_loss));

    bool ok = g_gradcheck_ok && ok_overfit && ok_val;
    return {ok, fmt("achieved held-out mean rel error %.4f (target < 0.05 missed); max rel "
                    "error %.3f; exceedance gap %.4f; fallback checks (gradients %s, overfit "
                    "%s, val descent %s)",
                    mre, err_max, gap_max, g_gradcheck_ok ? "pass" : "fail",
                    ok_overfit ? "pass" : "fail", ok_val ? "pass" : "fail")};
}

// ---- criterion 5: surrogate speedup --------------------------------------------------

std::pair<bool, std::string> crit5_speedup() {
    const fs::path model_path = kWork / "model.ktsm";
    kt::SurrogateModel model;
    if (fs::exists(model_path)) {
        model = kt::load_model(model_path);
    } else {
        kt::Rng mr(5);
        model = kt::make_model(kt::Architecture{}, mr);
        model.norm.pixel_pitch_um = 3.0;
    }

    kt::SurfaceSlice s = rough_slice(2048, 256, 3.0, 500.0, 10.0, 40.0, 90.0, 909);
    note(fmt("timing slice %dx%d with %d thread(s)", s.rows(), s.cols(),
             kt::par::max_threads()));

    using clock = std::chrono::steady_clock;
    auto f0 = clock::now();
    kt::SolveConfig cfg;  // production defaults
    kt::SolveTimings t;
    kt::KtField fe = kt::solve_slice(s, kt::Material{}, cfg, &t);
    double fe_s = std::chrono::duration<double>(clock::now() - f0).count();

    auto s0 = clock::now();
    kt::KtField su = kt::predict_large(model, s);
    double su_s = std::chrono::duration<double>(clock::now() - s0).count();

    double ratio = fe_s / su_s;
    bool ok = su_s <= fe_s / 100.0 && field_max(su) == field_max(su);  // ratio + not-NaN
    return {ok, fmt("FE %.2f s (%d CG iters) vs surrogate %.3f s on the same %dx%d slice and "
                    "thread count -> %.0fx (need >= 100x)",
                    fe_s, t.cg_iterations, su_s, s.rows(), s.cols(), ratio)};
}

// ---- criterion 9: pipeline reproducibility -------------------------------------------

std::string slurp_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void scrub_timings(json& j) {
    if (j.is_object()) {
        j.erase("timing");
        j.erase("timings");
        for (auto& [k, v] : j.items()) scrub_timings(v);
    } else if (j.is_array()) {
        for (auto& v : j) scrub_timings(v);
    }
}

std::vector<fs::path> tree_files(const fs::path& root) {
    std::vector<fs::path> out;
    for (auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<bool, std::string> crit9_reproducibility() {
    const std::string bin = KTPIPE_BIN;
    std::vector<fs::path> dirs = {kWork / "pipe_a", kWork / "pipe_b"};
    for (const fs::path& d : dirs) {
        fs::remove_all(d);
        fs::create_directories(d);
        std::string cmd = "cd \"" + d.string() + "\" && \"" + bin +
                          "\" pipeline --sections 4 --seed 7 > pipeline.log 2>&1";
        note(fmt("running: ktpipe pipeline --sections 4 --seed 7  (in %s)", d.string().c_str()));
        int rc = std::system(cmd.c_str());
        if (rc != 0)
            return {false, fmt("pipeline run in %s exited with %d (see pipeline.log)",
                               d.string().c_str(), rc)};
    }

    // our own log capture is not a pipeline artifact
    auto a_files = tree_files(dirs[0]);
    auto b_files = tree_files(dirs[1]);
    auto drop_log = [](std::vector<fs::path>& v) {
        v.erase(std::remove(v.begin(), v.end(), fs::path("pipeline.log")), v.end());
    };
    drop_log(a_files);
    drop_log(b_files);
    if (a_files != b_files)
        return {false, fmt("runs produced different file sets (%zu vs %zu files)",
                           a_files.size(), b_files.size())};

    int compared = 0;
    for (const fs::path& rel : a_files) {
        std::string a = slurp_bytes(dirs[0] / rel);
        std::string b = slurp_bytes(dirs[1] / rel);
        if (rel.extension() == ".json") {
            json ja = json::parse(a), jb = json::parse(b);
            scrub_timings(ja);
            scrub_timings(jb);
            if (ja != jb)
                return {false, "JSON artifact differs beyond timing fields: " + rel.string()};
        } else if (a != b) {
            return {false, "artifact differs between runs: " + rel.string()};
        }
        ++compared;
    }
    return {true, fmt("two runs of `pipeline --sections 4 --seed 7`: %d artifacts "
                      "byte-identical (JSON compared with timing fields excluded)",
                      compared)};
}

}  // namespace

int main() {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    now_s();  // anchor the wall clock
    fs::create_directories(kWork);
    std::printf("acceptance run: %d thread(s), work dir %s\n", kt::par::max_threads(),
                fs::absolute(kWork).string().c_str());

    run_criterion(1, "FE analytic checks", crit1_fe_analytic);
    run_criterion(2, "scaling invariance and reactions", crit2_scaling_reactions);
    run_criterion(4, "surrogate gradient check", crit4_gradcheck);
    run_criterion(6, "exceedance statistics", crit6_exceedance);
    run_criterion(7, "cluster labelling", crit7_clusters);
    run_criterion(8, "life-model calibration", crit8_life);
    run_criterion(3, "surrogate accuracy", crit3_surrogate);
    run_criterion(5, "surrogate speedup", crit5_speedup);
    run_criterion(9, "pipeline reproducibility", crit9_reproducibility);

    std::sort(g_results.begin(), g_results.end(),
              [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
    int failed = 0;
    std::printf("\n==== acceptance summary ====\n");
    for (const Outcome& r : g_results) {
        std::printf("[%s] %d. %s: %s\n", r.ok ? "PASS" : "FAIL", r.id, r.name.c_str(),
                    r.detail.c_str());
        if (!r.ok) ++failed;
    }
    std::printf("%zu of %zu criteria passed (%.0f s total)\n", g_results.size() - failed,
                g_results.size(), now_s());
    return failed;
}
