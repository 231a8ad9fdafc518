// Kernel benchmark: OpenMP-parallel implementations against their serial
// references, on the matrices this project actually solves (assembled from a
// rough slice). Checks agreement while timing, so a kernel that drifts from
// its reference fails loudly here as well as in the unit tests.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kt/csr.hpp"
#include "kt/fem.hpp"
#include "kt/parallel.hpp"
#include "kt/rng.hpp"
#include "kt/surface.hpp"

using namespace kt;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        f();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

void print_row(const char* name, double serial_s, double parallel_s, double maxdiff) {
    std::printf("%-14s %12.6f s %12.6f s %9.2fx   max|diff| %.3e\n", name, serial_s, parallel_s,
                serial_s / parallel_s, maxdiff);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bench_kernels: serial reference vs OpenMP kernels"};
    int rows = 512, cols = 256, reps = 5;
    uint64_t seed = 0;
    app.add_option("--rows", rows, "slice axial pixels")->capture_default_str();
    app.add_option("--cols", cols, "slice radial pixels")->capture_default_str();
    app.add_option("--reps", reps, "repetitions (best-of timing)")->capture_default_str();
    app.add_option("--seed", seed, "surface seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    RoughnessParams rp;
    rp.seed = seed;
    const SurfaceSlice slice = generate_slice(rp, rows, cols, 3.0, 500.0);
    const SolveConfig cfg;
    const Material mat;
    const FemSystem sys = assemble(slice, mat, cfg);
    const int64_t n = sys.k.n;

    std::printf("matrix: n = %lld, nnz = %lld, threads = %d\n", (long long)n,
                (long long)sys.k.nnz(), par::max_threads());
    std::printf("%-14s %14s %14s %10s\n", "kernel", "serial", "parallel", "speedup");

    Rng rng(123);
    std::vector<double> x(size_t(n), 0.0), y1(size_t(n), 0.0), y2(size_t(n), 0.0);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);

    // dot
    double dref = 0.0, dpar = 0.0;
    const double t_dot_s = time_best(reps, [&] { dref = par::dot_serial(x.data(), x.data(), n); });
    const double t_dot_p = time_best(reps, [&] { dpar = par::dot(x.data(), x.data(), n); });
    print_row("dot", t_dot_s, t_dot_p, std::abs(dref - dpar));

    // axpy
    const double t_axpy_s =
        time_best(reps, [&] { par::axpy_serial(0.5, x.data(), y1.data(), n); });
    const double t_axpy_p = time_best(reps, [&] { par::axpy(0.5, x.data(), y2.data(), n); });
    double dmax = 0.0;
    for (int64_t i = 0; i < n; ++i) dmax = std::max(dmax, std::abs(y1[i] - y2[i]));
    print_row("axpy", t_axpy_s, t_axpy_p, dmax);

    // csr_matvec
    const double t_mv_s =
        time_best(reps, [&] { csr_matvec_serial(sys.k, x.data(), y1.data()); });
    const double t_mv_p = time_best(reps, [&] { csr_matvec(sys.k, x.data(), y2.data()); });
    dmax = 0.0;
    for (int64_t i = 0; i < n; ++i) dmax = std::max(dmax, std::abs(y1[i] - y2[i]));
    print_row("csr_matvec", t_mv_s, t_mv_p, dmax);

    // full PCG solve
    std::vector<double> xs(size_t(n), 0.0), xp(size_t(n), 0.0);
    PcgResult rs, rpar;
    const double t_pcg_s = time_best(1, [&] {
        std::fill(xs.begin(), xs.end(), 0.0);
        rs = jacobi_pcg_serial(sys.k, sys.f, xs, cfg.cg_rel_tol, int(cfg.cg_max_iters));
    });
    const double t_pcg_p = time_best(1, [&] {
        std::fill(xp.begin(), xp.end(), 0.0);
        rpar = jacobi_pcg(sys.k, sys.f, xp, cfg.cg_rel_tol, int(cfg.cg_max_iters));
    });
    dmax = 0.0;
    for (int64_t i = 0; i < n; ++i) dmax = std::max(dmax, std::abs(xs[i] - xp[i]));
    print_row("jacobi_pcg", t_pcg_s, t_pcg_p, dmax);
    std::printf("pcg iterations: serial %d (converged %d), parallel %d (converged %d)\n",
                rs.iterations, int(rs.converged), rpar.iterations, int(rpar.converged));
    return 0;
}
