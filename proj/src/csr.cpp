#include "kt/csr.hpp"

#include <chrono>
#include <cmath>

#include "kt/error.hpp"
#include "kt/parallel.hpp"

namespace kt {

void csr_matvec_serial(const Csr& a, const double* x, double* y) {
    for (int64_t i = 0; i < a.n; ++i) {
        double s = 0.0;
        for (int64_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) s += a.val[k] * x[a.col[k]];
        y[i] = s;
    }
}

void csr_matvec(const Csr& a, const double* x, double* y) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a.n; ++i) {
        double s = 0.0;
        for (int64_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) s += a.val[k] * x[a.col[k]];
        y[i] = s;
    }
}

namespace {

template <bool Parallel>
PcgResult pcg_impl(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                   double rel_tol, int max_iters) {
    const auto t0 = std::chrono::steady_clock::now();
    const int64_t n = a.n;

    std::vector<double> inv_diag(n);
    for (int64_t i = 0; i < n; ++i) {
        const double* d = nullptr;
        for (int64_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            if (a.col[k] == i) { d = &a.val[k]; break; }
        if (!d || *d <= 0.0)
            throw SolverError("stiffness matrix has non-positive diagonal at row " + std::to_string(i), 0.0, 0);
        inv_diag[i] = 1.0 / *d;
    }

    auto dot = [](const double* u, const double* v, int64_t m) {
        return Parallel ? par::dot(u, v, m) : par::dot_serial(u, v, m);
    };

    std::vector<double> r(n), z(n), p(n), q(n);
    if (x.size() != static_cast<size_t>(n)) x.assign(n, 0.0);

    if (Parallel)
        csr_matvec(a, x.data(), q.data());
    else
        csr_matvec_serial(a, x.data(), q.data());
    for (int64_t i = 0; i < n; ++i) r[i] = b[i] - q[i];

    const double bnorm = std::sqrt(dot(b.data(), b.data(), n));
    PcgResult res;
    if (bnorm == 0.0) {
        x.assign(n, 0.0);
        res.converged = true;
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

    for (int64_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r.data(), z.data(), n);
    double rnorm = std::sqrt(dot(r.data(), r.data(), n));

    int it = 0;
    while (rnorm > rel_tol * bnorm && it < max_iters) {
        if (Parallel)
            csr_matvec(a, p.data(), q.data());
        else
            csr_matvec_serial(a, p.data(), q.data());
        const double pq = dot(p.data(), q.data(), n);
        if (pq <= 0.0)
            throw SolverError("conjugate gradient breakdown: non-SPD system (p'Ap <= 0)",
                              rnorm / bnorm, it);
        const double alpha = rz / pq;
        if (Parallel) {
            par::axpy(alpha, p.data(), x.data(), n);
            par::axpy(-alpha, q.data(), r.data(), n);
        } else {
            par::axpy_serial(alpha, p.data(), x.data(), n);
            par::axpy_serial(-alpha, q.data(), r.data(), n);
        }
        for (int64_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        const double rz_new = dot(r.data(), z.data(), n);
        const double beta = rz_new / rz;
        rz = rz_new;
        if (Parallel)
            par::xpay(z.data(), beta, p.data(), n);
        else
            for (int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rnorm = std::sqrt(dot(r.data(), r.data(), n));
        ++it;
    }

    res.iterations = it;
    res.rel_residual = rnorm / bnorm;
    res.converged = rnorm <= rel_tol * bnorm;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace

PcgResult jacobi_pcg(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                     double rel_tol, int max_iters) {
    return pcg_impl<true>(a, b, x, rel_tol, max_iters);
}

PcgResult jacobi_pcg_serial(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                            double rel_tol, int max_iters) {
    return pcg_impl<false>(a, b, x, rel_tol, max_iters);
}

}  // namespace kt
