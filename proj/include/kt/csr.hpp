#pragma once

#include <cstdint>
#include <vector>

namespace kt {

// Compressed sparse row, square, symmetric pattern assumed by the Dirichlet
// elimination in fem.cpp.
struct Csr {
    int64_t n = 0;
    std::vector<int64_t> row_ptr;  // n + 1
    std::vector<int32_t> col;      // nnz
    std::vector<double> val;       // nnz

    int64_t nnz() const { return static_cast<int64_t>(col.size()); }

    // Pointer to the stored entry (i, j), or nullptr if not in the pattern.
    double* entry(int64_t i, int32_t j) {
        for (int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col[k] == j) return &val[k];
        return nullptr;
    }
};

struct PcgResult {
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    double seconds = 0.0;
};

void csr_matvec_serial(const Csr& a, const double* x, double* y);
void csr_matvec(const Csr& a, const double* x, double* y);

// Jacobi-preconditioned conjugate gradients. x holds the initial guess on
// entry and the solution on exit. Terminates on ||r||_2 <= rel_tol * ||b||_2.
PcgResult jacobi_pcg(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                     double rel_tol, int max_iters);

// Serial reference used by tests and the kernel benchmark.
PcgResult jacobi_pcg_serial(const Csr& a, const std::vector<double>& b, std::vector<double>& x,
                            double rel_tol, int max_iters);

}  // namespace kt
