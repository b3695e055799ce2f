#pragma once

#include <span>
#include <vector>

namespace mfg {

// Periodic tridiagonal system, row i:
//   lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]
// with indices taken mod n (n >= 3).
struct CyclicTridiagonal {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;

    explicit CyclicTridiagonal(std::size_t n = 0) : lower(n), diag(n), upper(n) {}
    std::size_t size() const { return diag.size(); }

    CyclicTridiagonal transposed() const;
    std::vector<double> apply(std::span<const double> x) const;
    // Sherman-Morrison on top of the Thomas algorithm. Throws SolverError on
    // a zero pivot or non-finite output.
    std::vector<double> solve(std::span<const double> rhs) const;
};

} // namespace mfg
